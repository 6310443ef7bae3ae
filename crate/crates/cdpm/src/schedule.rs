//! Noise schedule and the closed-form diffusion quantities.
//!
//! A [`NoiseSchedule`] fixes the per-step drift weights β_t and the derived
//! α_t = 1 − β_t and ᾱ_t = ∏_{s≤t} α_s. Everything downstream — forward
//! noising, the posterior mean given a predicted noise, the reverse-step
//! variance — is a pure function of these arrays.
//!
//! Steps are 0-based: `t` ranges over `0..T`, with `t = 0` the least noisy
//! step and `t = T−1` the closest to pure noise. Coefficients are kept and
//! combined in `f64` regardless of the tensor element type, then cast once
//! per call.

use ndarray::{Array, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The fixed variance Σ used by the reverse process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    /// Σ_t = β_t.
    Beta,
    /// Σ_t = β̃_t = (1 − ᾱ_{t−1})/(1 − ᾱ_t) · β_t, with ᾱ_{−1} = 1, so
    /// β̃_0 = 0.
    BetaTilde,
}

/// Precomputed β_t, α_t, ᾱ_t for T steps plus the reverse-variance choice.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    variance_mode: VarianceMode,
}

impl NoiseSchedule {
    /// Number of diffusion steps T.
    pub fn len(&self) -> usize {
        self.beta.len()
    }

    /// True only for the degenerate empty schedule, which no constructor
    /// produces; present for API completeness.
    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn variance_mode(&self) -> VarianceMode {
        self.variance_mode
    }

    /// β_t. Panics if `t` is out of range; call sites validate via the
    /// schedule operations below.
    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    /// α_t = 1 − β_t.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    /// ᾱ_t = ∏_{s≤t} α_s.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t < self.len() {
            Ok(())
        } else {
            Err(Error::StepOutOfRange { t, len: self.len() })
        }
    }

    /// Build a schedule from raw arrays without consistency checks, so tests
    /// can pin hand-computed coefficient combinations that no real schedule
    /// produces.
    #[cfg(test)]
    fn from_raw_parts(
        beta: Vec<f64>,
        alpha: Vec<f64>,
        alpha_bar: Vec<f64>,
        variance_mode: VarianceMode,
    ) -> Self {
        Self { beta, alpha, alpha_bar, variance_mode }
    }
}

/// Build a schedule whose β_t interpolates linearly from `beta_start` at
/// t = 0 to `beta_end` at t = T−1 (a single-step schedule uses `beta_start`).
pub fn make_linear_schedule(
    t_steps: usize,
    beta_start: f64,
    beta_end: f64,
    variance_mode: VarianceMode,
) -> Result<NoiseSchedule> {
    if t_steps == 0 {
        return Err(Error::InvalidConfig("schedule needs at least one step".into()));
    }
    if !beta_start.is_finite() || !beta_end.is_finite() {
        return Err(Error::InvalidConfig("schedule endpoints must be finite".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "schedule endpoints must satisfy 0 < start <= end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let mut beta = Vec::with_capacity(t_steps);
    let mut alpha = Vec::with_capacity(t_steps);
    let mut alpha_bar = Vec::with_capacity(t_steps);
    let mut running = 1.0f64;
    for t in 0..t_steps {
        let frac = if t_steps == 1 { 0.0 } else { t as f64 / (t_steps - 1) as f64 };
        let b = beta_start + (beta_end - beta_start) * frac;
        let a = 1.0 - b;
        running *= a;
        beta.push(b);
        alpha.push(a);
        alpha_bar.push(running);
    }
    Ok(NoiseSchedule { beta, alpha, alpha_bar, variance_mode })
}

/// Serializable recipe for a linear schedule; the config-file face of
/// [`make_linear_schedule`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Number of diffusion steps T.
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub variance_mode: VarianceMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { t_steps: 1000, beta_start: 1e-4, beta_end: 0.02, variance_mode: VarianceMode::Beta }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        make_linear_schedule(self.t_steps, self.beta_start, self.beta_end, self.variance_mode)
    }
}

/// Sample the forward process in closed form:
/// x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε, elementwise.
pub fn forward_sample<F: Scalar, D: Dimension>(
    x0: &Array<F, D>,
    t: usize,
    eps: &Array<F, D>,
    sched: &NoiseSchedule,
) -> Result<Array<F, D>> {
    sched.check_step(t)?;
    let abar = sched.alpha_bar(t);
    affine_combine(
        F::from_f64(abar.sqrt()),
        x0,
        F::from_f64((1.0 - abar).sqrt()),
        eps,
    )
}

/// Mean of the reverse step given a noise estimate:
/// μ = (x_t − β_t/√(1−ᾱ_t)·ε̂)/√α_t, elementwise.
pub fn posterior_mean_from_eps<F: Scalar, D: Dimension>(
    x_t: &Array<F, D>,
    eps_hat: &Array<F, D>,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<Array<F, D>> {
    sched.check_step(t)?;
    let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
    let eps_coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    affine_combine(
        F::from_f64(inv_sqrt_alpha),
        x_t,
        F::from_f64(-eps_coef * inv_sqrt_alpha),
        eps_hat,
    )
}

/// Variance of the reverse step at `t` under the schedule's
/// [`VarianceMode`].
pub fn reverse_variance(t: usize, sched: &NoiseSchedule) -> Result<f64> {
    sched.check_step(t)?;
    Ok(match sched.variance_mode {
        VarianceMode::Beta => sched.beta(t),
        VarianceMode::BetaTilde => {
            let abar_prev = if t == 0 { 1.0 } else { sched.alpha_bar(t - 1) };
            (1.0 - abar_prev) / (1.0 - sched.alpha_bar(t)) * sched.beta(t)
        }
    })
}

/// out = a·x + b·y elementwise, after a shape check. The contiguous fast
/// path and the fallback compute each element identically, so results do not
/// depend on layout or on the `parallel` feature.
fn affine_combine<F: Scalar, D: Dimension>(
    a: F,
    x: &Array<F, D>,
    b: F,
    y: &Array<F, D>,
) -> Result<Array<F, D>> {
    if x.shape() != y.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: y.shape().to_vec(),
        });
    }
    let mut out = Array::zeros(x.raw_dim());
    match (x.as_slice(), y.as_slice()) {
        (Some(xs), Some(ys)) => {
            let os = out.as_slice_mut().expect("freshly allocated arrays are contiguous");
            const CHUNK: usize = 1 << 14;
            crate::exec::for_each_chunk_mut(os, CHUNK, |ci, oc| {
                let base = ci * CHUNK;
                for (i, o) in oc.iter_mut().enumerate() {
                    *o = a * xs[base + i] + b * ys[base + i];
                }
            });
        }
        _ => {
            ndarray::Zip::from(&mut out).and(x).and(y).for_each(|o, &xv, &yv| {
                *o = a * xv + b * yv;
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use ndarray::{Array1, Array3};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn single_step_schedule() {
        let s = make_linear_schedule(1, 0.5, 0.5, VarianceMode::Beta).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.beta(0), 0.5);
        assert_eq!(s.alpha(0), 0.5);
        assert_eq!(s.alpha_bar(0), 0.5);
    }

    #[test]
    fn three_step_products_by_hand() {
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        let want = [0.9, 0.72, 0.504]; // 0.9, 0.9*0.8, 0.9*0.8*0.7
        for (t, w) in want.iter().enumerate() {
            assert!((s.alpha_bar(t) - w).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn long_schedule_matches_log_space_product() {
        let s = make_linear_schedule(1000, 1e-4, 0.02, VarianceMode::Beta).unwrap();
        let log_sum: f64 = (0..1000).map(|t| s.alpha(t).ln()).sum();
        let via_logs = log_sum.exp();
        let rel = (s.alpha_bar(999) - via_logs).abs() / via_logs;
        assert!(rel < 1e-10, "relative error {rel}");
    }

    #[test]
    fn rejects_bad_endpoints() {
        assert!(make_linear_schedule(0, 0.1, 0.2, VarianceMode::Beta).is_err());
        assert!(make_linear_schedule(10, 0.0, 0.2, VarianceMode::Beta).is_err());
        assert!(make_linear_schedule(10, 0.2, 0.1, VarianceMode::Beta).is_err());
        assert!(make_linear_schedule(10, 0.1, 1.0, VarianceMode::Beta).is_err());
        assert!(make_linear_schedule(10, f64::NAN, 0.2, VarianceMode::Beta).is_err());
        assert!(make_linear_schedule(10, 0.1, f64::INFINITY, VarianceMode::Beta).is_err());
    }

    #[test]
    fn forward_sample_degenerate_cases() {
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        let x0 = Array3::<f64>::from_elem((2, 3, 4), 2.0);
        let zero = Array3::<f64>::zeros((2, 3, 4));

        let xt = forward_sample(&x0, 1, &zero, &s).unwrap();
        for &v in xt.iter() {
            assert!((v - 2.0 * 0.72f64.sqrt()).abs() < 1e-15);
        }

        let eps = Array3::<f64>::from_elem((2, 3, 4), -1.5);
        let xt = forward_sample(&zero, 1, &eps, &s).unwrap();
        for &v in xt.iter() {
            assert!((v + 1.5 * 0.28f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_sample_monte_carlo_moments() {
        let s = make_linear_schedule(50, 1e-4, 0.02, VarianceMode::Beta).unwrap();
        let t = 30;
        let x0 = Array1::<f64>::from_elem(10_000, 1.5);
        let mut rng = substream(11, "mc-forward");
        let eps = Array1::from_shape_fn(10_000, |_| f64::std_normal(&mut rng));
        let xt = forward_sample(&x0, t, &eps, &s).unwrap();

        let mean = xt.mean().unwrap();
        let var = xt.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (xt.len() - 1) as f64;
        let want_mean = s.alpha_bar(t).sqrt() * 1.5;
        let want_var = 1.0 - s.alpha_bar(t);
        assert!(
            (mean - want_mean).abs() < 0.02 * want_mean.abs(),
            "mean {mean} vs {want_mean}"
        );
        assert!((var - want_var).abs() < 0.02 * want_var, "var {var} vs {want_var}");
    }

    #[test]
    fn forward_sample_validates_inputs() {
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        let x0 = Array3::<f32>::zeros((2, 2, 2));
        let eps_bad = Array3::<f32>::zeros((2, 2, 3));
        assert!(matches!(
            forward_sample(&x0, 0, &eps_bad, &s),
            Err(Error::ShapeMismatch { .. })
        ));
        let eps = Array3::<f32>::zeros((2, 2, 2));
        assert!(matches!(
            forward_sample(&x0, 3, &eps, &s),
            Err(Error::StepOutOfRange { t: 3, len: 3 })
        ));
    }

    #[test]
    fn posterior_mean_zero_eps_collapses() {
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        let xt = Array1::<f64>::from_elem(5, 0.7);
        let zero = Array1::<f64>::zeros(5);
        let mu = posterior_mean_from_eps(&xt, &zero, 2, &s).unwrap();
        for &v in mu.iter() {
            assert!((v - 0.7 / 0.7f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn posterior_mean_hand_value() {
        // β, α, ᾱ chosen independently (no real schedule has this triple) to
        // pin the formula itself: μ = −(0.1/√0.28)/√0.8.
        let s = NoiseSchedule::from_raw_parts(
            vec![0.1],
            vec![0.8],
            vec![0.72],
            VarianceMode::Beta,
        );
        let xt = Array1::<f64>::zeros(1);
        let eps = Array1::<f64>::ones(1);
        let mu = posterior_mean_from_eps(&xt, &eps, 0, &s).unwrap();
        let want = -(0.1 / 0.28f64.sqrt()) / 0.8f64.sqrt();
        assert!((want + 0.21129).abs() < 1e-5, "oracle transcription");
        assert!((mu[0] - want).abs() < 1e-12);
    }

    #[test]
    fn posterior_mean_symbolic_expansion() {
        // Push a scalar x0 through the closed-form forward at t=2 (T=3) with
        // known ε, then reverse with ε̂ = ε. Expanding by hand:
        //   μ = √(ᾱ_2/α_2)·x0 + (1−ᾱ_2 − β_2)/(√(1−ᾱ_2)·√α_2)·ε
        //     = √0.72·x0 + 0.196/(√0.496·√0.7)·ε
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        for (x0v, epsv) in [(1.0f64, 0.5f64), (-0.3, 2.0), (0.0, 1.0), (2.5, -1.25)] {
            let x0 = Array1::from_elem(1, x0v);
            let eps = Array1::from_elem(1, epsv);
            let xt = forward_sample(&x0, 2, &eps, &s).unwrap();
            let mu = posterior_mean_from_eps(&xt, &eps, 2, &s).unwrap();
            let want = 0.72f64.sqrt() * x0v
                + 0.196 / (0.496f64.sqrt() * 0.7f64.sqrt()) * epsv;
            assert!((mu[0] - want).abs() < 1e-12, "x0={x0v} eps={epsv}");
        }
    }

    #[test]
    fn reverse_variance_modes() {
        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::Beta).unwrap();
        assert_eq!(reverse_variance(1, &s).unwrap(), s.beta(1));

        let s = make_linear_schedule(3, 0.1, 0.3, VarianceMode::BetaTilde).unwrap();
        assert_eq!(reverse_variance(0, &s).unwrap(), 0.0);
        let want: f64 = (1.0 - 0.72) / (1.0 - 0.504) * 0.3;
        assert!((want - 0.16935).abs() < 5e-6, "oracle transcription");
        assert!((reverse_variance(2, &s).unwrap() - want).abs() < 1e-15);
        assert!(reverse_variance(3, &s).is_err());
    }

    #[test]
    fn kernel_chain_matches_closed_form_moments() {
        // Propagate mean and variance exactly through the one-step recursion
        // x_s = √(1−β_s)·x_{s−1} + √β_s·ε_s starting from a point mass at
        // x0 = 1: the result must be the closed-form √ᾱ_t / (1−ᾱ_t).
        let s = make_linear_schedule(1000, 1e-4, 0.02, VarianceMode::Beta).unwrap();
        let (mut m, mut v) = (1.0f64, 0.0f64);
        for t in 0..s.len() {
            m *= s.alpha(t).sqrt();
            v = s.alpha(t) * v + s.beta(t);
            let em = s.alpha_bar(t).sqrt();
            let ev = 1.0 - s.alpha_bar(t);
            assert!(close(m, em, 1e-12), "mean at t={t}: {m} vs {em}");
            assert!(close(v, ev, 1e-12), "var at t={t}: {v} vs {ev}");
        }
    }

    proptest! {
        #[test]
        fn alpha_bar_strictly_decreasing(
            t_steps in 1usize..200,
            start in 1e-5f64..0.3,
            spread in 0.0f64..0.5,
        ) {
            let end = (start + spread).min(0.999);
            let s = make_linear_schedule(t_steps, start, end, VarianceMode::Beta).unwrap();
            for t in 1..s.len() {
                prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
                prop_assert!(s.alpha_bar(t) > 0.0 && s.alpha_bar(t) < 1.0);
            }
        }

        #[test]
        fn posterior_mean_superposition(
            x1 in proptest::collection::vec(-3.0f64..3.0, 4),
            x2 in proptest::collection::vec(-3.0f64..3.0, 4),
            e1 in proptest::collection::vec(-3.0f64..3.0, 4),
            e2 in proptest::collection::vec(-3.0f64..3.0, 4),
            t in 0usize..50,
        ) {
            let s = make_linear_schedule(50, 1e-3, 0.05, VarianceMode::Beta).unwrap();
            let (x1, x2) = (Array1::from(x1), Array1::from(x2));
            let (e1, e2) = (Array1::from(e1), Array1::from(e2));
            let joint = posterior_mean_from_eps(&(&x1 + &x2), &(&e1 + &e2), t, &s).unwrap();
            let split = posterior_mean_from_eps(&x1, &e1, t, &s).unwrap()
                + posterior_mean_from_eps(&x2, &e2, t, &s).unwrap();
            for (a, b) in joint.iter().zip(split.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
