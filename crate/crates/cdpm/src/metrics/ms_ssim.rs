//! Multi-scale structural similarity.
//!
//! The classic pyramid formulation: at every scale, Gaussian-windowed local
//! statistics yield a contrast/structure term; the luminance term enters
//! only at the coarsest scale; the per-scale means combine as a weighted
//! geometric product. Works on 2D slices and 3D volumes alike — the window
//! and the 2× mean-pool downsampling apply separably along every axis.
//!
//! Scale handling: up to five scales with the canonical exponent weights
//! [0.0448, 0.2856, 0.3001, 0.2363, 0.1333] (used verbatim). When the input
//! is too small for five scales, the count auto-reduces to the deepest
//! pyramid whose coarsest level still fits one window per axis, and the
//! leading weights are renormalized to sum to one. Negative per-scale means
//! clamp to zero, which pins the result into [0, 1] for nonnegative inputs.

use ndarray::{Array2, Array3, ArrayD, Axis};

use crate::error::{Error, Result};

/// Canonical five-scale exponent weights, coarsest last.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Gaussian window support per axis.
pub const WINDOW_WIDTH: usize = 11;

/// Gaussian window standard deviation, in voxels.
pub const WINDOW_SIGMA: f64 = 1.5;

// Stability constants (0.01 L)² and (0.03 L)² with intensity range L = 1.
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Normalized Gaussian window of width [`WINDOW_WIDTH`].
fn gaussian_window() -> [f64; WINDOW_WIDTH] {
    let center = (WINDOW_WIDTH - 1) as f64 / 2.0;
    let mut w = [0.0; WINDOW_WIDTH];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Valid-mode 1D convolution along one axis: the axis shrinks by
/// `w.len() − 1`, all other axes pass through.
fn conv_axis_valid(x: &ArrayD<f64>, w: &[f64], axis: usize) -> ArrayD<f64> {
    let mut shape = x.shape().to_vec();
    let out_len = shape[axis] + 1 - w.len();
    shape[axis] = out_len;
    let mut y = ArrayD::<f64>::zeros(shape);
    for (xl, mut yl) in x.lanes(Axis(axis)).into_iter().zip(y.lanes_mut(Axis(axis))) {
        for i in 0..out_len {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                acc += wj * xl[i + j];
            }
            yl[i] = acc;
        }
    }
    y
}

/// Separable Gaussian blur, valid mode, over every axis.
fn blur(x: &ArrayD<f64>, w: &[f64]) -> ArrayD<f64> {
    let mut out = conv_axis_valid(x, w, 0);
    for axis in 1..x.ndim() {
        out = conv_axis_valid(&out, w, axis);
    }
    out
}

/// 2× mean-pool along one axis; a trailing odd element is dropped.
fn halve_axis(x: &ArrayD<f64>, axis: usize) -> ArrayD<f64> {
    let mut shape = x.shape().to_vec();
    let out_len = shape[axis] / 2;
    shape[axis] = out_len;
    let mut y = ArrayD::<f64>::zeros(shape);
    for (xl, mut yl) in x.lanes(Axis(axis)).into_iter().zip(y.lanes_mut(Axis(axis))) {
        for i in 0..out_len {
            yl[i] = 0.5 * (xl[2 * i] + xl[2 * i + 1]);
        }
    }
    y
}

fn downsample2(x: &ArrayD<f64>) -> ArrayD<f64> {
    let mut out = halve_axis(x, 0);
    for axis in 1..x.ndim() {
        out = halve_axis(&out, axis);
    }
    out
}

/// Deepest pyramid (capped at five scales) whose coarsest level still holds
/// one full window along every axis. Zero when even the input does not.
fn feasible_scales(shape: &[usize]) -> usize {
    let mut dims = shape.to_vec();
    let mut scales = 0;
    while scales < MS_SSIM_WEIGHTS.len() && dims.iter().all(|&d| d >= WINDOW_WIDTH) {
        scales += 1;
        for d in &mut dims {
            *d /= 2;
        }
    }
    scales
}

/// The exponent weights actually used for `m` scales: verbatim for the full
/// five, the renormalized leading prefix otherwise.
fn scale_weights(m: usize) -> Vec<f64> {
    if m == MS_SSIM_WEIGHTS.len() {
        return MS_SSIM_WEIGHTS.to_vec();
    }
    let head = &MS_SSIM_WEIGHTS[..m];
    let sum: f64 = head.iter().sum();
    head.iter().map(|w| w / sum).collect()
}

fn mean(x: &ArrayD<f64>) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn ms_ssim_nd(mut a: ArrayD<f64>, mut b: ArrayD<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    let m = feasible_scales(a.shape());
    if m == 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![WINDOW_WIDTH; a.ndim()],
            got: a.shape().to_vec(),
        });
    }
    let w = gaussian_window();
    let weights = scale_weights(m);
    let mut score = 1.0;
    for (scale, &weight) in weights.iter().enumerate() {
        let mu_a = blur(&a, &w);
        let mu_b = blur(&b, &w);
        let mut sigma_aa = blur(&(&a * &a), &w);
        let mut sigma_bb = blur(&(&b * &b), &w);
        let mut sigma_ab = blur(&(&a * &b), &w);
        sigma_aa.zip_mut_with(&mu_a, |s, &m| *s -= m * m);
        sigma_bb.zip_mut_with(&mu_b, |s, &m| *s -= m * m);
        ndarray::Zip::from(&mut sigma_ab).and(&mu_a).and(&mu_b).for_each(|s, &ma, &mb| {
            *s -= ma * mb;
        });

        let mut cs = sigma_ab;
        ndarray::Zip::from(&mut cs).and(&sigma_aa).and(&sigma_bb).for_each(|s, &va, &vb| {
            *s = (2.0 * *s + C2) / (va + vb + C2);
        });
        let term = if scale + 1 == m {
            // Coarsest scale: fold in luminance pointwise before averaging.
            ndarray::Zip::from(&mut cs).and(&mu_a).and(&mu_b).for_each(|s, &ma, &mb| {
                *s *= (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
            });
            mean(&cs)
        } else {
            mean(&cs)
        };
        score *= term.max(0.0).powf(weight);
        if scale + 1 < m {
            a = downsample2(&a);
            b = downsample2(&b);
        }
    }
    Ok(score)
}

fn to_f64_dyn<D: ndarray::Dimension>(x: &ndarray::Array<f32, D>) -> ArrayD<f64> {
    x.mapv(|v| v as f64).into_dyn()
}

/// Multi-scale structural similarity of two volumes. Every axis must hold
/// at least one window ([`WINDOW_WIDTH`] voxels).
pub fn ms_ssim(a: &Array3<f32>, b: &Array3<f32>) -> Result<f64> {
    ms_ssim_nd(to_f64_dyn(a), to_f64_dyn(b))
}

/// Multi-scale structural similarity of two 2D slices.
pub fn ms_ssim_2d(a: &Array2<f32>, b: &Array2<f32>) -> Result<f64> {
    ms_ssim_nd(to_f64_dyn(a), to_f64_dyn(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;

    fn random_image(side: usize, seed: u64) -> Array2<f32> {
        let mut rng = substream(seed, "ms-ssim-img");
        Array2::from_shape_fn((side, side), |_| rng.random_range(0.0..=1.0))
    }

    fn random_volume(side: usize, seed: u64) -> Array3<f32> {
        let mut rng = substream(seed, "ms-ssim-vol");
        Array3::from_shape_fn((side, side, side), |_| rng.random_range(0.0..=1.0))
    }

    #[test]
    fn self_similarity_is_one() {
        let img = random_image(64, 1);
        assert!((ms_ssim_2d(&img, &img).unwrap() - 1.0).abs() < 1e-9);
        let vol = random_volume(16, 2);
        assert!((ms_ssim(&vol, &vol).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn anti_correlated_images_score_low() {
        // A pattern avoiding mid-gray, so inversion flips every local
        // covariance: the structure term goes negative and clamps to zero.
        let mut rng = substream(3, "ms-ssim-anti");
        let img =
            Array2::from_shape_fn((64, 64), |_| if rng.random::<bool>() { 0.9f32 } else { 0.1 });
        let inv = img.mapv(|v| 1.0 - v);
        let score = ms_ssim_2d(&img, &inv).unwrap();
        assert!(score < 0.2, "anti-correlated pair scored {score}");
    }

    #[test]
    fn symmetric_in_its_arguments() {
        let a = random_image(48, 4);
        let b = random_image(48, 5);
        let ab = ms_ssim_2d(&a, &b).unwrap();
        let ba = ms_ssim_2d(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn constant_images_match_the_closed_form() {
        // Blur-invariant inputs collapse the statistics: every variance and
        // covariance is zero, so each scale's structure term is exactly 1
        // and only the coarsest-scale luminance survives:
        //   l = (2pq + C1)/(p² + q² + C1), result = l^w_last.
        let p = 0.2f64;
        let q = 0.6f64;
        let a = Array2::from_elem((32, 32), p as f32);
        let b = Array2::from_elem((32, 32), q as f32);
        // 32 → 16 fits a window, 8 does not: two scales.
        let weights = scale_weights(2);
        let p = a[[0, 0]] as f64;
        let q = b[[0, 0]] as f64;
        let lum = (2.0 * p * q + C1) / (p * p + q * q + C1);
        let want = lum.powf(weights[1]);
        let got = ms_ssim_2d(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn scale_count_tracks_image_size() {
        assert_eq!(feasible_scales(&[128, 128]), 4); // 128, 64, 32, 16; 8 fails
        assert_eq!(feasible_scales(&[176, 176]), 5); // full pyramid
        assert_eq!(feasible_scales(&[16, 16, 16]), 1);
        assert_eq!(feasible_scales(&[10, 64]), 0);
        let w = scale_weights(4);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(scale_weights(5), MS_SSIM_WEIGHTS.to_vec());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn range_and_reflexivity_hold_on_arbitrary_images(
            a in proptest::collection::vec(0.0f32..=1.0, 256),
            b in proptest::collection::vec(0.0f32..=1.0, 256),
        ) {
            let a = Array2::from_shape_vec((16, 16), a).unwrap();
            let b = Array2::from_shape_vec((16, 16), b).unwrap();
            let s = ms_ssim_2d(&a, &b).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&s), "scored {}", s);
            let refl = ms_ssim_2d(&a, &a).unwrap();
            proptest::prop_assert!((refl - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn more_noise_scores_lower() {
        let base = random_image(64, 9);
        let mut rng = substream(10, "ms-ssim-noise");
        let jitter: Array2<f32> = Array2::from_shape_fn((64, 64), |_| rng.random_range(-1.0..=1.0));
        let small = &base + &jitter.mapv(|v| v * 0.02);
        let large = &base + &jitter.mapv(|v| v * 0.3);
        let s_small = ms_ssim_2d(&base, &small).unwrap();
        let s_large = ms_ssim_2d(&base, &large).unwrap();
        assert!(s_small > s_large, "{s_small} vs {s_large}");
    }

    #[test]
    fn rejects_mismatched_and_undersized_inputs() {
        let a = random_image(32, 11);
        let b = random_image(16, 12);
        assert!(matches!(ms_ssim_2d(&a, &b), Err(Error::ShapeMismatch { .. })));
        let tiny = random_image(8, 13);
        assert!(matches!(ms_ssim_2d(&tiny, &tiny), Err(Error::ShapeMismatch { .. })));
    }
}
