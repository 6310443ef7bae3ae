//! Condition/target slice-set sampling for training and the deterministic
//! staging plan used at generation time.
//!
//! Training draws pairs of disjoint index sets (C, P) under a slice budget;
//! generation walks a fixed plan where each stage conditions on slices the
//! previous stages produced. Both produce [`IndexSets`], so the denoiser
//! sees the same bundle layout in both regimes.

use std::collections::BTreeMap;

use ndarray::{Array2, Array3, Axis};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Disjoint sorted condition (C) and target (P) slice index sets for a
/// volume of `depth` slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSets {
    cond: Vec<usize>,
    target: Vec<usize>,
    depth: usize,
}

impl IndexSets {
    /// Validate and construct: both lists sorted, within `[0, depth)`,
    /// disjoint, and at least one target.
    pub fn new(mut cond: Vec<usize>, mut target: Vec<usize>, depth: usize) -> Result<Self> {
        cond.sort_unstable();
        target.sort_unstable();
        if target.is_empty() {
            return Err(Error::EmptyInput("target set must hold at least one slice".into()));
        }
        for &i in cond.iter().chain(&target) {
            if i >= depth {
                return Err(Error::IndexOutOfRange { index: i, depth });
            }
        }
        if cond.windows(2).any(|w| w[0] == w[1]) || target.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate slice index".into()));
        }
        // Both sorted: a linear merge detects overlap.
        let (mut a, mut b) = (cond.iter().peekable(), target.iter().peekable());
        while let (Some(&&x), Some(&&y)) = (a.peek(), b.peek()) {
            match x.cmp(&y) {
                std::cmp::Ordering::Equal => {
                    return Err(Error::InvalidConfig(format!(
                        "slice {x} is both condition and target"
                    )))
                }
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
            }
        }
        Ok(Self { cond, target, depth })
    }

    pub fn cond(&self) -> &[usize] {
        &self.cond
    }

    pub fn target(&self) -> &[usize] {
        &self.target
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Total bundle size len(C) + len(P).
    pub fn bundle_len(&self) -> usize {
        self.cond.len() + self.target.len()
    }

    /// Enforce the slice budget len(C) + len(P) ≤ `tau_max`.
    pub fn check_budget(&self, tau_max: usize) -> Result<()> {
        if self.bundle_len() > tau_max {
            Err(Error::BudgetViolation { got: self.bundle_len(), budget: tau_max })
        } else {
            Ok(())
        }
    }
}

/// How training draws (C, P).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerPolicy {
    /// Slice budget: len(C) + len(P) never exceeds this.
    pub tau_max: usize,
    /// Probability of forcing C = ∅ so the unconditional task stays in the
    /// training mix.
    pub p_unconditional: f64,
    /// Probability that a set is placed as one contiguous block rather than
    /// an arbitrary subset (drawn independently for C and for P).
    pub contiguous_prob: f64,
    /// Seed for the index-drawing stream, recorded in the run config.
    pub rng_seed: u64,
}

impl Default for SamplerPolicy {
    fn default() -> Self {
        Self { tau_max: 20, p_unconditional: 0.2, contiguous_prob: 0.5, rng_seed: 0 }
    }
}

impl SamplerPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.tau_max < 2 {
            return Err(Error::InvalidConfig(format!(
                "tau_max must be at least 2, got {}",
                self.tau_max
            )));
        }
        for (name, p) in [
            ("p_unconditional", self.p_unconditional),
            ("contiguous_prob", self.contiguous_prob),
        ] {
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidConfig(format!("{name} must be in [0,1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Draw one (C, P) pair.
///
/// Sizes first: with probability `p_unconditional` the pair is (0, lp) with
/// lp uniform in [1, min(τ, D)]; otherwise (lc, lp) is uniform over all
/// pairs with lc ≥ 0, lp ≥ 1, lc + lp ≤ min(τ, D). Then placement: C lands
/// as a contiguous block or arbitrary subset per `contiguous_prob`; P
/// likewise, choosing uniformly among contiguous blocks that avoid C and
/// falling back to an arbitrary subset of the complement when none exists.
pub fn sample_index_sets<R: Rng + ?Sized>(
    policy: &SamplerPolicy,
    depth: usize,
    rng: &mut R,
) -> Result<IndexSets> {
    policy.validate()?;
    if depth < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 slices to split into sets, got {depth}"
        )));
    }
    let m = policy.tau_max.min(depth);

    let (lc, lp) = if rng.random::<f64>() < policy.p_unconditional {
        (0, rng.random_range(1..=m))
    } else {
        // Uniform over {(lc, lp) : lc ≥ 0, lp ≥ 1, lc + lp ≤ m}; there are
        // m(m+1)/2 such pairs, ordered lc-major.
        let total = m * (m + 1) / 2;
        let mut k = rng.random_range(0..total);
        let mut lc = 0;
        loop {
            let here = m - lc; // lp choices for this lc
            if k < here {
                break (lc, k + 1);
            }
            k -= here;
            lc += 1;
        }
    };

    let cond = if lc == 0 {
        Vec::new()
    } else if rng.random::<f64>() < policy.contiguous_prob {
        let start = rng.random_range(0..=depth - lc);
        (start..start + lc).collect()
    } else {
        let mut v = index::sample(rng, depth, lc).into_vec();
        v.sort_unstable();
        v
    };

    let in_cond = |i: usize| cond.binary_search(&i).is_ok();
    let target = if rng.random::<f64>() < policy.contiguous_prob {
        let starts: Vec<usize> = (0..=depth - lp)
            .filter(|&s| (s..s + lp).all(|i| !in_cond(i)))
            .collect();
        if starts.is_empty() {
            sample_from_complement(rng, depth, &cond, lp)
        } else {
            let s = starts[rng.random_range(0..starts.len())];
            (s..s + lp).collect()
        }
    } else {
        sample_from_complement(rng, depth, &cond, lp)
    };

    let sets = IndexSets::new(cond, target, depth)?;
    sets.check_budget(policy.tau_max)?;
    Ok(sets)
}

fn sample_from_complement<R: Rng + ?Sized>(
    rng: &mut R,
    depth: usize,
    cond: &[usize],
    amount: usize,
) -> Vec<usize> {
    let complement: Vec<usize> = (0..depth).filter(|i| cond.binary_search(i).is_err()).collect();
    let mut picks: Vec<usize> = index::sample(rng, complement.len(), amount)
        .into_iter()
        .map(|j| complement[j])
        .collect();
    picks.sort_unstable();
    picks
}

/// The fixed generation-time schedule of stages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagingPlan {
    stages: Vec<IndexSets>,
    stage_target: usize,
    stage_cond: usize,
    depth: usize,
}

impl StagingPlan {
    pub fn stages(&self) -> &[IndexSets] {
        &self.stages
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn stage_target(&self) -> usize {
        self.stage_target
    }

    pub fn stage_cond(&self) -> usize {
        self.stage_cond
    }
}

/// Build the ascending staged plan: stage 0 starts from pure noise and
/// targets the first `stage_target` slices; each later stage conditions on
/// the `stage_cond` slices just below its block (fewer if not that many
/// exist yet) and targets the next block, the final one truncated to what
/// remains. The largest stage bundle must fit in `tau_max`.
pub fn staging_plan(
    depth: usize,
    stage_target: usize,
    stage_cond: usize,
    tau_max: usize,
) -> Result<StagingPlan> {
    if depth == 0 {
        return Err(Error::EmptyInput("cannot plan stages for an empty volume".into()));
    }
    if stage_target == 0 {
        return Err(Error::InvalidConfig("stage_target must be at least 1".into()));
    }
    let mut stages = Vec::new();
    let mut next = 0;
    while next < depth {
        let t_end = (next + stage_target).min(depth);
        let c_start = next.saturating_sub(if next == 0 { 0 } else { stage_cond });
        let cond: Vec<usize> = (c_start..next).collect();
        let target: Vec<usize> = (next..t_end).collect();
        let sets = IndexSets::new(cond, target, depth)?;
        sets.check_budget(tau_max)?;
        stages.push(sets);
        next = t_end;
    }
    Ok(StagingPlan { stages, stage_target, stage_cond, depth })
}

/// The denoiser's input bundle: condition and target slices interleaved in
/// ascending absolute order, with per-slot flags and the time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedInput<F> {
    /// (K, H, W) stack, K = len(C) + len(P), ascending absolute index.
    pub slices: Array3<F>,
    /// Absolute slice index per slot.
    pub indices: Vec<usize>,
    /// True where the slot holds a clean condition slice.
    pub is_cond: Vec<bool>,
    /// Diffusion step the noisy target slices sit at.
    pub t: usize,
}

impl<F: Scalar> ConditionedInput<F> {
    /// Extract the noisy target slices, in ascending index order.
    pub fn target_stack(&self) -> Array3<F> {
        self.select(false)
    }

    /// Extract the condition slices, in ascending index order.
    pub fn cond_stack(&self) -> Array3<F> {
        self.select(true)
    }

    fn select(&self, cond: bool) -> Array3<F> {
        let picks: Vec<usize> = (0..self.indices.len())
            .filter(|&k| self.is_cond[k] == cond)
            .collect();
        let (_, h, w) = self.slices.dim();
        let mut out = Array3::zeros((picks.len(), h, w));
        for (slot, &k) in picks.iter().enumerate() {
            out.index_axis_mut(Axis(0), slot)
                .assign(&self.slices.index_axis(Axis(0), k));
        }
        out
    }
}

/// Bundle clean condition slices and noisy target slices into one stack.
/// `volume_slices` must provide every index in `sets.cond`; `noisy_targets`
/// must hold exactly len(P) slices, ascending, matching shape.
pub fn assemble_subvolume<F: Scalar>(
    volume_slices: &BTreeMap<usize, Array2<F>>,
    sets: &IndexSets,
    noisy_targets: &Array3<F>,
    t: usize,
) -> Result<ConditionedInput<F>> {
    let (n, h, w) = noisy_targets.dim();
    if n != sets.target().len() {
        return Err(Error::ShapeMismatch {
            expected: vec![sets.target().len(), h, w],
            got: vec![n, h, w],
        });
    }
    let k = sets.bundle_len();
    let mut slices = Array3::zeros((k, h, w));
    let mut indices = Vec::with_capacity(k);
    let mut is_cond = Vec::with_capacity(k);

    // Merge the two sorted lists into ascending absolute order.
    let (mut ci, mut ti) = (0, 0);
    for slot in 0..k {
        let take_cond = match (sets.cond().get(ci), sets.target().get(ti)) {
            (Some(&c), Some(&p)) => c < p,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => unreachable!("slot count equals bundle length"),
        };
        if take_cond {
            let idx = sets.cond()[ci];
            let slice = volume_slices
                .get(&idx)
                .ok_or(Error::MissingConditionSlice { index: idx })?;
            if slice.dim() != (h, w) {
                return Err(Error::ShapeMismatch {
                    expected: vec![h, w],
                    got: vec![slice.dim().0, slice.dim().1],
                });
            }
            slices.index_axis_mut(Axis(0), slot).assign(slice);
            indices.push(idx);
            is_cond.push(true);
            ci += 1;
        } else {
            slices
                .index_axis_mut(Axis(0), slot)
                .assign(&noisy_targets.index_axis(Axis(0), ti));
            indices.push(sets.target()[ti]);
            is_cond.push(false);
            ti += 1;
        }
    }
    Ok(ConditionedInput { slices, indices, is_cond, t })
}

/// Gather whole slices of a volume stack by absolute index.
pub fn gather_slices<F: Scalar>(volume: &Array3<F>, indices: &[usize]) -> Result<Array3<F>> {
    let (d, h, w) = volume.dim();
    let mut out = Array3::zeros((indices.len(), h, w));
    for (slot, &i) in indices.iter().enumerate() {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, depth: d });
        }
        out.index_axis_mut(Axis(0), slot)
            .assign(&volume.index_axis(Axis(0), i));
    }
    Ok(out)
}
