//! Distribution-level scoring of synthetic volume sets: pairwise MS-SSIM
//! diversity, kernel MMD against a real set, per-view Fréchet distances,
//! and nearest-real matching. [`evaluate`] bundles them into one JSON-ready
//! report stamped with a digest of the exact metric configuration.

pub mod frechet;
pub mod mmd;
pub mod ms_ssim;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::canon::config_digest;
use crate::data::ViewAxis;
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::rng::substream;

pub use frechet::{
    extract_view_features, frechet_from_features, frechet_view_distance, load_feature_matrix,
    save_feature_matrix, ExtractorConfig, FeatureExtractor, FrechetOutcome,
};
pub use mmd::{mmd, MmdConfig, MmdEstimator, MmdOutcome};
pub use ms_ssim::{ms_ssim, ms_ssim_2d, MS_SSIM_WEIGHTS};

/// Controls for the pairwise-diversity statistic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiversityConfig {
    /// Above this many unordered pairs, a seeded subsample of exactly this
    /// size is scored instead of the full set.
    pub max_pairs: usize,
    /// Seed of the pair subsample.
    pub subsample_seed: u64,
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self { max_pairs: 200, subsample_seed: 0 }
    }
}

impl DiversityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_pairs == 0 {
            return Err(Error::InvalidConfig("max_pairs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Mean ± sd of pairwise MS-SSIM, plus how many pairs produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseStats {
    pub mean: f64,
    /// Sample standard deviation over the scored pairs (0 for one pair).
    pub sd: f64,
    pub pairs_total: usize,
    pub pairs_used: usize,
    pub subsampled: bool,
}

/// The `k`-th unordered pair (i, j), i < j, in lexicographic order over `n`
/// items.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = n - 1 - i;
        if k < row {
            return (i, i + 1 + k);
        }
        k -= row;
        i += 1;
    }
}

/// Choose `take` distinct values from `0..total` with a seeded partial
/// Fisher–Yates shuffle; order is the draw order.
fn sample_distinct(total: usize, take: usize, rng: &mut crate::rng::CdpmRng) -> Vec<usize> {
    use rand::Rng;
    let mut swapped = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(take);
    for i in 0..take {
        let j = rng.random_range(i..total);
        let vi = swapped.get(&i).copied().unwrap_or(i);
        let vj = swapped.get(&j).copied().unwrap_or(j);
        out.push(vj);
        swapped.insert(j, vi);
    }
    out
}

/// Mean pairwise MS-SSIM over a set — the diversity statistic (lower means
/// more diverse). Scores all unordered pairs, or a seeded subsample when the
/// pair count exceeds `config.max_pairs`.
pub fn pairwise_diversity(
    set: &[Array3<f32>],
    config: &DiversityConfig,
) -> Result<PairwiseStats> {
    config.validate()?;
    let n = set.len();
    if n < 2 {
        return Err(Error::EmptyInput("pairwise diversity needs at least two volumes".into()));
    }
    let pairs_total = n * (n - 1) / 2;
    let chosen: Vec<usize> = if pairs_total <= config.max_pairs {
        (0..pairs_total).collect()
    } else {
        let mut rng = substream(config.subsample_seed, "pairwise-subsample");
        sample_distinct(pairs_total, config.max_pairs, &mut rng)
    };
    let scores: Vec<Result<f64>> = map_indexed(chosen.len(), |idx| {
        let (i, j) = unrank_pair(chosen[idx], n);
        ms_ssim(&set[i], &set[j])
    });
    let mut values = Vec::with_capacity(scores.len());
    for s in scores {
        values.push(s?);
    }
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(PairwiseStats {
        mean,
        sd,
        pairs_total,
        pairs_used: values.len(),
        subsampled: pairs_total > config.max_pairs,
    })
}

/// The real volume most similar to `synth` under MS-SSIM: (index, score),
/// ties resolved to the lowest index.
pub fn nearest_real(synth: &Array3<f32>, reals: &[Array3<f32>]) -> Result<(usize, f64)> {
    if reals.is_empty() {
        return Err(Error::EmptyInput("nearest-real matching against an empty set".into()));
    }
    let scores: Vec<Result<f64>> = map_indexed(reals.len(), |i| ms_ssim(synth, &reals[i]));
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best)
}

/// Everything that determines the metric values. Its digest stamps the
/// report, so any change in methodology is visible downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub diversity: DiversityConfig,
    pub mmd: MmdConfig,
    pub frechet: ExtractorConfig,
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        self.diversity.validate()?;
        self.mmd.validate()?;
        self.frechet.validate()
    }
}

/// MMD as reported: the value plus its kernel description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmdSummary {
    pub value: f64,
    pub kernel: String,
}

/// Per-view Fréchet distances, one per anatomical plane.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrechetSummary {
    pub axial: f64,
    pub coronal: f64,
    pub sagittal: f64,
    pub feature_dim: usize,
    /// True when any view needed covariance shrinkage (fewer slices than
    /// feature dimensions).
    pub shrinkage_applied: bool,
}

/// The full evaluation of a synthetic set against a real set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    /// Diversity of the synthetic set.
    pub ms_ssim_pairwise: PairwiseStats,
    /// Synthetic-vs-real distribution distance (unbiased MMD²).
    pub mmd: MmdSummary,
    pub frechet: FrechetSummary,
    pub n_synth: usize,
    pub n_real: usize,
    /// SHA-256 of the canonical JSON of the [`MetricsConfig`] used.
    pub config_digest: String,
}

/// Score a synthetic set against a real set with every metric in the suite.
/// Both sets need at least two volumes, all with identical dimensions.
pub fn evaluate(
    synth: &[Array3<f32>],
    real: &[Array3<f32>],
    config: &MetricsConfig,
) -> Result<MetricReport> {
    config.validate()?;
    if synth.len() < 2 || real.len() < 2 {
        return Err(Error::EmptyInput(
            "evaluation needs at least two volumes in each set".into(),
        ));
    }
    let dims = synth[0].dim();
    for v in synth.iter().chain(real) {
        if v.dim() != dims {
            return Err(Error::ShapeMismatch {
                expected: vec![dims.0, dims.1, dims.2],
                got: v.shape().to_vec(),
            });
        }
    }

    let ms_ssim_pairwise = pairwise_diversity(synth, &config.diversity)?;
    let mmd_out = mmd(synth, real, &config.mmd, MmdEstimator::Unbiased)?;
    let extractor = FeatureExtractor::build(&config.frechet)?;
    let views = [ViewAxis::Axial, ViewAxis::Coronal, ViewAxis::Sagittal]
        .map(|axis| frechet_view_distance(synth, real, axis, &extractor));
    let [axial, coronal, sagittal] = views;
    let (axial, coronal, sagittal) = (axial?, coronal?, sagittal?);

    let report = MetricReport {
        ms_ssim_pairwise,
        mmd: MmdSummary { value: mmd_out.value, kernel: mmd_out.kernel },
        frechet: FrechetSummary {
            axial: axial.value,
            coronal: coronal.value,
            sagittal: sagittal.value,
            feature_dim: extractor.dim(),
            shrinkage_applied: axial.shrinkage_applied
                || coronal.shrinkage_applied
                || sagittal.shrinkage_applied,
        },
        n_synth: synth.len(),
        n_real: real.len(),
        config_digest: config_digest(config)?,
    };
    for (name, v) in [
        ("ms_ssim mean", report.ms_ssim_pairwise.mean),
        ("ms_ssim sd", report.ms_ssim_pairwise.sd),
        ("mmd", report.mmd.value),
        ("frechet axial", report.frechet.axial),
        ("frechet coronal", report.frechet.coronal),
        ("frechet sagittal", report.frechet.sagittal),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite { context: format!("metric report: {name}") });
        }
    }
    Ok(report)
}

/// The report as canonical JSON (sorted keys, compact separators).
pub fn report_to_json(report: &MetricReport) -> Result<String> {
    crate::canon::canonical_json(report)
}
