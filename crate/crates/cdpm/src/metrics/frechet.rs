//! Fréchet distance between feature distributions of two volume sets,
//! computed per anatomical view.
//!
//! Every slice along the chosen axis maps to a feature vector; each set's
//! features are summarized by mean μ and covariance Σ, and the distance is
//!
//! ```text
//! ‖μ_A − μ_B‖² + Tr(Σ_A + Σ_B − 2 (Σ_A^{1/2} Σ_B Σ_A^{1/2})^{1/2})
//! ```
//!
//! with the matrix square roots taken by symmetric eigendecomposition,
//! eigenvalues clamped at zero.
//!
//! The default extractor is a fixed-seed random-projection convolution
//! stack: stride-2 convolutions of configurable widths, each followed by a
//! SiLU and globally average-pooled, the pooled channels concatenated. Its
//! weights are fully determined by the recorded seed, so reported numbers
//! are reproducible; no pretrained network is involved, which keeps values
//! comparable only within this tool. Callers with a real pretrained
//! embedding can bypass extraction entirely by supplying per-slice feature
//! matrices as volume files with dims (n_slices, feature_dim, 1).

use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, Array4, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{load_volume, save_volume, Volume, ViewAxis};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::nn::layers::Conv;
use crate::nn::ops;
use crate::rng::substream;

/// Configuration of the built-in feature extractor. Serialized into the
/// metric config digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    /// Seed of the fixed random projection; same seed, same features.
    pub seed: u64,
    /// Output channels of each stride-2 convolution stage. The feature
    /// dimension is their sum.
    pub widths: Vec<usize>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { seed: 0, widths: vec![8, 16, 32] }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidConfig(
                "extractor widths must be a non-empty list of positive channel counts".into(),
            ));
        }
        Ok(())
    }
}

/// The instantiated random-projection stack.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    convs: Vec<Conv<f32>>,
    dim: usize,
}

impl FeatureExtractor {
    /// Deterministically build the stack from its config.
    pub fn build(config: &ExtractorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "feature-extractor");
        let mut convs = Vec::with_capacity(config.widths.len());
        let mut cin = 1;
        for &cout in &config.widths {
            convs.push(Conv::init(cout, cin, 3, 2, 1, &mut rng));
            cin = cout;
        }
        Ok(Self { convs, dim: config.widths.iter().sum() })
    }

    /// Feature dimension (sum of stage widths).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Features of one slice: each stage's globally averaged channel
    /// activations, concatenated stage by stage.
    pub fn features(&self, slice: &Array2<f32>) -> Result<Array1<f64>> {
        let (h, w) = slice.dim();
        if h == 0 || w == 0 {
            return Err(Error::EmptyInput("feature extraction on an empty slice".into()));
        }
        let mut out = Array1::<f64>::zeros(self.dim);
        let mut x = slice.to_owned().insert_axis(Axis(0)).insert_axis(Axis(0));
        let mut at = 0;
        for conv in &self.convs {
            let x_next: Array4<f32> = ops::silu(&conv.forward(&x));
            for (c, channel) in x_next.index_axis(Axis(0), 0).outer_iter().enumerate() {
                let mut acc = 0.0;
                for &v in channel.iter() {
                    acc += v as f64;
                }
                out[at + c] = acc / channel.len() as f64;
            }
            at += x_next.dim().1;
            x = x_next;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "slice features".into() });
        }
        Ok(out)
    }
}

/// Features of every slice of every volume along `axis`, one row per slice,
/// volumes in order, slices ascending within each volume.
pub fn extract_view_features(
    set: &[Array3<f32>],
    axis: ViewAxis,
    extractor: &FeatureExtractor,
) -> Result<Array2<f64>> {
    if set.is_empty() {
        return Err(Error::EmptyInput("feature extraction on an empty set".into()));
    }
    let mut slices = Vec::new();
    for v in set {
        for i in 0..v.len_of(Axis(axis.index())) {
            slices.push(v.index_axis(Axis(axis.index()), i).to_owned());
        }
    }
    let rows = map_indexed(slices.len(), |i| extractor.features(&slices[i]));
    let mut out = Array2::zeros((slices.len(), extractor.dim()));
    for (i, row) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&row?);
    }
    Ok(out)
}

/// A Fréchet distance plus the context the report records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrechetOutcome {
    pub value: f64,
    /// True when a set had fewer rows than the feature dimension and both
    /// covariances received +1e−6·I shrinkage.
    pub shrinkage_applied: bool,
    pub n_a: usize,
    pub n_b: usize,
    pub feature_dim: usize,
}

const SHRINKAGE_EPS: f64 = 1e-6;

/// Column means and (n−1)-normalized covariance; a single row yields a zero
/// covariance.
fn mean_and_cov(f: &Array2<f64>) -> (Array1<f64>, DMatrix<f64>) {
    let (n, d) = f.dim();
    let mu = f.mean_axis(Axis(0)).expect("non-empty");
    let mut cov = DMatrix::<f64>::zeros(d, d);
    if n > 1 {
        for row in f.outer_iter() {
            for i in 0..d {
                let di = row[i] - mu[i];
                for j in i..d {
                    cov[(i, j)] += di * (row[j] - mu[j]);
                }
            }
        }
        cov /= (n - 1) as f64;
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
    }
    (mu, cov)
}

/// Symmetric PSD square root via eigendecomposition, eigenvalues clamped at
/// zero.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two feature matrices (rows = samples).
pub fn frechet_from_features(fa: &Array2<f64>, fb: &Array2<f64>) -> Result<FrechetOutcome> {
    let (n_a, d) = fa.dim();
    let n_b = fb.nrows();
    if n_a == 0 || n_b == 0 || d == 0 {
        return Err(Error::EmptyInput("frechet needs non-empty feature sets".into()));
    }
    if fb.ncols() != d {
        return Err(Error::ShapeMismatch { expected: vec![n_b, d], got: vec![n_b, fb.ncols()] });
    }
    let (mu_a, mut cov_a) = mean_and_cov(fa);
    let (mu_b, mut cov_b) = mean_and_cov(fb);
    let shrinkage_applied = n_a < d || n_b < d;
    if shrinkage_applied {
        for i in 0..d {
            cov_a[(i, i)] += SHRINKAGE_EPS;
            cov_b[(i, i)] += SHRINKAGE_EPS;
        }
    }

    let sqrt_a = sym_sqrt(&cov_a);
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let inner_sym = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 =
        inner_sym.symmetric_eigen().eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();

    let mean_gap: f64 = mu_a.iter().zip(mu_b.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let value = mean_gap + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    if !value.is_finite() {
        return Err(Error::NonFinite { context: "frechet distance".into() });
    }
    Ok(FrechetOutcome { value, shrinkage_applied, n_a, n_b, feature_dim: d })
}

/// Fréchet distance between the per-slice feature distributions of two
/// volume sets along one view axis.
pub fn frechet_view_distance(
    a: &[Array3<f32>],
    b: &[Array3<f32>],
    axis: ViewAxis,
    extractor: &FeatureExtractor,
) -> Result<FrechetOutcome> {
    let fa = extract_view_features(a, axis, extractor)?;
    let fb = extract_view_features(b, axis, extractor)?;
    frechet_from_features(&fa, &fb)
}

/// Load an external per-slice feature matrix stored as a volume file with
/// dims (n_slices, feature_dim, 1).
pub fn load_feature_matrix(path: &Path) -> Result<Array2<f64>> {
    let v = load_volume(path)?;
    let (n, d, one) = v.dims();
    if one != 1 {
        return Err(Error::Format(format!(
            "feature matrix file must have dims (n, d, 1), got ({n}, {d}, {one})"
        )));
    }
    Ok(Array2::from_shape_fn((n, d), |(i, j)| v.voxels()[[i, j, 0]] as f64))
}

/// Store a feature matrix in the external-file layout `load_feature_matrix`
/// reads. Values are narrowed to f32.
pub fn save_feature_matrix(path: &Path, features: &Array2<f64>) -> Result<()> {
    let (n, d) = features.dim();
    let vol = Volume::new(Array3::from_shape_fn((n, d, 1), |(i, j, _)| features[[i, j]] as f32))?;
    save_volume(&vol, path)
}
