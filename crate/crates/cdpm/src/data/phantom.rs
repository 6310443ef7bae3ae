//! Procedural volume synthesis: nested soft ellipsoids under a bright outer
//! shell, Gaussian-smoothed so neighboring slices stay strongly correlated.
//! The generator is the repo's stand-in corpus; slice-conditional training
//! only makes sense when adjacent slices actually predict each other.

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Volume;
use crate::error::{Error, Result};
use crate::rng::CdpmRng;

/// Everything that determines one family of phantoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    /// Volume dimensions (D, H, W), each at least 8.
    pub dims: (usize, usize, usize),
    /// Inclusive range for the number of inner ellipsoids. Zero draws
    /// nothing at all — not even the shell — yielding a flat background.
    pub n_ellipsoids: (usize, usize),
    /// Inclusive intensity range for inner ellipsoids, inside [0,1].
    pub intensity_band: (f32, f32),
    /// Gaussian smoothing standard deviation in voxels; 0 disables.
    pub smoothing_sigma: f32,
    /// Intensity outside the shell, in [0,1].
    pub background: f32,
    /// Root seed recorded in run configs; the caller derives the per-volume
    /// generator from it.
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: (32, 32, 32),
            n_ellipsoids: (3, 7),
            intensity_band: (0.35, 0.9),
            smoothing_sigma: 1.0,
            background: 0.05,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let (d, h, w) = self.dims;
        if d < 8 || h < 8 || w < 8 {
            return Err(Error::InvalidConfig(format!(
                "phantom dims must be at least 8 per axis to fit the shell, got {d}x{h}x{w}"
            )));
        }
        if self.n_ellipsoids.0 > self.n_ellipsoids.1 {
            return Err(Error::InvalidConfig("ellipsoid count range is reversed".into()));
        }
        let (lo, hi) = self.intensity_band;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "intensity band must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})"
            )));
        }
        if !(self.background.is_finite() && (0.0..=1.0).contains(&self.background)) {
            return Err(Error::InvalidConfig("background must be in [0,1]".into()));
        }
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return Err(Error::InvalidConfig("smoothing sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

// Shell geometry, as fractions of the normalized brain radius ρ.
const BRAIN_EDGE: f32 = 0.86; // interior ends here
const SHELL_EDGE: f32 = 0.98; // shell ends here
const BRAIN_FILL: f32 = 0.32;
const SHELL_FILL: f32 = 0.92;
const CENTER_RHO_MAX: f32 = 0.55; // inner structures stay well inside

/// Normalized ellipsoid radius of point `p` for center `c`, semi-axes `a`.
fn rho(p: [f32; 3], c: [f32; 3], a: [f32; 3]) -> f32 {
    let mut s = 0.0;
    for i in 0..3 {
        let d = (p[i] - c[i]) / a[i];
        s += d * d;
    }
    s.sqrt()
}

fn smoothstep(x: f32) -> f32 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Draw one phantom. Deterministic given the generator state; the draw order
/// is: ellipsoid count, then per ellipsoid its center (rejection-sampled),
/// semi-axes, and intensity.
pub fn generate_phantom(spec: &PhantomSpec, rng: &mut CdpmRng) -> Result<Volume> {
    spec.validate()?;
    let (d, h, w) = spec.dims;
    let count = if spec.n_ellipsoids.0 == spec.n_ellipsoids.1 {
        spec.n_ellipsoids.0
    } else {
        rng.random_range(spec.n_ellipsoids.0..=spec.n_ellipsoids.1)
    };
    if count == 0 {
        let vol = Array3::from_elem((d, h, w), spec.background);
        return Volume::new(vol).map(|v| v.with_meta("phantom (empty)"));
    }

    let center = [
        (d as f32 - 1.0) / 2.0,
        (h as f32 - 1.0) / 2.0,
        (w as f32 - 1.0) / 2.0,
    ];
    let brain_axes = [
        0.46 * d as f32,
        0.46 * h as f32,
        0.46 * w as f32,
    ];

    // Base: background, shell, interior fill, with thin linear blends the
    // smoothing pass will soften further.
    let mut vol = Array3::from_elem((d, h, w), spec.background);
    {
        let bg = spec.background;
        let flat = vol.as_slice_mut().expect("owned is contiguous");
        crate::exec::for_each_chunk_mut(flat, h * w, |zi, slab| {
            for (j, v) in slab.iter_mut().enumerate() {
                let p = [zi as f32, (j / w) as f32, (j % w) as f32];
                let r = rho(p, center, brain_axes);
                *v = if r <= BRAIN_EDGE {
                    BRAIN_FILL
                } else if r <= SHELL_EDGE {
                    SHELL_FILL
                } else {
                    // Fade the shell rim into the background over 0.04 ρ.
                    let t = smoothstep((r - SHELL_EDGE) / 0.04);
                    SHELL_FILL + (bg - SHELL_FILL) * t
                };
            }
        });
    }

    let min_dim = d.min(h).min(w) as f32;
    for _ in 0..count {
        // Center: uniform in the interior box, rejected until well inside.
        let mut c = center;
        for _ in 0..32 {
            let cand = [
                center[0] + rng.random_range(-1.0f32..=1.0) * CENTER_RHO_MAX * brain_axes[0],
                center[1] + rng.random_range(-1.0f32..=1.0) * CENTER_RHO_MAX * brain_axes[1],
                center[2] + rng.random_range(-1.0f32..=1.0) * CENTER_RHO_MAX * brain_axes[2],
            ];
            if rho(cand, center, brain_axes) <= CENTER_RHO_MAX {
                c = cand;
                break;
            }
        }
        let axes = [
            (rng.random_range(0.06f32..=0.18) * min_dim).max(1.5),
            (rng.random_range(0.06f32..=0.18) * min_dim).max(1.5),
            (rng.random_range(0.06f32..=0.18) * min_dim).max(1.5),
        ];
        let intensity = if spec.intensity_band.0 == spec.intensity_band.1 {
            spec.intensity_band.0
        } else {
            rng.random_range(spec.intensity_band.0..=spec.intensity_band.1)
        };

        // Rasterize only the bounding box; composite with a soft edge and
        // never paint over the shell.
        let zr = bound(c[0], axes[0] * 1.1, d);
        let yr = bound(c[1], axes[1] * 1.1, h);
        let xr = bound(c[2], axes[2] * 1.1, w);
        for z in zr.clone() {
            for y in yr.clone() {
                for x in xr.clone() {
                    let p = [z as f32, y as f32, x as f32];
                    if rho(p, center, brain_axes) > BRAIN_EDGE {
                        continue;
                    }
                    let r = rho(p, c, axes);
                    let wgt = smoothstep((1.1 - r) / 0.2);
                    if wgt > 0.0 {
                        let v = &mut vol[[z, y, x]];
                        *v += (intensity - *v) * wgt;
                    }
                }
            }
        }
    }

    if spec.smoothing_sigma > 0.0 {
        vol = gaussian_blur(vol, spec.smoothing_sigma);
    }
    vol.mapv_inplace(|v| v.clamp(0.0, 1.0));
    Volume::new(vol).map(|v| v.with_meta(format!("phantom ({count} ellipsoids)")))
}

/// Clamped index range covering `c ± extent`.
fn bound(c: f32, extent: f32, len: usize) -> std::ops::Range<usize> {
    let lo = (c - extent).floor().max(0.0) as usize;
    let hi = ((c + extent).ceil() as usize + 1).min(len);
    lo..hi.max(lo)
}

/// Separable Gaussian blur with replicated borders. Each pass convolves the
/// last (contiguous) axis, then rotates axes so three passes cover W, H, D
/// and land back in the original orientation.
fn gaussian_blur(vol: Array3<f32>, sigma: f32) -> Array3<f32> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for j in -(radius as isize)..=(radius as isize) {
        kernel.push((-((j * j) as f32) / (2.0 * sigma * sigma)).exp());
    }
    let total: f32 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }

    let mut cur = vol;
    for _ in 0..3 {
        cur = blur_last_axis(&cur, &kernel, radius);
        cur = cur.permuted_axes([2, 0, 1]).as_standard_layout().to_owned();
    }
    cur
}

fn blur_last_axis(arr: &Array3<f32>, kernel: &[f32], radius: usize) -> Array3<f32> {
    let (a, b, n) = arr.dim();
    let src = arr.as_slice().expect("standard layout");
    let mut out = Array3::zeros((a, b, n));
    let dst = out.as_slice_mut().expect("owned is contiguous");
    crate::exec::for_each_chunk_mut(dst, n, |row, line| {
        let base = row * n;
        for (i, o) in line.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let j = (i + k).saturating_sub(radius).min(n - 1);
                acc += kv * src[base + j];
            }
            *o = acc;
        }
    });
    out
}
