//! The in-memory volume type, its raw file container, and intensity
//! normalization.
//!
//! # Container layout (`VOL1`)
//!
//! | offset | size      | content                                            |
//! |--------|-----------|----------------------------------------------------|
//! | 0      | 4         | magic bytes `VOL1`                                 |
//! | 4      | 8         | D, little-endian u64                               |
//! | 12     | 8         | H, little-endian u64                               |
//! | 20     | 8         | W, little-endian u64                               |
//! | 28     | 4·D·H·W   | voxels, little-endian f32, D-major/H/W-minor order |
//!
//! A 2×2×2 volume is therefore exactly 60 bytes. Loads reject bad magic,
//! truncated or oversized payloads, and non-finite voxels. The optional
//! in-memory `meta` string is provenance for logs only and is not stored.

use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 4] = b"VOL1";
const HEADER_LEN: usize = 4 + 3 * 8;

/// A D×H×W grid of finite f32 intensities; the model's clean signal is a
/// volume normalized to [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    voxels: Array3<f32>,
    /// Free-form provenance note (e.g. source path or generator seed). Not
    /// persisted by [`save_volume`].
    pub meta: Option<String>,
}

impl Volume {
    /// Wrap a voxel grid, rejecting empty axes and non-finite values.
    pub fn new(voxels: Array3<f32>) -> Result<Self> {
        let (d, h, w) = voxels.dim();
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::EmptyInput(format!("volume with zero axis: {d}x{h}x{w}")));
        }
        if let Some(bad) = voxels.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("voxel value {bad}") });
        }
        Ok(Self { voxels, meta: None })
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = Some(meta.into());
        self
    }

    /// (D, H, W).
    pub fn dims(&self) -> (usize, usize, usize) {
        self.voxels.dim()
    }

    /// Slice count along the model's slice axis (D).
    pub fn depth(&self) -> usize {
        self.voxels.dim().0
    }

    pub fn voxels(&self) -> &Array3<f32> {
        &self.voxels
    }

    pub fn into_voxels(self) -> Array3<f32> {
        self.voxels
    }
}

/// Serialize to the `VOL1` byte layout documented above.
pub fn volume_to_bytes(volume: &Volume) -> Vec<u8> {
    let (d, h, w) = volume.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d * h * w);
    out.extend_from_slice(MAGIC);
    for dim in [d, h, w] {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    // Standard layout is exactly D-major/H/W-minor; `new` plus the
    // constructors in this crate guarantee it, and `to_owned` restores it
    // for any exotic caller-built view.
    match volume.voxels().as_slice() {
        Some(flat) => {
            for v in flat {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => {
            for v in volume.voxels().to_owned().as_slice().expect("owned is contiguous") {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Parse the `VOL1` byte layout.
pub fn volume_from_bytes(bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated payload: {} bytes is shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:02x?}, expected \"VOL1\"",
            &bytes[..4]
        )));
    }
    let mut dims = [0usize; 3];
    for (i, dim) in dims.iter_mut().enumerate() {
        let off = 4 + 8 * i;
        let raw = u64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
        *dim = usize::try_from(raw)
            .map_err(|_| Error::Format(format!("dimension {raw} overflows this platform")))?;
    }
    let [d, h, w] = dims;
    let count = d
        .checked_mul(h)
        .and_then(|p| p.checked_mul(w))
        .ok_or_else(|| Error::Format(format!("dimensions {d}x{h}x{w} overflow")))?;
    let want = HEADER_LEN + 4 * count;
    if bytes.len() < want {
        return Err(Error::Format(format!(
            "truncated payload: {} bytes, {d}x{h}x{w} volume needs {want}",
            bytes.len()
        )));
    }
    if bytes.len() > want {
        return Err(Error::Format(format!(
            "trailing bytes: {} past the expected {want}",
            bytes.len() - want
        )));
    }
    let mut flat = Vec::with_capacity(count);
    for i in 0..count {
        let off = HEADER_LEN + 4 * i;
        flat.push(f32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")));
    }
    let voxels = Array3::from_shape_vec((d, h, w), flat).expect("length checked");
    Volume::new(voxels)
}

/// Write a volume to `path` in the `VOL1` container, atomically.
pub fn save_volume(volume: &Volume, path: &Path) -> Result<()> {
    write_atomic(path, &volume_to_bytes(volume))
}

/// Read a `VOL1` file.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path)?;
    let mut v = volume_from_bytes(&bytes)?;
    v.meta = Some(path.display().to_string());
    Ok(v)
}

/// Min-max rescale intensities to [0,1]. A constant volume has no range to
/// rescale and is rejected.
pub fn normalize_intensity(volume: &Volume) -> Result<Volume> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in volume.voxels().iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        return Err(Error::ConstantVolume);
    }
    let scale = 1.0 / (hi - lo);
    let mut out = volume.voxels().to_owned();
    let flat = out.as_slice_mut().expect("owned is contiguous");
    crate::exec::for_each_chunk_mut(flat, 1 << 14, |_, chunk| {
        for v in chunk {
            *v = (*v - lo) * scale;
        }
    });
    let mut n = Volume::new(out)?;
    n.meta = volume.meta.clone();
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::scalar::Scalar;
    use ndarray::Array3;

    fn golden_volume() -> Volume {
        // 2x2x2, voxels i/7 for i in 0..8.
        let v = Array3::from_shape_vec((2, 2, 2), (0..8).map(|i| i as f32 / 7.0).collect())
            .unwrap();
        Volume::new(v).unwrap()
    }

    #[test]
    fn golden_byte_layout() {
        let bytes = volume_to_bytes(&golden_volume());
        assert_eq!(bytes.len(), 60);
        assert_eq!(&bytes[..4], b"VOL1");
        for i in 0..3 {
            assert_eq!(&bytes[4 + 8 * i..12 + 8 * i], 2u64.to_le_bytes().as_slice());
        }
        assert_eq!(&bytes[28..32], 0f32.to_le_bytes().as_slice());
        assert_eq!(&bytes[32..36], (1.0f32 / 7.0).to_le_bytes().as_slice());
        assert_eq!(&bytes[56..60], 1f32.to_le_bytes().as_slice());
    }

    #[test]
    fn golden_file_on_disk() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/golden.vol");
        let bytes = std::fs::read(&path).expect("golden.vol is committed");
        assert_eq!(bytes, volume_to_bytes(&golden_volume()));
        let loaded = volume_from_bytes(&bytes).unwrap();
        assert_eq!(loaded.voxels(), golden_volume().voxels());
    }

    #[test]
    fn round_trip_random_volumes() {
        let mut rng = substream(3, "volume-roundtrip");
        let dir = tempfile::tempdir().unwrap();
        for i in 0..100 {
            let dims = (
                1 + (i % 5) as usize,
                1 + (i % 7) as usize,
                1 + (i % 3) as usize,
            );
            let v = Volume::new(Array3::from_shape_fn(dims, |_| f32::std_normal(&mut rng)))
                .unwrap();
            let p = dir.path().join(format!("v{i}.vol"));
            save_volume(&v, &p).unwrap();
            let back = load_volume(&p).unwrap();
            assert_eq!(back.voxels(), v.voxels(), "volume {i}");
        }
    }

    #[test]
    fn load_rejects_bad_inputs() {
        let good = volume_to_bytes(&golden_volume());

        let err = volume_from_bytes(&good[..20]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let err = volume_from_bytes(&good[..40]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut long = good.clone();
        long.push(0);
        assert!(volume_from_bytes(&long).unwrap_err().to_string().contains("trailing"));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(volume_from_bytes(&bad_magic).unwrap_err().to_string().contains("magic"));

        let mut nan = good;
        nan[28..32].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(volume_from_bytes(&nan), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn rejects_non_finite_and_empty_construction() {
        let v = Array3::from_elem((2, 2, 2), f32::INFINITY);
        assert!(matches!(Volume::new(v), Err(Error::NonFinite { .. })));
        let v = Array3::<f32>::zeros((0, 2, 2));
        assert!(matches!(Volume::new(v), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn normalize_affine_map() {
        let v = Volume::new(Array3::from_shape_vec((1, 1, 3), vec![2.0, 4.0, 6.0]).unwrap())
            .unwrap();
        let n = normalize_intensity(&v).unwrap();
        assert_eq!(n.voxels().as_slice().unwrap(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn normalize_fixed_point_and_idempotence() {
        let v = golden_volume();
        let once = normalize_intensity(&v).unwrap();
        assert_eq!(once.voxels(), v.voxels(), "[0,1] volume with full range is unchanged");
        let mut rng = substream(4, "normalize");
        let v = Volume::new(Array3::from_shape_fn((4, 4, 4), |_| {
            f32::std_normal(&mut rng) * 3.0 + 1.0
        }))
        .unwrap();
        let once = normalize_intensity(&v).unwrap();
        let twice = normalize_intensity(&once).unwrap();
        assert_eq!(once.voxels(), twice.voxels());
    }

    #[test]
    fn normalize_rejects_constant() {
        let v = Volume::new(Array3::from_elem((2, 2, 2), 0.7)).unwrap();
        assert!(matches!(normalize_intensity(&v), Err(Error::ConstantVolume)));
    }

    /// Regenerates the committed golden files. Run explicitly after a
    /// deliberate format change: `cargo test -p cdpm write_golden -- --ignored`.
    #[test]
    #[ignore = "writes tests/golden fixtures"]
    fn write_golden_fixtures() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("golden.vol"), volume_to_bytes(&golden_volume())).unwrap();
        let png = crate::data::montage::render_slice_montage(
            &golden_volume(),
            crate::data::ViewAxis::Axial,
            1,
        )
        .unwrap();
        let mut bytes = Vec::new();
        crate::data::montage::encode_png(&png, &mut bytes).unwrap();
        std::fs::write(dir.join("golden_montage.png"), bytes).unwrap();
    }
}
