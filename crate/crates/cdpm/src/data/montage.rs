//! Grid-of-slices PNG export for eyeballing volumes along any anatomical
//! plane.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, GrayImage, ImageEncoder};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::data::Volume;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Which axis to slice along. The volume is indexed (D, H, W): axial fixes
/// D (tiles are H×W), coronal fixes H (D×W), sagittal fixes W (D×H).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewAxis {
    Axial,
    Coronal,
    Sagittal,
}

impl ViewAxis {
    /// Position of this view's axis in the (D, H, W) index order.
    pub fn index(self) -> usize {
        match self {
            ViewAxis::Axial => 0,
            ViewAxis::Coronal => 1,
            ViewAxis::Sagittal => 2,
        }
    }
}

impl std::str::FromStr for ViewAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" => Ok(ViewAxis::Axial),
            "coronal" => Ok(ViewAxis::Coronal),
            "sagittal" => Ok(ViewAxis::Sagittal),
            other => Err(Error::InvalidConfig(format!(
                "unknown view axis {other:?}, expected axial, coronal, or sagittal"
            ))),
        }
    }
}

impl std::fmt::Display for ViewAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ViewAxis::Axial => "axial",
            ViewAxis::Coronal => "coronal",
            ViewAxis::Sagittal => "sagittal",
        })
    }
}

fn permute(voxels: &ndarray::Array3<f32>, perm: [usize; 3]) -> ndarray::Array3<f32> {
    voxels.view().permuted_axes(perm).as_standard_layout().to_owned()
}

/// Reindex a volume so `axis` becomes the leading axis — the one training
/// and sampling slice along — with the two in-plane axes keeping their
/// relative order. Axial volumes pass through unchanged. The result owns its
/// data in standard layout.
pub fn to_slicing_orientation(voxels: &ndarray::Array3<f32>, axis: ViewAxis) -> ndarray::Array3<f32> {
    match axis {
        ViewAxis::Axial => voxels.clone(),
        ViewAxis::Coronal => permute(voxels, [1, 0, 2]),
        ViewAxis::Sagittal => permute(voxels, [2, 0, 1]),
    }
}

/// Inverse of [`to_slicing_orientation`]: move the leading slice axis back
/// to its (D, H, W) position.
pub fn from_slicing_orientation(voxels: &ndarray::Array3<f32>, axis: ViewAxis) -> ndarray::Array3<f32> {
    match axis {
        ViewAxis::Axial => voxels.clone(),
        ViewAxis::Coronal => permute(voxels, [1, 0, 2]),
        ViewAxis::Sagittal => permute(voxels, [1, 2, 0]),
    }
}

/// Quantize an intensity to 8 bits: clamp to [0,1], scale by 255, round half
/// away from zero, so 0.5 maps to 128.
fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Render every `every`-th slice along `axis` into a near-square grid.
/// Unused grid cells stay black.
pub fn render_slice_montage(volume: &Volume, axis: ViewAxis, every: usize) -> Result<GrayImage> {
    if every == 0 {
        return Err(Error::InvalidConfig("montage stride must be at least 1".into()));
    }
    let arr = volume.voxels();
    let len = arr.len_of(Axis(axis.index()));
    let n = len.div_ceil(every);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);

    let first = arr.index_axis(Axis(axis.index()), 0);
    let (th, tw) = (first.dim().0, first.dim().1);
    let mut img = GrayImage::new((cols * tw) as u32, (rows * th) as u32);

    for (tile, slice_idx) in (0..len).step_by(every).enumerate() {
        let plane = arr.index_axis(Axis(axis.index()), slice_idx);
        let (gy, gx) = (tile / cols, tile % cols);
        for y in 0..th {
            for x in 0..tw {
                img.put_pixel(
                    (gx * tw + x) as u32,
                    (gy * th + y) as u32,
                    image::Luma([to_u8(plane[[y, x]])]),
                );
            }
        }
    }
    Ok(img)
}

/// Encode a grayscale image as PNG bytes.
pub fn encode_png(img: &GrayImage, out: &mut Vec<u8>) -> Result<()> {
    PngEncoder::new(&mut *out)
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::L8)
        .map_err(|e| Error::Format(format!("png encode: {e}")))
}

/// Render and write a montage PNG atomically.
pub fn export_slice_montage(
    volume: &Volume,
    axis: ViewAxis,
    every: usize,
    path: &Path,
) -> Result<()> {
    let img = render_slice_montage(volume, axis, every)?;
    let mut bytes = Vec::new();
    encode_png(&img, &mut bytes)?;
    write_atomic(path, &bytes)
}
