//! Volume I/O, normalization, procedural phantoms, and montage export.

pub mod montage;
pub mod phantom;
pub mod volume;

pub use montage::{
    export_slice_montage, from_slicing_orientation, render_slice_montage, to_slicing_orientation,
    ViewAxis,
};
pub use phantom::{generate_phantom, PhantomSpec};
pub use volume::{
    load_volume, normalize_intensity, save_volume, volume_from_bytes, volume_to_bytes, Volume,
};
