//! Volume data model, axis orientation algebra and SVF file I/O.
//!
//! Storage order is (D, H, W) with W varying fastest everywhere in the crate.

mod orientation;
mod svf;
mod volume;

pub use orientation::{AnatomicalAxis, AxisTransform, Direction, Orientation};
pub use svf::{raw_path_for, read_volume, write_any, write_volume, SVF_VERSION};
pub use volume::{Geometry, LabelVolume, Volume, Voxel, VoxelVolume, NUM_CLASSES, ORGAN_NAMES};
