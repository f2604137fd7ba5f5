use serde::{Deserialize, Serialize};

use super::orientation::{AxisTransform, Orientation};
use crate::error::{Error, Result};

/// Scalar types a volume can store on disk.
pub trait Voxel: Copy + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const DTYPE: &'static str;
    const SIZE: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn to_f32(self) -> f32;
}

impl Voxel for f32 {
    const DTYPE: &'static str = "f32";
    const SIZE: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_bits(u32::from_le_bytes(bytes.try_into().unwrap()))
    }
    fn to_f32(self) -> f32 {
        self
    }
}

impl Voxel for i16 {
    const DTYPE: &'static str = "i16";
    const SIZE: usize = 2;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        i16::from_le_bytes(bytes.try_into().unwrap())
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}

impl Voxel for u8 {
    const DTYPE: &'static str = "u8";
    const SIZE: usize = 1;

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0]
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
}

/// Physical placement of a (D, H, W) grid.
///
/// `origin[i]` is the world coordinate (LPS frame) of voxel 0's center along
/// the anatomical axis of storage axis `i`; moving one voxel along axis `i`
/// moves `spacing[i]` mm toward that axis' orientation letter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub shape: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub orientation: Orientation,
}

impl Geometry {
    pub fn new(shape: [usize; 3], spacing: [f64; 3]) -> Self {
        Geometry {
            shape,
            spacing,
            origin: [0.0; 3],
            orientation: Orientation::LPI,
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn voxel_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} has a zero extent",
                self.shape
            )));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "spacing {:?} must be positive and finite",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Same shape, spacing and orientation (origin is not compared).
    pub fn same_grid(&self, other: &Geometry) -> bool {
        self.shape == other.shape
            && self.spacing == other.spacing
            && self.orientation == other.orientation
    }

    /// Geometry after relabeling axes with `t` (which must map from this
    /// geometry's orientation).
    pub fn transformed(&self, t: &AxisTransform, target: Orientation) -> Geometry {
        let mut origin = [0.0; 3];
        for j in 0..3 {
            let i = t.perm[j];
            origin[j] = self.origin[i];
            if t.flip[j] {
                let sign = self.orientation.axes()[i].sign();
                origin[j] += sign * self.spacing[i] * (self.shape[i] - 1) as f64;
            }
        }
        Geometry {
            shape: t.output_shape(self.shape),
            spacing: t.perm.map(|i| self.spacing[i]),
            origin,
            orientation: target,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    geometry: Geometry,
    data: Vec<T>,
}

/// Segmentation mask: 0 background, 1 liver, 2 kidney, 3 spleen, 4 pancreas.
pub type LabelVolume = Volume<u8>;

pub const NUM_CLASSES: usize = 5;
pub const ORGAN_NAMES: [&str; 4] = ["liver", "kidney", "spleen", "pancreas"];

impl<T: Voxel> Volume<T> {
    pub fn new(geometry: Geometry, data: Vec<T>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.voxel_count() {
            return Err(Error::SizeMismatch(format!(
                "shape {:?} needs {} voxels, got {}",
                geometry.shape,
                geometry.voxel_count(),
                data.len()
            )));
        }
        Ok(Volume { geometry, data })
    }

    pub fn filled(geometry: Geometry, value: T) -> Result<Self> {
        let n = geometry.voxel_count();
        Volume::new(geometry, vec![value; n])
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn shape(&self) -> [usize; 3] {
        self.geometry.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn index(&self, d: usize, h: usize, w: usize) -> usize {
        let [_, nh, nw] = self.geometry.shape;
        (d * nh + h) * nw + w
    }

    pub fn get(&self, d: usize, h: usize, w: usize) -> T {
        self.data[self.index(d, h, w)]
    }

    pub fn map<U: Voxel>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            geometry: self.geometry.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Same geometry, new data.
    pub fn with_data<U: Voxel>(&self, data: Vec<U>) -> Result<Volume<U>> {
        Volume::new(self.geometry.clone(), data)
    }

    /// Extract the sub-block `[lo, hi)` per axis. Origin follows the block.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Volume<T>> {
        for a in 0..3 {
            if lo[a] >= hi[a] || hi[a] > self.geometry.shape[a] {
                return Err(Error::InvalidArgument(format!(
                    "crop [{lo:?}, {hi:?}) outside shape {:?}",
                    self.geometry.shape
                )));
            }
        }
        let shape = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        let mut data = Vec::with_capacity(shape.iter().product());
        for d in lo[0]..hi[0] {
            for h in lo[1]..hi[1] {
                let start = self.index(d, h, lo[2]);
                data.extend_from_slice(&self.data[start..start + shape[2]]);
            }
        }
        let g = &self.geometry;
        let mut origin = g.origin;
        for a in 0..3 {
            origin[a] += g.orientation.axes()[a].sign() * g.spacing[a] * lo[a] as f64;
        }
        let geometry = Geometry {
            shape,
            spacing: g.spacing,
            origin,
            orientation: g.orientation,
        };
        Ok(Volume { geometry, data })
    }

    /// Reorient by axis permutation and flips only; no interpolation.
    pub fn reorient(&self, target: Orientation) -> Volume<T> {
        let t = AxisTransform::between(self.geometry.orientation, target);
        if t.is_identity() {
            return self.clone();
        }
        let geometry = self.geometry.transformed(&t, target);
        let src_shape = self.geometry.shape;
        let src_strides = [src_shape[1] * src_shape[2], src_shape[2], 1];
        let out_shape = geometry.shape;
        // Per output axis: source offset of output index 0 and the signed step.
        let mut base = 0isize;
        let mut step = [0isize; 3];
        for j in 0..3 {
            let i = t.perm[j];
            let stride = src_strides[i] as isize;
            if t.flip[j] {
                base += stride * (src_shape[i] as isize - 1);
                step[j] = -stride;
            } else {
                step[j] = stride;
            }
        }
        let mut data = Vec::with_capacity(self.data.len());
        for a in 0..out_shape[0] as isize {
            for b in 0..out_shape[1] as isize {
                let row = base + a * step[0] + b * step[1];
                for c in 0..out_shape[2] as isize {
                    data.push(self.data[(row + c * step[2]) as usize]);
                }
            }
        }
        Volume { geometry, data }
    }
}

impl LabelVolume {
    pub fn validate_labels(&self) -> Result<()> {
        match self.data.iter().position(|&v| v as usize >= NUM_CLASSES) {
            Some(index) => Err(Error::InvalidLabel {
                value: self.data[index],
                index,
            }),
            None => Ok(()),
        }
    }
}

/// A volume of any on-disk dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelVolume {
    F32(Volume<f32>),
    I16(Volume<i16>),
    U8(Volume<u8>),
}

impl VoxelVolume {
    pub fn geometry(&self) -> &Geometry {
        match self {
            VoxelVolume::F32(v) => v.geometry(),
            VoxelVolume::I16(v) => v.geometry(),
            VoxelVolume::U8(v) => v.geometry(),
        }
    }

    pub fn dtype(&self) -> &'static str {
        match self {
            VoxelVolume::F32(_) => f32::DTYPE,
            VoxelVolume::I16(_) => i16::DTYPE,
            VoxelVolume::U8(_) => u8::DTYPE,
        }
    }

    pub fn to_f32(&self) -> Volume<f32> {
        match self {
            VoxelVolume::F32(v) => v.clone(),
            VoxelVolume::I16(v) => v.map(Voxel::to_f32),
            VoxelVolume::U8(v) => v.map(Voxel::to_f32),
        }
    }

    pub fn reorient(&self, target: Orientation) -> VoxelVolume {
        match self {
            VoxelVolume::F32(v) => VoxelVolume::F32(v.reorient(target)),
            VoxelVolume::I16(v) => VoxelVolume::I16(v.reorient(target)),
            VoxelVolume::U8(v) => VoxelVolume::U8(v.reorient(target)),
        }
    }

    /// The u8 payload as a validated label mask.
    pub fn into_labels(self) -> Result<LabelVolume> {
        match self {
            VoxelVolume::U8(v) => {
                v.validate_labels()?;
                Ok(v)
            }
            other => Err(Error::InvalidArgument(format!(
                "label volume must be u8, got {}",
                other.dtype()
            ))),
        }
    }
}

impl From<Volume<f32>> for VoxelVolume {
    fn from(v: Volume<f32>) -> Self {
        VoxelVolume::F32(v)
    }
}

impl From<Volume<i16>> for VoxelVolume {
    fn from(v: Volume<i16>) -> Self {
        VoxelVolume::I16(v)
    }
}

impl From<Volume<u8>> for VoxelVolume {
    fn from(v: Volume<u8>) -> Self {
        VoxelVolume::U8(v)
    }
}
