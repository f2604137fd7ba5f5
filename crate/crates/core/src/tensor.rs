//! Dense 5-D f32 tensors in (N, C, D, H, W) order, W fastest.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 5],
    data: Vec<f32>,
}

fn element_count(shape: [usize; 5]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::Shape(format!("element count of {shape:?} overflows")))
}

impl Tensor {
    pub fn full(shape: [usize; 5], value: f32) -> Result<Self> {
        let n = element_count(shape)?;
        Ok(Tensor {
            shape,
            data: vec![value; n],
        })
    }

    pub fn zeros(shape: [usize; 5]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn from_vec(shape: [usize; 5], data: Vec<f32>) -> Result<Self> {
        let n = element_count(shape)?;
        if data.len() != n {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros_like(&self) -> Tensor {
        Tensor {
            shape: self.shape,
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[2], self.shape[3], self.shape[4]]
    }

    /// D·H·W.
    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3] * self.shape[4]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn offset(&self, idx: [usize; 5]) -> usize {
        let [_, c, d, h, w] = self.shape;
        (((idx[0] * c + idx[1]) * d + idx[2]) * h + idx[3]) * w + idx[4]
    }

    pub fn at(&self, idx: [usize; 5]) -> f32 {
        self.data[self.offset(idx)]
    }

    /// Spatial block of sample `n`, channel `c`.
    pub fn channel(&self, n: usize, c: usize) -> &[f32] {
        let len = self.plane_len();
        let start = (n * self.shape[1] + c) * len;
        &self.data[start..start + len]
    }

    pub fn reshape(self, shape: [usize; 5]) -> Result<Tensor> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32 + Sync) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.par_iter().map(|&x| f(x)).collect(),
        }
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self
            .data
            .par_iter()
            .zip(other.data.par_iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape,
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.check_same_shape(other, "add")?;
        self.data
            .par_iter_mut()
            .zip(other.data.par_iter())
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn negate(&self) -> Tensor {
        self.map(|x| -x)
    }

    pub fn relu(&self) -> Tensor {
        self.map(|x| x.max(0.0))
    }

    pub fn relu_in_place(&mut self) {
        self.data.par_iter_mut().for_each(|x| *x = x.max(0.0));
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&x| x as f64).sum()
    }

    /// Per-voxel index of the largest channel for a single-sample tensor.
    /// Ties go to the lowest channel index.
    pub fn argmax_channel(&self) -> Result<Vec<u8>> {
        let [n, c, ..] = self.shape;
        if n != 1 {
            return Err(Error::Shape(format!("argmax needs N == 1, got {n}")));
        }
        if !(2..=256).contains(&c) {
            return Err(Error::Shape(format!(
                "argmax needs 2..=256 channels, got {c}"
            )));
        }
        let len = self.plane_len();
        let mut best = self.channel(0, 0).to_vec();
        let mut labels = vec![0u8; len];
        for ch in 1..c {
            let plane = self.channel(0, ch);
            best.par_iter_mut()
                .zip(labels.par_iter_mut())
                .zip(plane.par_iter())
                .for_each(|((b, l), &v)| {
                    if v > *b {
                        *b = v;
                        *l = ch as u8;
                    }
                });
        }
        Ok(labels)
    }
}
