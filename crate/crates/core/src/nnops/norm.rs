use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f32 = 1e-5;

/// Per-(n, c) standardization over D·H·W with biased variance, followed by
/// the affine `gamma`, `beta` of each channel.
pub fn instance_norm(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f32) -> Result<Tensor> {
    let c = x.channels();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "instance norm over {c} channels got gamma {} / beta {}",
            gamma.len(),
            beta.len()
        )));
    }
    let len = x.plane_len();
    let mut out = x.clone();
    out.data_mut()
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(i, plane)| {
            let ch = i % c;
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / len as f64;
            let var = plane
                .iter()
                .map(|&v| {
                    let d = v as f64 - mean;
                    d * d
                })
                .sum::<f64>()
                / len as f64;
            let scale = gamma[ch] as f64 / (var + eps as f64).sqrt();
            let shift = beta[ch] as f64 - mean * scale;
            for v in plane.iter_mut() {
                *v = (*v as f64 * scale + shift) as f32;
            }
        });
    Ok(out)
}
