use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Upper bound on the im2col scratch buffer of one worker, in f32 elements.
const COLUMN_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub has_bias: bool,
}

impl ConvParams {
    /// Stride 1, "same" zero padding, no bias.
    pub fn same(in_channels: usize, out_channels: usize, kernel: [usize; 3]) -> Self {
        ConvParams {
            in_channels,
            out_channels,
            kernel,
            stride: [1; 3],
            padding: kernel.map(|k| k.saturating_sub(1) / 2),
            has_bias: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = [stride; 3];
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn weight_dims(&self) -> Vec<usize> {
        let [kd, kh, kw] = self.kernel;
        vec![self.out_channels, self.in_channels, kd, kh, kw]
    }

    pub fn weight_len(&self) -> usize {
        self.weight_dims().iter().product()
    }

    /// Weights plus bias.
    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.has_bias { self.out_channels } else { 0 }
    }

    /// Reduction length per output element (fan-in).
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }

    pub fn output_spatial(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if self.stride[a] == 0 || padded < self.kernel[a] {
                return Err(Error::Shape(format!(
                    "kernel {:?} stride {:?} does not fit input {input:?}",
                    self.kernel, self.stride
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// Multiply-accumulates for one forward call at `input` spatial size.
    pub fn macs(&self, input: [usize; 3]) -> Result<u64> {
        let out = self.output_spatial(input)?;
        let voxels: usize = out.iter().product();
        Ok((self.out_channels * self.fan_in()) as u64 * voxels as u64)
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument("conv with zero channels".into()));
        }
        if self.kernel.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::InvalidArgument(format!(
                "kernel {:?} must be odd",
                self.kernel
            )));
        }
        Ok(())
    }
}

/// 3-D cross-correlation (no kernel flip) with zero padding.
///
/// `weights` is `[Cout, Cin, kd, kh, kw]` row-major. Each worker lowers a
/// fixed-size block of output voxels to columns and multiplies it with the
/// weight matrix; block boundaries depend only on the layer shape, so the
/// result does not depend on the thread count.
pub fn conv3d(x: &Tensor, weights: &[f32], bias: Option<&[f32]>, p: &ConvParams) -> Result<Tensor> {
    p.validate()?;
    let [n, cin, ..] = x.shape();
    if cin != p.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, got {cin}",
            p.in_channels
        )));
    }
    if weights.len() != p.weight_len() {
        return Err(Error::Shape(format!(
            "conv weights have {} elements, expected {} for {:?}",
            weights.len(),
            p.weight_len(),
            p.weight_dims()
        )));
    }
    match (bias, p.has_bias) {
        (Some(b), true) if b.len() == p.out_channels => {}
        (None, false) => {}
        _ => {
            return Err(Error::Shape(format!(
                "conv bias does not match has_bias={} Cout={}",
                p.has_bias, p.out_channels
            )))
        }
    }

    let in_sp = x.spatial();
    let out_sp = p.output_spatial(in_sp)?;
    let m_total: usize = out_sp.iter().product();
    let k_total = p.fan_in();
    let cout = p.out_channels;
    let pointwise = p.kernel == [1, 1, 1] && p.stride == [1, 1, 1] && p.padding == [0, 0, 0];

    let block = (COLUMN_BUDGET / k_total).clamp(256, m_total.max(256));
    let n_blocks = m_total.div_ceil(block);

    let mut out = Tensor::zeros([n, cout, out_sp[0], out_sp[1], out_sp[2]])?;
    let in_len = x.plane_len() * cin;
    for s in 0..n {
        let sample = &x.data()[s * in_len..(s + 1) * in_len];
        let results: Vec<Vec<f32>> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let m0 = b * block;
                let m1 = (m0 + block).min(m_total);
                let cols = m1 - m0;
                let mut acc = vec![0f32; cout * cols];
                let lowered;
                let (b_ptr, rsb) = if pointwise {
                    (sample[m0..].as_ptr(), m_total as isize)
                } else {
                    lowered = im2col(sample, in_sp, out_sp, p, m0, m1);
                    (lowered.as_ptr(), cols as isize)
                };
                // SAFETY: A is cout x k_total (row-major weights), B is
                // k_total x cols with row stride `rsb` inside `sample` or
                // `lowered`, C is the cout x cols `acc` buffer.
                unsafe {
                    matrixmultiply::sgemm(
                        cout,
                        k_total,
                        cols,
                        1.0,
                        weights.as_ptr(),
                        k_total as isize,
                        1,
                        b_ptr,
                        rsb,
                        1,
                        0.0,
                        acc.as_mut_ptr(),
                        cols as isize,
                        1,
                    );
                }
                acc
            })
            .collect();

        let out_len = m_total * cout;
        let dst = &mut out.data_mut()[s * out_len..(s + 1) * out_len];
        for (b, acc) in results.iter().enumerate() {
            let m0 = b * block;
            let cols = acc.len() / cout;
            for co in 0..cout {
                dst[co * m_total + m0..co * m_total + m0 + cols]
                    .copy_from_slice(&acc[co * cols..(co + 1) * cols]);
            }
        }
        if let Some(bias) = bias {
            dst.par_chunks_mut(m_total)
                .zip(bias.par_iter())
                .for_each(|(plane, &b)| plane.iter_mut().for_each(|v| *v += b));
        }
    }
    Ok(out)
}

/// Columns `m0..m1` of the lowered input: row `(ci, a, b, c)` holds the
/// input sample each output voxel sees at kernel tap `(a, b, c)`.
fn im2col(
    sample: &[f32],
    in_sp: [usize; 3],
    out_sp: [usize; 3],
    p: &ConvParams,
    m0: usize,
    m1: usize,
) -> Vec<f32> {
    let cols = m1 - m0;
    let [kd, kh, kw] = p.kernel;
    let [di, hi, wi] = in_sp;
    let plane = di * hi * wi;
    // Top-left-front input coordinate of each output voxel's window.
    let corners: Vec<[isize; 3]> = (m0..m1)
        .map(|m| {
            let ow = m % out_sp[2];
            let oh = (m / out_sp[2]) % out_sp[1];
            let od = m / (out_sp[2] * out_sp[1]);
            [
                (od * p.stride[0]) as isize - p.padding[0] as isize,
                (oh * p.stride[1]) as isize - p.padding[1] as isize,
                (ow * p.stride[2]) as isize - p.padding[2] as isize,
            ]
        })
        .collect();

    let mut col = vec![0f32; p.fan_in() * cols];
    let mut row = 0;
    for ci in 0..p.in_channels {
        let chan = &sample[ci * plane..(ci + 1) * plane];
        for a in 0..kd as isize {
            for b in 0..kh as isize {
                for c in 0..kw as isize {
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for (v, corner) in dst.iter_mut().zip(&corners) {
                        let d = corner[0] + a;
                        let h = corner[1] + b;
                        let w = corner[2] + c;
                        if d >= 0
                            && h >= 0
                            && w >= 0
                            && (d as usize) < di
                            && (h as usize) < hi
                            && (w as usize) < wi
                        {
                            *v = chan[(d as usize * hi + h as usize) * wi + w as usize];
                        }
                    }
                    row += 1;
                }
            }
        }
    }
    col
}

/// Intra-slice then inter-slice convolution, no nonlinearity in between.
///
/// A 3×3×3 kernel is factored into an in-plane 3×3 part and a through-plane
/// 3 part. The literature writes these as k×k×1 and 1×1×k with the
/// through-plane axis last; in (D, H, W) storage the through-plane axis is D,
/// so the intra-slice kernel is stored as `(1, 3, 3)` and the inter-slice
/// kernel as `(3, 1, 1)`.
///
/// `w_intra` is `[Cout, Cin, 1, 3, 3]`, `w_inter` is `[Cout, Cout, 3, 1, 1]`.
pub fn anisotropic_conv(
    x: &Tensor,
    w_intra: &[f32],
    w_inter: &[f32],
    out_channels: usize,
) -> Result<Tensor> {
    let (intra, inter) = anisotropic_params(x.channels(), out_channels);
    let y = conv3d(x, w_intra, None, &intra)?;
    conv3d(&y, w_inter, None, &inter)
}

/// The two convolutions making up [`anisotropic_conv`].
pub fn anisotropic_params(in_channels: usize, out_channels: usize) -> (ConvParams, ConvParams) {
    (
        ConvParams::same(in_channels, out_channels, [1, 3, 3]),
        ConvParams::same(out_channels, out_channels, [3, 1, 1]),
    )
}
