//! Grid resampling with the half-pixel (align_corners = false) convention:
//! output index `t` samples source coordinate `(t + 0.5) * S / S' - 0.5`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source coordinate of output index `t`, clamped to `[0, src - 1]`.
pub fn source_coordinate(t: usize, src: usize, dst: usize) -> f64 {
    let s = (t as f64 + 0.5) * (src as f64 / dst as f64) - 0.5;
    s.clamp(0.0, (src - 1) as f64)
}

#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f32,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    (0..dst)
        .map(|t| {
            let s = source_coordinate(t, src, dst);
            let lo = s.floor() as usize;
            Tap {
                lo,
                hi: (lo + 1).min(src - 1),
                frac: (s - lo as f64) as f32,
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f32, b: f32, f: f32) -> f32 {
    a + f * (b - a)
}

/// Trilinear resize of every (n, c) channel to `out_size`.
///
/// Applied one axis at a time (W, then H, then D) in `a + f·(b − a)` form,
/// which reproduces constant inputs exactly.
pub fn resize_trilinear(x: &Tensor, out_size: [usize; 3]) -> Result<Tensor> {
    if out_size.contains(&0) {
        return Err(Error::Shape(format!("resize to {out_size:?}")));
    }
    let [n, c, d, h, w] = x.shape();
    if [d, h, w] == out_size {
        return Ok(x.clone());
    }
    let [od, oh, ow] = out_size;
    let (td, th, tw) = (taps(d, od), taps(h, oh), taps(w, ow));
    let mut out = Tensor::zeros([n, c, od, oh, ow])?;
    out.data_mut()
        .par_chunks_mut(od * oh * ow)
        .enumerate()
        .for_each(|(i, dst)| {
            let src = x.channel(i / c, i % c);
            // along W
            let mut a = vec![0f32; d * h * ow];
            for (row_in, row_out) in src.chunks_exact(w).zip(a.chunks_exact_mut(ow)) {
                for (v, t) in row_out.iter_mut().zip(&tw) {
                    *v = lerp(row_in[t.lo], row_in[t.hi], t.frac);
                }
            }
            // along H
            let mut b = vec![0f32; d * oh * ow];
            for z in 0..d {
                for (y, t) in th.iter().enumerate() {
                    let lo = &a[(z * h + t.lo) * ow..][..ow];
                    let hi = &a[(z * h + t.hi) * ow..][..ow];
                    let o = &mut b[(z * oh + y) * ow..][..ow];
                    for k in 0..ow {
                        o[k] = lerp(lo[k], hi[k], t.frac);
                    }
                }
            }
            // along D
            let slab = oh * ow;
            for (z, t) in td.iter().enumerate() {
                let lo = &b[t.lo * slab..][..slab];
                let hi = &b[t.hi * slab..][..slab];
                let o = &mut dst[z * slab..][..slab];
                for k in 0..slab {
                    o[k] = lerp(lo[k], hi[k], t.frac);
                }
            }
        });
    Ok(out)
}

/// Index of the nearest source sample under the half-pixel convention.
pub fn nearest_index(t: usize, src: usize, dst: usize) -> usize {
    let s = (t as f64 + 0.5) * (src as f64 / dst as f64);
    (s.floor() as usize).min(src - 1)
}

/// Nearest-neighbour resize of a (D, H, W) grid. Never invents values.
pub fn resize_nearest_labels<T: Copy + Send + Sync>(
    grid: &[T],
    in_shape: [usize; 3],
    out_shape: [usize; 3],
) -> Result<Vec<T>> {
    let [d, h, w] = in_shape;
    if grid.len() != d * h * w {
        return Err(Error::Shape(format!(
            "grid of {} voxels does not match {in_shape:?}",
            grid.len()
        )));
    }
    if in_shape.iter().chain(&out_shape).any(|&s| s == 0) {
        return Err(Error::Shape(format!("resize {in_shape:?} -> {out_shape:?}")));
    }
    if in_shape == out_shape {
        return Ok(grid.to_vec());
    }
    let [od, oh, ow] = out_shape;
    let id: Vec<usize> = (0..od).map(|t| nearest_index(t, d, od)).collect();
    let ih: Vec<usize> = (0..oh).map(|t| nearest_index(t, h, oh)).collect();
    let iw: Vec<usize> = (0..ow).map(|t| nearest_index(t, w, ow)).collect();
    let mut out = Vec::with_capacity(od * oh * ow);
    for &z in &id {
        for &y in &ih {
            let row = &grid[(z * h + y) * w..][..w];
            out.extend(iw.iter().map(|&x| row[x]));
        }
    }
    Ok(out)
}
