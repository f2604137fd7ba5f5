use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Non-overlapping average pooling with window = stride = `factor`.
pub fn avg_pool3d(x: &Tensor, factor: [usize; 3]) -> Result<Tensor> {
    let [n, c, d, h, w] = x.shape();
    let sp = [d, h, w];
    if (0..3).any(|a| factor[a] == 0 || sp[a] % factor[a] != 0) {
        return Err(Error::Shape(format!(
            "avg_pool factor {factor:?} does not divide spatial size {sp:?}"
        )));
    }
    let [fd, fh, fw] = factor;
    let (od, oh, ow) = (d / fd, h / fh, w / fw);
    let window = (fd * fh * fw) as f64;
    let mut out = Tensor::zeros([n, c, od, oh, ow])?;
    let out_plane = od * oh * ow;
    out.data_mut()
        .par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(i, dst)| {
            let src = x.channel(i / c, i % c);
            for z in 0..od {
                for y in 0..oh {
                    for xw in 0..ow {
                        let mut acc = 0f64;
                        for a in 0..fd {
                            for b in 0..fh {
                                let row = ((z * fd + a) * h + y * fh + b) * w + xw * fw;
                                acc += src[row..row + fw].iter().map(|&v| v as f64).sum::<f64>();
                            }
                        }
                        dst[(z * oh + y) * ow + xw] = (acc / window) as f32;
                    }
                }
            }
        });
    Ok(out)
}

/// Average pooling with window = stride = `factor`, rounding the output size
/// up. Edge windows that run past the input average only the voxels they
/// cover. Equal to [`avg_pool3d`] when `factor` divides the input.
pub fn avg_pool3d_ceil(x: &Tensor, factor: [usize; 3]) -> Result<Tensor> {
    let [n, c, d, h, w] = x.shape();
    if factor.contains(&0) {
        return Err(Error::Shape(format!("avg_pool factor {factor:?}")));
    }
    let [fd, fh, fw] = factor;
    let (od, oh, ow) = (d.div_ceil(fd), h.div_ceil(fh), w.div_ceil(fw));
    let mut out = Tensor::zeros([n, c, od, oh, ow])?;
    out.data_mut()
        .par_chunks_mut(od * oh * ow)
        .enumerate()
        .for_each(|(i, dst)| {
            let src = x.channel(i / c, i % c);
            for z in 0..od {
                let zs = z * fd..((z + 1) * fd).min(d);
                for y in 0..oh {
                    let ys = y * fh..((y + 1) * fh).min(h);
                    for xw in 0..ow {
                        let xs = xw * fw..((xw + 1) * fw).min(w);
                        let mut acc = 0f64;
                        for a in zs.clone() {
                            for b in ys.clone() {
                                let row = (a * h + b) * w;
                                acc += src[row + xs.start..row + xs.end]
                                    .iter()
                                    .map(|&v| v as f64)
                                    .sum::<f64>();
                            }
                        }
                        let count = zs.len() * ys.len() * xs.len();
                        dst[(z * oh + y) * ow + xw] = (acc / count as f64) as f32;
                    }
                }
            }
        });
    Ok(out)
}

/// The spatial axis a strip pool keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialAxis {
    D,
    H,
    W,
}

impl SpatialAxis {
    pub const ALL: [SpatialAxis; 3] = [SpatialAxis::D, SpatialAxis::H, SpatialAxis::W];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Mean over the two spatial axes other than `kept`, broadcast back so every
/// voxel holds the mean of its strip. Shape is preserved.
///
/// Keeping D averages each 1×N×N slab, keeping H each N×1×N slab, keeping W
/// each N×N×1 slab.
pub fn strip_pool(x: &Tensor, kept: SpatialAxis) -> Tensor {
    let [_, c, d, h, w] = x.shape();
    let plane = d * h * w;
    let mut out = x.zeros_like();
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(i, dst)| {
            let src = x.channel(i / c, i % c);
            let coord = |idx: usize| match kept {
                SpatialAxis::D => idx / (h * w),
                SpatialAxis::H => (idx / w) % h,
                SpatialAxis::W => idx % w,
            };
            let extent = [d, h, w][kept.index()];
            let mut sums = vec![0f64; extent];
            for (idx, &v) in src.iter().enumerate() {
                sums[coord(idx)] += v as f64;
            }
            let count = (plane / extent) as f64;
            let means: Vec<f32> = sums.iter().map(|s| (s / count) as f32).collect();
            for (idx, v) in dst.iter_mut().enumerate() {
                *v = means[coord(idx)];
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn avg_pool_constant_and_ramp() {
        let t = Tensor::full([1, 2, 4, 4, 8], 1.5).unwrap();
        let p = avg_pool3d(&t, [2, 2, 2]).unwrap();
        assert_eq!(p.shape(), [1, 2, 2, 2, 4]);
        assert!(p.data().iter().all(|&v| v == 1.5));

        let r = Tensor::from_vec([1, 1, 2, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        assert_eq!(avg_pool3d(&r, [2, 2, 2]).unwrap().data(), &[3.5]);
    }

    #[test]
    fn avg_pool_rejects_non_divisible() {
        let t = Tensor::zeros([1, 1, 6, 6, 6]).unwrap();
        assert!(avg_pool3d(&t, [4, 4, 4]).is_err());
    }

    #[test]
    fn ceil_pool_partial_windows() {
        let r = Tensor::from_vec([1, 1, 1, 1, 6], (0..6).map(|v| v as f32).collect()).unwrap();
        assert_eq!(avg_pool3d_ceil(&r, [1, 1, 4]).unwrap().data(), &[1.5, 4.5]);
        let t = Tensor::from_vec([1, 2, 4, 4, 4], (0..128).map(|v| v as f32).collect()).unwrap();
        assert_eq!(avg_pool3d_ceil(&t, [2; 3]).unwrap(), avg_pool3d(&t, [2; 3]).unwrap());
    }

    #[test]
    fn strip_pool_single_voxel() {
        let mut x = Tensor::zeros([1, 1, 2, 2, 2]).unwrap();
        x.data_mut()[0] = 1.0;
        let y = strip_pool(&x, SpatialAxis::D);
        assert_eq!(y.data(), &[0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn strip_pool_constant() {
        let x = Tensor::full([1, 3, 3, 4, 5], -2.0).unwrap();
        for axis in SpatialAxis::ALL {
            assert_eq!(strip_pool(&x, axis), x);
        }
    }
}
