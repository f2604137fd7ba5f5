//! Brute-force reference implementations shared by the operator property
//! tests and the acceptance target. Everything accumulates in f64 and loops
//! over indices directly.

#![allow(dead_code)]

use std::collections::VecDeque;

use effseg::nnops::ConvParams;
use effseg::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

pub fn random_tensor(shape: [usize; 5], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(shape, random_vec(shape.iter().product(), rng)).unwrap()
}

/// Largest elementwise difference divided by the largest reference
/// magnitude (or 1 if the reference is all zero).
pub fn rel_error(got: &[f32], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (&a, &b)| m.max((a as f64 - b).abs()));
    diff / if scale > 0.0 { scale } else { 1.0 }
}

pub fn conv3d_ref(x: &Tensor, w: &[f32], bias: Option<&[f32]>, p: &ConvParams) -> (Vec<f64>, [usize; 5]) {
    let [n, cin, d, h, wd] = x.shape();
    let [kd, kh, kw] = p.kernel;
    let out = p.output_spatial([d, h, wd]).unwrap();
    let cout = p.out_channels;
    let mut y = Vec::with_capacity(n * cout * out.iter().product::<usize>());
    for b in 0..n {
        for co in 0..cout {
            for oz in 0..out[0] {
                for oy in 0..out[1] {
                    for ox in 0..out[2] {
                        let mut acc = bias.map_or(0.0, |bb| bb[co] as f64);
                        for ci in 0..cin {
                            for a in 0..kd {
                                for bq in 0..kh {
                                    for c in 0..kw {
                                        let z = (oz * p.stride[0] + a) as isize - p.padding[0] as isize;
                                        let yy = (oy * p.stride[1] + bq) as isize - p.padding[1] as isize;
                                        let xx = (ox * p.stride[2] + c) as isize - p.padding[2] as isize;
                                        if z < 0 || yy < 0 || xx < 0 || z >= d as isize || yy >= h as isize || xx >= wd as isize {
                                            continue;
                                        }
                                        let xv = x.at([b, ci, z as usize, yy as usize, xx as usize]) as f64;
                                        let wv = w[(((co * cin + ci) * kd + a) * kh + bq) * kw + c] as f64;
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        y.push(acc);
                    }
                }
            }
        }
    }
    (y, [n, cout, out[0], out[1], out[2]])
}

pub fn instance_norm_ref(x: &Tensor, gamma: &[f32], beta: &[f32], eps: f64) -> Vec<f64> {
    let [n, c, ..] = x.shape();
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        for ch in 0..c {
            let v: Vec<f64> = x.channel(b, ch).iter().map(|&a| a as f64).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64;
            let inv = 1.0 / (var + eps).sqrt();
            out.extend(v.iter().map(|a| (a - mean) * inv * gamma[ch] as f64 + beta[ch] as f64));
        }
    }
    out
}

/// Ceil-mode average pooling; partial edge windows average what they cover.
pub fn avg_pool_ref(x: &Tensor, f: [usize; 3]) -> Vec<f64> {
    let [n, c, d, h, w] = x.shape();
    let o = [d.div_ceil(f[0]), h.div_ceil(f[1]), w.div_ceil(f[2])];
    let mut out = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for z in 0..o[0] {
                for y in 0..o[1] {
                    for xx in 0..o[2] {
                        let (mut s, mut k) = (0.0, 0usize);
                        for zz in z * f[0]..((z + 1) * f[0]).min(d) {
                            for yy in y * f[1]..((y + 1) * f[1]).min(h) {
                                for xw in xx * f[2]..((xx + 1) * f[2]).min(w) {
                                    s += x.at([b, ch, zz, yy, xw]) as f64;
                                    k += 1;
                                }
                            }
                        }
                        out.push(s / k as f64);
                    }
                }
            }
        }
    }
    out
}

pub fn strip_pool_ref(x: &Tensor, kept: usize) -> Vec<f64> {
    let [n, c, d, h, w] = x.shape();
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        for ch in 0..c {
            for z in 0..d {
                for y in 0..h {
                    for xx in 0..w {
                        let idx = [z, y, xx];
                        let (mut s, mut k) = (0.0, 0usize);
                        for zz in 0..d {
                            for yy in 0..h {
                                for xw in 0..w {
                                    if [zz, yy, xw][kept] == idx[kept] {
                                        s += x.at([b, ch, zz, yy, xw]) as f64;
                                        k += 1;
                                    }
                                }
                            }
                        }
                        out.push(s / k as f64);
                    }
                }
            }
        }
    }
    out
}

/// Trilinear sample at half-pixel source coordinates, as an explicit sum
/// over the eight surrounding corners.
pub fn trilinear_ref(x: &Tensor, out: [usize; 3]) -> Vec<f64> {
    let [n, c, d, h, w] = x.shape();
    let src = [d, h, w];
    let coord = |t: usize, a: usize| -> (usize, usize, f64) {
        let s = ((t as f64 + 0.5) * src[a] as f64 / out[a] as f64 - 0.5).clamp(0.0, (src[a] - 1) as f64);
        let lo = s.floor() as usize;
        (lo, (lo + 1).min(src[a] - 1), s - lo as f64)
    };
    let mut res = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for z in 0..out[0] {
                for y in 0..out[1] {
                    for xx in 0..out[2] {
                        let cs = [coord(z, 0), coord(y, 1), coord(xx, 2)];
                        let mut acc = 0.0;
                        for corner in 0..8 {
                            let mut idx = [0usize; 3];
                            let mut wgt = 1.0;
                            for a in 0..3 {
                                let (lo, hi, f) = cs[a];
                                if corner >> a & 1 == 1 {
                                    idx[a] = hi;
                                    wgt *= f;
                                } else {
                                    idx[a] = lo;
                                    wgt *= 1.0 - f;
                                }
                            }
                            acc += wgt * x.at([b, ch, idx[0], idx[1], idx[2]]) as f64;
                        }
                        res.push(acc);
                    }
                }
            }
        }
    }
    res
}

/// Component sizes by BFS, in raster order of each component's first voxel.
pub fn bfs_component_sizes(mask: &[bool], shape: [usize; 3], full: bool) -> Vec<usize> {
    let [_, h, w] = shape;
    let mut seen = vec![false; mask.len()];
    let mut sizes = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = [(i / (h * w)) as isize, ((i / w) % h) as isize, (i % w) as isize];
            for dz in -1..=1isize {
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let nonzero = (dz != 0) as u8 + (dy != 0) as u8 + (dx != 0) as u8;
                        if nonzero == 0 || (!full && nonzero != 1) {
                            continue;
                        }
                        let q = [p[0] + dz, p[1] + dy, p[2] + dx];
                        if (0..3).any(|a| q[a] < 0 || q[a] >= shape[a] as isize) {
                            continue;
                        }
                        let j = (q[0] as usize * h + q[1] as usize) * w + q[2] as usize;
                        if mask[j] && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

/// Per-class island filter from the definition: drop components smaller
/// than `ratio` times the class's largest.
pub fn island_filter_ref(labels: &[u8], shape: [usize; 3], ratio: f64, full: bool) -> Vec<u8> {
    let mut out = labels.to_vec();
    for class in 1..=4u8 {
        let mask: Vec<bool> = labels.iter().map(|&v| v == class).collect();
        let sizes = bfs_component_sizes(&mask, shape, full);
        let Some(&largest) = sizes.iter().max() else { continue };
        // Re-walk to find members of each component.
        let [_, h, w] = shape;
        let mut seen = vec![false; mask.len()];
        for start in 0..mask.len() {
            if !mask[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut members = vec![start];
            let mut k = 0;
            while k < members.len() {
                let i = members[k];
                k += 1;
                let p = [(i / (h * w)) as isize, ((i / w) % h) as isize, (i % w) as isize];
                for dz in -1..=1isize {
                    for dy in -1..=1isize {
                        for dx in -1..=1isize {
                            let nonzero = (dz != 0) as u8 + (dy != 0) as u8 + (dx != 0) as u8;
                            if nonzero == 0 || (!full && nonzero != 1) {
                                continue;
                            }
                            let q = [p[0] + dz, p[1] + dy, p[2] + dx];
                            if (0..3).any(|a| q[a] < 0 || q[a] >= shape[a] as isize) {
                                continue;
                            }
                            let j = (q[0] as usize * h + q[1] as usize) * w + q[2] as usize;
                            if mask[j] && !seen[j] {
                                seen[j] = true;
                                members.push(j);
                            }
                        }
                    }
                }
            }
            if (members.len() as f64) < ratio * largest as f64 {
                for i in members {
                    out[i] = 0;
                }
            }
        }
    }
    out
}
