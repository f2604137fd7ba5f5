//! Exact Euclidean distance transform on an anisotropic grid, by the
//! separable lower-envelope-of-parabolas method.

/// Squared distance (in physical units) from every voxel center to the
/// nearest `true` voxel center; `f64::INFINITY` everywhere if there is none.
pub fn squared_distance_to(mask: &[bool], shape: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [d, h, w] = shape;
    let mut f: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let strides = [h * w, w, 1];
    let mut line = Vec::new();
    let mut out = Vec::new();
    for axis in 0..3 {
        let n = shape[axis];
        let stride = strides[axis];
        let starts: Vec<usize> = (0..d * h * w)
            .filter(|&i| {
                let idx = [i / (h * w), (i / w) % h, i % w];
                idx[axis] == 0
            })
            .collect();
        for start in starts {
            line.clear();
            line.extend((0..n).map(|k| f[start + k * stride]));
            envelope_1d(&line, spacing[axis], &mut out);
            for k in 0..n {
                f[start + k * stride] = out[k];
            }
        }
    }
    f
}

/// `out[q] = min_p f[p] + (s·(q − p))²`.
fn envelope_1d(f: &[f64], s: f64, out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let sites: Vec<usize> = (0..n).filter(|&p| f[p].is_finite()).collect();
    if sites.is_empty() {
        return;
    }
    let pos = |p: usize| p as f64 * s;
    // Parabola vertices and the boundaries between their regions.
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let intersect = |p: usize, q: usize| {
        ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)))
    };
    for &q in &sites {
        while let Some(&p) = v.last() {
            let x = intersect(p, q);
            if x <= *z.last().unwrap() {
                v.pop();
                z.pop();
            } else {
                v.push(q);
                z.push(x);
                break;
            }
        }
        if v.is_empty() {
            v.push(q);
            z.clear();
            z.push(f64::NEG_INFINITY);
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = pos(q);
        while k + 1 < v.len() && z[k + 1] < x {
            k += 1;
        }
        let dx = x - pos(v[k]);
        *o = f[v[k]] + dx * dx;
    }
}
