//! Connected-component labeling on (D, H, W) grids and the per-class
//! island filter applied to network output.

use serde::{Deserialize, Serialize};

use crate::voxgrid::{LabelVolume, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Connectivity {
    /// Face neighbours only.
    #[serde(rename = "6")]
    Six,
    /// Face, edge and corner neighbours.
    #[serde(rename = "26")]
    #[default]
    TwentySix,
}

impl Connectivity {
    /// Neighbour offsets that precede a voxel in raster order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dd in -1..=0isize {
            for dh in -1..=1isize {
                for dw in -1..=1isize {
                    let before = dd < 0 || (dd == 0 && (dh < 0 || (dh == 0 && dw < 0)));
                    let face = (dd != 0) as u8 + (dh != 0) as u8 + (dw != 0) as u8 == 1;
                    if before && (self == Connectivity::TwentySix || face) {
                        out.push([dd, dh, dw]);
                    }
                }
            }
        }
        out
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Label the `true` voxels of `mask` by connected component.
///
/// Returns per-voxel labels (0 = not in mask, components numbered from 1 in
/// raster order of their first voxel) and the voxel count of each component
/// (`sizes[k - 1]` for label `k`).
pub fn connected_components(
    mask: &[bool],
    shape: [usize; 3],
    connectivity: Connectivity,
) -> (Vec<u32>, Vec<usize>) {
    let [d, h, w] = shape;
    assert_eq!(mask.len(), d * h * w, "mask does not match shape");
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![0u32; mask.len()];
    let mut sets = DisjointSet { parent: vec![0] };

    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if !mask[i] {
                    continue;
                }
                let mut label = 0u32;
                for off in &offsets {
                    let (nz, ny, nx) = (z as isize + off[0], y as isize + off[1], x as isize + off[2]);
                    if nz < 0 || ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = (nz as usize * h + ny as usize) * w + nx as usize;
                    let other = provisional[j];
                    if other == 0 {
                        continue;
                    }
                    if label == 0 {
                        label = other;
                    } else {
                        sets.union(label, other);
                    }
                }
                if label == 0 {
                    label = sets.parent.len() as u32;
                    sets.parent.push(label);
                }
                provisional[i] = label;
            }
        }
    }

    let mut canonical = vec![0u32; sets.parent.len()];
    let mut sizes = Vec::new();
    for l in provisional.iter_mut().filter(|l| **l != 0) {
        let root = sets.find(*l) as usize;
        if canonical[root] == 0 {
            sizes.push(0);
            canonical[root] = sizes.len() as u32;
        }
        *l = canonical[root];
        sizes[*l as usize - 1] += 1;
    }
    (provisional, sizes)
}

/// Per foreground class, drop components smaller than `keep_ratio` times the
/// class's largest component. Dropped voxels become background; kept
/// components are untouched.
pub fn postprocess_cc(mask: &LabelVolume, keep_ratio: f32, connectivity: Connectivity) -> LabelVolume {
    let shape = mask.shape();
    let mut out = mask.clone();
    for class in 1..NUM_CLASSES as u8 {
        let binary: Vec<bool> = mask.data().iter().map(|&v| v == class).collect();
        if !binary.contains(&true) {
            continue;
        }
        let (labels, sizes) = connected_components(&binary, shape, connectivity);
        let largest = *sizes.iter().max().unwrap() as f64;
        let threshold = keep_ratio as f64 * largest;
        let keep: Vec<bool> = sizes.iter().map(|&s| s as f64 >= threshold).collect();
        for (v, &l) in out.data_mut().iter_mut().zip(&labels) {
            if l != 0 && !keep[l as usize - 1] {
                *v = 0;
            }
        }
    }
    out
}
