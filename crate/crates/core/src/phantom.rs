//! Deterministic synthetic abdomen: an elliptical body with ellipsoidal
//! organs, Gaussian noise, and the matching ground-truth labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::voxgrid::{Geometry, LabelVolume, Orientation, Volume};

/// Ellipsoid in normalized coordinates (each axis spans [-1, 1]).
struct Organ {
    label: u8,
    hu: f32,
    center: [f64; 3],
    radii: [f64; 3],
}

const AIR_HU: f32 = -1000.0;
const BODY_HU: f32 = 40.0;

// Centers and radii in (left, posterior, inferior) order, matching LPI
// storage axes.
const ORGANS: [Organ; 5] = [
    Organ { label: 1, hu: 110.0, center: [-0.35, 0.0, -0.25], radii: [0.30, 0.40, 0.30] },
    Organ { label: 2, hu: 180.0, center: [-0.45, 0.35, 0.10], radii: [0.09, 0.10, 0.16] },
    Organ { label: 2, hu: 180.0, center: [0.45, 0.35, 0.10], radii: [0.09, 0.10, 0.16] },
    Organ { label: 3, hu: 70.0, center: [0.50, 0.25, -0.20], radii: [0.10, 0.12, 0.15] },
    Organ { label: 4, hu: 95.0, center: [0.10, 0.05, 0.05], radii: [0.25, 0.08, 0.06] },
];

/// CT-like i16 volume and its labels.
pub struct Phantom {
    pub image: Volume<i16>,
    pub labels: LabelVolume,
}

/// Build a `side³` phantom in LPI order, then store it in `orientation`.
/// Identical `(side, seed, orientation)` give identical bytes.
pub fn synthetic_phantom(side: usize, seed: u64, orientation: Orientation) -> Result<Phantom> {
    let geometry = Geometry::new([side; 3], [1.5, 1.5, 2.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 12.0).expect("valid normal");
    let n = side * side * side;
    let mut image = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let coord = |i: usize| 2.0 * (i as f64 + 0.5) / side as f64 - 1.0;
    for d in 0..side {
        let l = coord(d);
        for h in 0..side {
            let p = coord(h);
            for w in 0..side {
                let inf = coord(w);
                let pos = [l, p, inf];
                let in_body = (p / 0.75).powi(2) + (l / 0.92).powi(2) <= 1.0;
                let (mut hu, mut label) = if in_body { (BODY_HU, 0u8) } else { (AIR_HU, 0u8) };
                if in_body {
                    for o in &ORGANS {
                        let r: f64 = (0..3).map(|a| ((pos[a] - o.center[a]) / o.radii[a]).powi(2)).sum();
                        if r <= 1.0 {
                            hu = o.hu;
                            label = o.label;
                        }
                    }
                }
                let v = hu + noise.sample(&mut rng);
                image.push(v.round().clamp(i16::MIN as f32, i16::MAX as f32) as i16);
                labels.push(label);
            }
        }
    }
    let image = Volume::new(geometry.clone(), image)?;
    let labels = Volume::new(geometry, labels)?;
    Ok(Phantom {
        image: image.reorient(orientation),
        labels: labels.reorient(orientation),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_class_is_present_and_kidney_has_two_blobs() {
        let p = synthetic_phantom(48, 3, Orientation::LPI).unwrap();
        let mut counts = [0usize; 5];
        for &v in p.labels.data() {
            counts[v as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
        let mask: Vec<bool> = p.labels.data().iter().map(|&v| v == 2).collect();
        let (_, sizes) = crate::pipeline::connected_components(&mask, [48; 3], Default::default());
        assert_eq!(sizes.len(), 2);
    }

    #[test]
    fn seed_controls_noise_only() {
        let a = synthetic_phantom(16, 1, Orientation::LPI).unwrap();
        let b = synthetic_phantom(16, 1, Orientation::LPI).unwrap();
        let c = synthetic_phantom(16, 2, Orientation::LPI).unwrap();
        assert_eq!(a.image.data(), b.image.data());
        assert_ne!(a.image.data(), c.image.data());
        assert_eq!(a.labels.data(), c.labels.data());
    }

    #[test]
    fn stored_orientation_round_trips() {
        let ras: Orientation = "ras".parse().unwrap();
        let p = synthetic_phantom(16, 1, ras).unwrap();
        let q = synthetic_phantom(16, 1, Orientation::LPI).unwrap();
        assert_eq!(p.image.geometry().orientation, ras);
        assert_eq!(p.image.reorient(Orientation::LPI).data(), q.image.data());
    }
}
