//! Overlap (Dice) and boundary (normalized surface distance) scores between
//! a predicted and a reference label volume.

mod edt;

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use edt::squared_distance_to;

use crate::error::{Error, Result};
use crate::voxgrid::{read_volume, Geometry, LabelVolume, ORGAN_NAMES};

pub const DEFAULT_NSD_TOLERANCE_MM: f64 = 1.0;

fn check_grids(pred: &LabelVolume, gt: &LabelVolume) -> Result<()> {
    if pred.geometry().same_grid(gt.geometry()) {
        Ok(())
    } else {
        Err(Error::GeometryMismatch(format!(
            "prediction {:?} vs reference {:?}",
            pred.geometry(),
            gt.geometry()
        )))
    }
}

fn class_mask(v: &LabelVolume, class_id: u8) -> Vec<bool> {
    v.data().iter().map(|&l| l == class_id).collect()
}

/// `2|P∩G| / (|P|+|G|)`; `None` when both are empty.
pub fn dsc(pred: &LabelVolume, gt: &LabelVolume, class_id: u8) -> Result<Option<f64>> {
    check_grids(pred, gt)?;
    let (mut p, mut g, mut both) = (0u64, 0u64, 0u64);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a == class_id, b == class_id);
        p += a as u64;
        g += b as u64;
        both += (a && b) as u64;
    }
    Ok(match p + g {
        0 => None,
        total => Some(2.0 * both as f64 / total as f64),
    })
}

/// Foreground voxels with at least one face neighbour that is background or
/// outside the grid.
pub fn boundary(mask: &[bool], shape: [usize; 3]) -> Vec<bool> {
    let [d, h, w] = shape;
    let mut out = vec![false; mask.len()];
    for z in 0..d {
        for y in 0..h {
            for x in 0..w {
                let i = (z * h + y) * w + x;
                if !mask[i] {
                    continue;
                }
                out[i] = z == 0
                    || y == 0
                    || x == 0
                    || z + 1 == d
                    || y + 1 == h
                    || x + 1 == w
                    || !mask[i - h * w]
                    || !mask[i + h * w]
                    || !mask[i - w]
                    || !mask[i + w]
                    || !mask[i - 1]
                    || !mask[i + 1];
            }
        }
    }
    out
}

/// Boundary voxels of `from` within `tol_mm` of the boundary `to`.
fn count_within(from: &[bool], to: &[bool], geometry: &Geometry, tol_mm: f64) -> (u64, u64) {
    let dist2 = squared_distance_to(to, geometry.shape, geometry.spacing);
    let tol2 = tol_mm * tol_mm;
    let mut total = 0;
    let mut hit = 0;
    for (&b, &d2) in from.iter().zip(&dist2) {
        if b {
            total += 1;
            hit += (d2 <= tol2) as u64;
        }
    }
    (hit, total)
}

/// Normalized surface distance at tolerance `tol_mm` between voxel-center
/// boundary sets; `None` when both masks are empty, 0 when one is.
pub fn nsd(pred: &LabelVolume, gt: &LabelVolume, class_id: u8, tol_mm: f64) -> Result<Option<f64>> {
    check_grids(pred, gt)?;
    if tol_mm.is_nan() || tol_mm < 0.0 {
        return Err(Error::InvalidArgument(format!("NSD tolerance must be >= 0, got {tol_mm}")));
    }
    let shape = pred.shape();
    let bp = boundary(&class_mask(pred, class_id), shape);
    let bg = boundary(&class_mask(gt, class_id), shape);
    let np = bp.iter().filter(|&&b| b).count();
    let ng = bg.iter().filter(|&&b| b).count();
    match (np, ng) {
        (0, 0) => return Ok(None),
        (0, _) | (_, 0) => return Ok(Some(0.0)),
        _ => {}
    }
    let (hp, tp) = count_within(&bp, &bg, pred.geometry(), tol_mm);
    let (hg, tg) = count_within(&bg, &bp, pred.geometry(), tol_mm);
    Ok(Some((hp + hg) as f64 / (tp + tg) as f64))
}

/// A score that may be undefined; serialized as a number or `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score(pub Option<f64>);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Score(Some(v))),
            Raw::Text(t) if t == "undefined" => Ok(Score(None)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected score {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub dsc: Score,
    pub nsd: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub case: String,
    pub tol_mm: f64,
    pub per_class: IndexMap<String, ClassScores>,
    /// Unweighted means over the classes where each score is defined.
    pub average: ClassScores,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Score every organ class of two in-memory label volumes.
pub fn evaluate(pred: &LabelVolume, gt: &LabelVolume, tol_mm: f64, case: &str) -> Result<MetricsReport> {
    check_grids(pred, gt)?;
    pred.validate_labels()?;
    gt.validate_labels()?;
    let mut per_class = IndexMap::new();
    for (i, name) in ORGAN_NAMES.iter().enumerate() {
        let class_id = i as u8 + 1;
        let scores = ClassScores {
            dsc: Score(dsc(pred, gt, class_id)?),
            nsd: Score(nsd(pred, gt, class_id, tol_mm)?),
        };
        per_class.insert(name.to_string(), scores);
    }
    let average = ClassScores {
        dsc: Score(mean_defined(per_class.values().map(|c: &ClassScores| c.dsc.0))),
        nsd: Score(mean_defined(per_class.values().map(|c: &ClassScores| c.nsd.0))),
    };
    Ok(MetricsReport {
        case: case.to_string(),
        tol_mm,
        per_class,
        average,
    })
}

/// Read two SVF label files and score them. The case id is the prediction's
/// file stem.
pub fn evaluate_case(pred_path: &Path, gt_path: &Path, tol_mm: f64) -> Result<MetricsReport> {
    let pred = read_volume(pred_path)?.into_labels()?;
    let gt = read_volume(gt_path)?.into_labels()?;
    let case = pred_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    evaluate(&pred, &gt, tol_mm, &case)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxgrid::Volume;

    fn vol(shape: [usize; 3], data: Vec<u8>) -> LabelVolume {
        Volume::new(Geometry::new(shape, [1.0; 3]), data).unwrap()
    }

    #[test]
    fn shell_of_solid_box() {
        let shape = [4, 5, 6];
        let b = boundary(&vec![true; 120], shape);
        let shell = 120 - 2 * 3 * 4;
        assert_eq!(b.iter().filter(|&&v| v).count(), shell);
    }

    #[test]
    fn undefined_scores_serialize_as_text() {
        let s = ClassScores { dsc: Score(Some(0.5)), nsd: Score(None) };
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"dsc":0.5,"nsd":"undefined"}"#);
        assert_eq!(serde_json::from_str::<ClassScores>(&text).unwrap(), s);
    }

    #[test]
    fn single_voxels_far_apart() {
        let mut a = vec![0u8; 10];
        let mut b = vec![0u8; 10];
        a[0] = 1;
        b[5] = 1;
        let (a, b) = (vol([1, 1, 10], a), vol([1, 1, 10], b));
        assert_eq!(nsd(&a, &b, 1, 1.0).unwrap(), Some(0.0));
        assert_eq!(nsd(&a, &b, 1, 5.0).unwrap(), Some(1.0));
        assert_eq!(dsc(&a, &b, 1).unwrap(), Some(0.0));
    }

    #[test]
    fn one_empty_mask_scores_zero() {
        let a = vol([1, 1, 4], vec![0, 1, 1, 0]);
        let b = vol([1, 1, 4], vec![0; 4]);
        assert_eq!(dsc(&a, &b, 1).unwrap(), Some(0.0));
        assert_eq!(nsd(&b, &a, 1, 1.0).unwrap(), Some(0.0));
        assert_eq!(dsc(&b, &b, 1).unwrap(), None);
        assert_eq!(nsd(&b, &b, 1, 1.0).unwrap(), None);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = vol([1, 1, 4], vec![0; 4]);
        let b = vol([1, 4, 1], vec![0; 4]);
        assert!(matches!(dsc(&a, &b, 1), Err(Error::GeometryMismatch(_))));
        assert!(matches!(nsd(&a, &b, 1, 1.0), Err(Error::GeometryMismatch(_))));
    }
}
