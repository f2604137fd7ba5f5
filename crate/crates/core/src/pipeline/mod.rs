//! Coarse-to-fine orchestration: preprocessing, coarse localization, ROI
//! refinement with the fine network, restoration to the input grid and
//! connected-component cleanup.

mod components;
mod config;

use std::path::Path;
use std::time::Instant;

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};

pub use components::{connected_components, postprocess_cc, Connectivity};
pub use config::{NetConfig, PipelineConfig};

use crate::error::{Error, Result};
use crate::netdef::{forward, NetworkSpec};
use crate::nnops::{resize_nearest_labels, resize_trilinear};
use crate::tensor::Tensor;
use crate::voxgrid::{read_volume, write_volume, Geometry, LabelVolume, Volume, VoxelVolume, ORGAN_NAMES};
use crate::weights::{check_complete, load_eswt, WeightStore};

/// Smallest ROI side (voxels) handed to the fine network.
pub const MIN_ROI_SIDE: usize = 8;
/// Below this standard deviation a volume is treated as constant.
pub const DEGENERATE_STD: f64 = 1e-6;

/// Anything that maps a `(1, 1, D, H, W)` image to `(1, K, D, H, W)` scores.
pub trait SegNet: Sync {
    fn forward(&self, x: &Tensor) -> Result<Tensor>;
}

/// A network spec with a complete set of weights.
pub struct Model {
    spec: NetworkSpec,
    weights: WeightStore,
}

impl Model {
    pub fn new(spec: NetworkSpec, weights: WeightStore) -> Result<Self> {
        check_complete(&spec, &weights)?;
        Ok(Model { spec, weights })
    }

    pub fn load(spec: NetworkSpec, path: impl AsRef<Path>) -> Result<Self> {
        Model::new(spec, load_eswt(path)?)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }
}

impl SegNet for Model {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        forward(&self.spec, &self.weights, x)
    }
}

/// Voxel box `[lo, hi)` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl RoiBox {
    pub fn whole(shape: [usize; 3]) -> Self {
        RoiBox { lo: [0; 3], hi: shape }
    }

    pub fn shape(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.hi[a] - self.lo[a])
    }

    pub fn contains(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] <= idx[a] && idx[a] < self.hi[a])
    }

    pub fn is_within(&self, shape: [usize; 3]) -> bool {
        (0..3).all(|a| self.lo[a] < self.hi[a] && self.hi[a] <= shape[a])
    }

    /// Grow each side by `round(frac · side)`, clamped to `shape`.
    pub fn with_margin(&self, frac: f32, shape: [usize; 3]) -> RoiBox {
        let mut out = *self;
        for a in 0..3 {
            let side = self.hi[a] - self.lo[a];
            let m = (frac as f64 * side as f64).round() as usize;
            out.lo[a] = self.lo[a].saturating_sub(m);
            out.hi[a] = self.hi[a].saturating_add(m).min(shape[a]);
        }
        out
    }

    /// Grow any side shorter than `min_side` symmetrically, staying inside
    /// `shape` (an axis shorter than `min_side` is taken whole).
    pub fn with_min_side(&self, min_side: usize, shape: [usize; 3]) -> RoiBox {
        let mut out = *self;
        for a in 0..3 {
            let want = min_side.min(shape[a]);
            let side = out.hi[a] - out.lo[a];
            if side >= want {
                continue;
            }
            let grow = want - side;
            let lo = out.lo[a].saturating_sub(grow / 2);
            let hi = (lo + want).min(shape[a]);
            out.lo[a] = hi - want;
            out.hi[a] = hi;
        }
        out
    }
}

/// Geometry of `native` resampled to `size` voxels per axis over the same
/// physical extent.
pub fn resampled_geometry(native: &Geometry, size: [usize; 3]) -> Geometry {
    let mut g = native.clone();
    for a in 0..3 {
        let scale = native.shape[a] as f64 / size[a] as f64;
        let first_center = 0.5 * scale - 0.5;
        g.origin[a] += native.orientation.axes()[a].sign() * native.spacing[a] * first_center;
        g.spacing[a] = native.spacing[a] * scale;
        g.shape[a] = size[a];
    }
    g
}

/// Resample to `size`, clip to `clip`, z-score with the clipped volume's own
/// mean and (biased) standard deviation. A degenerate standard deviation is
/// replaced by 1 and reported.
fn normalize(vol: &Volume<f32>, clip: [f32; 2], size: [usize; 3]) -> Result<(Tensor, Option<String>)> {
    let [d, h, w] = vol.shape();
    let x = Tensor::from_vec([1, 1, d, h, w], vol.data().to_vec())?;
    let mut x = resize_trilinear(&x, size)?;
    let data = x.data_mut();
    for v in data.iter_mut() {
        *v = v.clamp(clip[0], clip[1]);
    }
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let mut std = var.sqrt();
    let mut warning = None;
    if std < DEGENERATE_STD {
        warning = Some(format!(
            "intensity std {std:.3e} below {DEGENERATE_STD:e} (constant volume); normalizing with std = 1"
        ));
        std = 1.0;
    }
    for v in data.iter_mut() {
        *v = ((*v as f64 - mean) / std) as f32;
    }
    Ok((x, warning))
}

/// Network input plus what is needed to map results back.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub tensor: Tensor,
    /// Input geometry as read.
    pub original: Geometry,
    /// Geometry after reorientation (the grid ROIs refer to).
    pub native: Geometry,
    pub warnings: Vec<String>,
}

/// Reorient to `cfg.target_orientation`, resample to `size`, clip and
/// z-score.
pub fn preprocess(vol: &VoxelVolume, cfg: &PipelineConfig, size: [usize; 3]) -> Result<Preprocessed> {
    let native = vol.reorient(cfg.target_orientation).to_f32();
    let (tensor, warning) = normalize(&native, cfg.clip_range, size)?;
    let warnings: Vec<String> = warning.into_iter().collect();
    for w in &warnings {
        warn!("{w}");
    }
    Ok(Preprocessed {
        tensor,
        original: vol.geometry().clone(),
        native: native.geometry().clone(),
        warnings,
    })
}

/// Bounding box of the nonzero labels of a `mask_shape` grid, mapped to the
/// `native_shape` grid it was resampled from and grown by `margin`.
///
/// Mask voxel `t` covers native `[t·S/S', (t+1)·S/S')` under the half-pixel
/// convention, so the box maps to `[floor(lo·S/S'), ceil(hi·S/S'))`.
/// Returns `None` when the mask has no foreground.
pub fn roi_from_mask(labels: &[u8], mask_shape: [usize; 3], native_shape: [usize; 3], margin: f32) -> Option<RoiBox> {
    let [_, h, w] = mask_shape;
    let mut lo = mask_shape;
    let mut hi = [0usize; 3];
    for (i, _) in labels.iter().enumerate().filter(|(_, &v)| v != 0) {
        let idx = [i / (h * w), (i / w) % h, i % w];
        for a in 0..3 {
            lo[a] = lo[a].min(idx[a]);
            hi[a] = hi[a].max(idx[a] + 1);
        }
    }
    if hi[0] == 0 {
        return None;
    }
    let mut native = RoiBox { lo: [0; 3], hi: [0; 3] };
    for a in 0..3 {
        let scale = native_shape[a] as f64 / mask_shape[a] as f64;
        native.lo[a] = ((lo[a] as f64 * scale).floor() as usize).min(native_shape[a] - 1);
        native.hi[a] = ((hi[a] as f64 * scale).ceil() as usize).clamp(native.lo[a] + 1, native_shape[a]);
    }
    Some(native.with_margin(margin, native_shape))
}

#[derive(Debug, Clone)]
pub struct CoarseResult {
    pub roi: RoiBox,
    /// Cleaned coarse labels on the coarse grid.
    pub mask: LabelVolume,
    pub warnings: Vec<String>,
}

fn run_labels(net: &dyn SegNet, x: &Tensor) -> Result<Vec<u8>> {
    let scores = net.forward(x)?;
    if scores.spatial() != x.spatial() {
        return Err(Error::Shape(format!(
            "network returned {:?} for input {:?}",
            scores.shape(),
            x.shape()
        )));
    }
    scores.argmax_channel()
}

/// Whole-volume coarse pass on a reoriented volume; yields the fine ROI.
pub fn coarse_locate(native: &Volume<f32>, net: &dyn SegNet, cfg: &PipelineConfig) -> Result<CoarseResult> {
    let (x, warning) = normalize(native, cfg.clip_range, cfg.coarse_size)?;
    let mut warnings: Vec<String> = warning.into_iter().collect();
    let labels = run_labels(net, &x)?;
    let grid = resampled_geometry(native.geometry(), cfg.coarse_size);
    let mask = postprocess_cc(&Volume::new(grid, labels)?, cfg.cc_keep_ratio, cfg.connectivity);
    let shape = native.shape();
    let roi = match roi_from_mask(mask.data(), cfg.coarse_size, shape, cfg.roi_margin_frac) {
        Some(roi) => roi,
        None => {
            warnings.push("coarse stage found no foreground; refining the whole volume".into());
            RoiBox::whole(shape)
        }
    };
    for w in &warnings {
        warn!("{w}");
    }
    Ok(CoarseResult { roi, mask, warnings })
}

/// Fine pass inside `roi` of the reoriented volume `native`. Returns labels
/// on the `original` grid (the input volume's shape and orientation) with
/// everything outside the ROI set to background.
pub fn fine_segment(
    native: &Volume<f32>,
    original: &Geometry,
    roi: RoiBox,
    net: &dyn SegNet,
    cfg: &PipelineConfig,
) -> Result<LabelVolume> {
    let shape = native.shape();
    if !roi.is_within(shape) {
        return Err(Error::InvalidArgument(format!("ROI {roi:?} outside volume {shape:?}")));
    }
    let roi = roi.with_min_side(MIN_ROI_SIDE, shape);
    let crop = native.crop(roi.lo, roi.hi)?;
    let (x, warning) = normalize(&crop, cfg.clip_range, cfg.fine_size)?;
    if let Some(w) = warning {
        warn!("fine ROI: {w}");
    }
    let labels = run_labels(net, &x)?;
    let labels = resize_nearest_labels(&labels, cfg.fine_size, roi.shape())?;
    let local = postprocess_cc(&crop.with_data(labels)?, cfg.cc_keep_ratio, cfg.connectivity);

    let mut full = Volume::<u8>::filled(native.geometry().clone(), 0)?;
    let [_, rh, rw] = roi.shape();
    for (row_idx, row) in local.data().chunks_exact(rw).enumerate() {
        let d = roi.lo[0] + row_idx / rh;
        let h = roi.lo[1] + row_idx % rh;
        let start = full.index(d, h, roi.lo[2]);
        full.data_mut()[start..start + rw].copy_from_slice(row);
    }
    let restored = full.reorient(original.orientation);
    Volume::new(original.clone(), restored.into_data())
}

/// Result of segmenting one in-memory volume.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelVolume,
    /// In the reoriented (native) grid.
    pub roi: RoiBox,
    pub timings_ms: IndexMap<String, f64>,
    pub warnings: Vec<String>,
}

pub fn segment_volume(
    vol: &VoxelVolume,
    coarse: &dyn SegNet,
    fine: &dyn SegNet,
    cfg: &PipelineConfig,
) -> Result<Segmentation> {
    cfg.validate()?;
    let mut timings_ms = IndexMap::new();
    let t = Instant::now();
    let native = vol.reorient(cfg.target_orientation).to_f32();
    let located = coarse_locate(&native, coarse, cfg).map_err(|e| e.in_stage("coarse"))?;
    timings_ms.insert("coarse".to_string(), ms(t));

    let t = Instant::now();
    let labels = fine_segment(&native, vol.geometry(), located.roi, fine, cfg).map_err(|e| e.in_stage("fine"))?;
    timings_ms.insert("fine".to_string(), ms(t));
    Ok(Segmentation {
        labels,
        roi: located.roi,
        timings_ms,
        warnings: located.warnings,
    })
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Per-label voxel counts keyed by class name.
pub fn class_counts(labels: &LabelVolume) -> IndexMap<String, u64> {
    let mut counts = [0u64; 5];
    for &v in labels.data() {
        counts[(v as usize).min(4)] += 1;
    }
    let mut out = IndexMap::new();
    out.insert("background".to_string(), counts[0]);
    for (i, name) in ORGAN_NAMES.iter().enumerate() {
        out.insert(name.to_string(), counts[i + 1]);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SegSummary {
    pub input: String,
    pub output: String,
    /// ROI in the reoriented grid.
    pub roi: RoiBox,
    pub per_class_voxels: IndexMap<String, u64>,
    pub timings_ms: IndexMap<String, f64>,
    pub total_ms: f64,
    pub peak_rss_mb: Option<f64>,
    pub warnings: Vec<String>,
    pub config_echo: PipelineConfig,
}

/// Peak resident set size of this process, where the OS reports it.
pub fn peak_rss_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Read `input`, segment it with the two weight files, write the label
/// volume to `output`.
pub fn run_pipeline(
    input: &Path,
    coarse_weights: &Path,
    fine_weights: &Path,
    cfg: &PipelineConfig,
    output: &Path,
) -> Result<SegSummary> {
    let start = Instant::now();
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let mut timings_ms = IndexMap::new();

    let t = Instant::now();
    let vol = read_volume(input).map_err(|e| e.in_stage("read input"))?;
    timings_ms.insert("read_input".to_string(), ms(t));

    let t = Instant::now();
    let coarse = Model::load(cfg.coarse_spec()?, coarse_weights).map_err(|e| e.in_stage("coarse weights"))?;
    let fine = Model::load(cfg.fine_spec()?, fine_weights).map_err(|e| e.in_stage("fine weights"))?;
    timings_ms.insert("load_weights".to_string(), ms(t));

    let seg = segment_volume(&vol, &coarse, &fine, cfg)?;
    timings_ms.extend(seg.timings_ms);

    let t = Instant::now();
    write_volume(&seg.labels, output).map_err(|e| e.in_stage("write output"))?;
    timings_ms.insert("write_output".to_string(), ms(t));

    Ok(SegSummary {
        input: input.display().to_string(),
        output: output.display().to_string(),
        roi: seg.roi,
        per_class_voxels: class_counts(&seg.labels),
        timings_ms,
        total_ms: ms(start),
        peak_rss_mb: peak_rss_mb(),
        warnings: seg.warnings,
        config_echo: cfg.clone(),
    })
}
