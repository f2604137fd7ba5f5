use std::collections::VecDeque;

use effseg::netdef::NetKind;
use effseg::phantom::synthetic_phantom;
use effseg::pipeline::{
    coarse_locate, connected_components, fine_segment, postprocess_cc, preprocess, roi_from_mask, run_pipeline,
    segment_volume, Connectivity, Model, PipelineConfig, RoiBox, SegNet,
};
use effseg::tensor::Tensor;
use effseg::voxgrid::{read_volume, write_volume, Geometry, Orientation, Volume, VoxelVolume};
use effseg::weights::{kaiming_init, save_eswt};
use effseg::{Error, Result};

/// Scores one-hot for a fixed class everywhere.
struct ConstNet(usize);

impl SegNet for ConstNet {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let [_, _, d, h, w] = x.shape();
        let mut out = Tensor::zeros([1, 5, d, h, w])?;
        let plane = d * h * w;
        out.data_mut()[self.0 * plane..(self.0 + 1) * plane].fill(1.0);
        Ok(out)
    }
}

/// Class 1 inside a box given as fractions of the grid, background elsewhere.
struct BoxNet {
    lo: [f64; 3],
    hi: [f64; 3],
}

impl SegNet for BoxNet {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.spatial();
        let mut out = Tensor::zeros([1, 2, s[0], s[1], s[2]])?;
        let plane = s.iter().product::<usize>();
        for i in 0..plane {
            let idx = [i / (s[1] * s[2]), (i / s[2]) % s[1], i % s[2]];
            let inside = (0..3).all(|a| {
                let f = (idx[a] as f64 + 0.5) / s[a] as f64;
                self.lo[a] <= f && f < self.hi[a]
            });
            out.data_mut()[if inside { plane + i } else { i }] = 1.0;
        }
        Ok(out)
    }
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        coarse_size: [16; 3],
        fine_size: [16; 3],
        ..PipelineConfig::default()
    }
}

fn ct_volume(shape: [usize; 3], orientation: Orientation) -> VoxelVolume {
    let g = Geometry::new(shape, [1.5, 0.8, 0.8]).with_orientation(orientation);
    let n = g.voxel_count();
    let data = (0..n).map(|i| ((i * 37) % 700) as i16 - 350).collect();
    Volume::new(g, data).unwrap().into()
}

#[test]
fn roi_margin_arithmetic() {
    let s = 100;
    let mut labels = vec![0u8; s * s * s];
    for d in 10..20 {
        for h in 10..20 {
            for w in 10..20 {
                labels[(d * s + h) * s + w] = 1;
            }
        }
    }
    let roi = roi_from_mask(&labels, [s; 3], [s; 3], 0.10).unwrap();
    assert_eq!(roi, RoiBox { lo: [9; 3], hi: [21; 3] });
    assert!(roi_from_mask(&vec![0; 8], [2; 3], [4; 3], 0.1).is_none());
}

#[test]
fn roi_maps_through_resampling_and_clamps() {
    // One foreground voxel at the corner of a 4³ mask over a 10³ volume.
    let mut labels = vec![0u8; 64];
    labels[63] = 3;
    let roi = roi_from_mask(&labels, [4; 3], [10; 3], 0.5).unwrap();
    // Voxel 3 covers [7.5, 10) → [7, 10); margin round(0.5·3) = 2, clamped above.
    assert_eq!(roi, RoiBox { lo: [5; 3], hi: [10; 3] });
}

#[test]
fn empty_coarse_mask_means_whole_volume() {
    let vol = ct_volume([20, 18, 22], Orientation::LPI).to_f32();
    let r = coarse_locate(&vol, &ConstNet(0), &small_config()).unwrap();
    assert_eq!(r.roi, RoiBox::whole([20, 18, 22]));
    assert_eq!(r.warnings.len(), 1);
}

#[test]
fn coarse_box_becomes_native_roi() {
    let vol = ct_volume([32, 32, 32], Orientation::LPI).to_f32();
    let net = BoxNet { lo: [0.25; 3], hi: [0.5; 3] };
    let cfg = PipelineConfig { roi_margin_frac: 0.0, ..small_config() };
    let r = coarse_locate(&vol, &net, &cfg).unwrap();
    assert_eq!(r.roi, RoiBox { lo: [8; 3], hi: [16; 3] });
    assert_eq!(r.mask.shape(), [16; 3]);
}

#[test]
fn stub_fine_net_fills_roi_and_nothing_else() {
    let ras: Orientation = "ras".parse().unwrap();
    let vol = ct_volume([20, 24, 28], ras);
    let native = vol.reorient(Orientation::LPI).to_f32();
    let roi = RoiBox { lo: [2, 3, 4], hi: [12, 15, 20] };
    let labels = fine_segment(&native, vol.geometry(), roi, &ConstNet(1), &small_config()).unwrap();
    assert_eq!(labels.geometry(), vol.geometry());
    let back = labels.reorient(Orientation::LPI);
    let [_, h, w] = back.shape();
    for (i, &v) in back.data().iter().enumerate() {
        let idx = [i / (h * w), (i / w) % h, i % w];
        assert_eq!(v, roi.contains(idx) as u8, "at {idx:?}");
    }
}

#[test]
fn tiny_roi_is_expanded_to_minimum_side() {
    let vol = ct_volume([20, 20, 20], Orientation::LPI);
    let native = vol.to_f32();
    let roi = RoiBox { lo: [0, 10, 18], hi: [2, 11, 20] };
    let labels = fine_segment(&native, vol.geometry(), roi, &ConstNet(4), &small_config()).unwrap();
    let count = labels.data().iter().filter(|&&v| v == 4).count();
    assert_eq!(count, 8 * 8 * 8);
    assert_eq!(labels.get(0, 7, 12), 4);
    assert_eq!(labels.get(0, 6, 12), 0);
    assert_eq!(labels.get(7, 14, 12), 4);
    assert_eq!(labels.get(0, 10, 19), 4);
    assert_eq!(labels.get(8, 10, 19), 0);
}

#[test]
fn roi_outside_volume_is_rejected() {
    let vol = ct_volume([8, 8, 8], Orientation::LPI);
    let roi = RoiBox { lo: [0; 3], hi: [9, 8, 8] };
    let err = fine_segment(&vol.to_f32(), vol.geometry(), roi, &ConstNet(1), &small_config()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
}

#[test]
fn preprocess_examples() {
    let cfg = PipelineConfig::default();
    let g = Geometry::new([2, 2, 2], [1.0; 3]);

    let constant: VoxelVolume = Volume::filled(g.clone(), 100i16).unwrap().into();
    let p = preprocess(&constant, &cfg, [2, 2, 2]).unwrap();
    assert!(p.tensor.data().iter().all(|&v| v == 0.0));
    assert_eq!(p.warnings.len(), 1);

    let g2 = Geometry::new([1, 1, 2], [1.0; 3]);
    let pair: VoxelVolume = Volume::new(g2.clone(), vec![-325.0f32, 325.0]).unwrap().into();
    let p = preprocess(&pair, &cfg, [1, 1, 2]).unwrap();
    assert_eq!(p.tensor.data(), &[-1.0, 1.0]);
    assert!(p.warnings.is_empty());

    // 1000 HU saturates at the window edge: same result as 325.
    let hot: VoxelVolume = Volume::new(g2, vec![-325.0f32, 1000.0]).unwrap().into();
    assert_eq!(preprocess(&hot, &cfg, [1, 1, 2]).unwrap().tensor.data(), &[-1.0, 1.0]);
}

#[test]
fn preprocess_reorients_before_resampling() {
    let ras: Orientation = "ras".parse().unwrap();
    let vol = ct_volume([6, 5, 4], ras);
    let p = preprocess(&vol, &PipelineConfig::default(), [6, 5, 4]).unwrap();
    assert_eq!(p.native.orientation, Orientation::LPI);
    assert_eq!(p.original, *vol.geometry());
    let direct = preprocess(&vol.reorient(Orientation::LPI), &PipelineConfig::default(), [6, 5, 4]).unwrap();
    assert_eq!(p.tensor.data(), direct.tensor.data());
}

fn bfs_components(mask: &[bool], shape: [usize; 3]) -> Vec<Vec<usize>> {
    let [d, h, w] = shape;
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (z, y, x) = ((i / (h * w)) as isize, ((i / w) % h) as isize, (i % w) as isize);
            for dz in -1..=1 {
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nz, ny, nx) = (z + dz, y + dy, x + dx);
                        if nz < 0 || ny < 0 || nx < 0 || nz >= d as isize || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        let j = (nz as usize * h + ny as usize) * w + nx as usize;
                        if mask[j] && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        out.push(comp);
    }
    out
}

fn kidney_phantom() -> Volume<u8> {
    let s = 24;
    let mut labels = vec![0u8; s * s * s];
    let mut paint = |lo: [usize; 3], hi: [usize; 3], v: u8| {
        for d in lo[0]..hi[0] {
            for h in lo[1]..hi[1] {
                for w in lo[2]..hi[2] {
                    labels[(d * s + h) * s + w] = v;
                }
            }
        }
    };
    paint([4, 4, 2], [12, 10, 8], 2);
    paint([4, 4, 16], [12, 10, 22], 2);
    paint([20, 20, 12], [21, 21, 13], 2);
    paint([14, 14, 4], [20, 20, 10], 1);
    Volume::new(Geometry::new([s; 3], [1.0; 3]), labels).unwrap()
}

#[test]
fn kidney_pair_survives_and_speck_is_dropped() {
    let vol = kidney_phantom();
    let out = postprocess_cc(&vol, 0.10, Connectivity::TwentySix);

    let mask: Vec<bool> = vol.data().iter().map(|&v| v == 2).collect();
    let comps = bfs_components(&mask, vol.shape());
    let largest = comps.iter().map(Vec::len).max().unwrap();
    let mut expected = vol.data().to_vec();
    for comp in comps.iter().filter(|c| (c.len() as f64) < 0.10 * largest as f64) {
        for &i in comp {
            expected[i] = 0;
        }
    }
    assert_eq!(comps.len(), 3);
    assert_eq!(out.data(), expected.as_slice());
    assert_eq!(out.data().iter().filter(|&&v| v == 2).count(), 2 * 8 * 6 * 6);
    assert_eq!(out.data().iter().filter(|&&v| v == 1).count(), 6 * 6 * 6);
}

#[test]
fn union_find_matches_bfs_on_phantom_labels() {
    let p = synthetic_phantom(32, 5, Orientation::LPI).unwrap();
    for class in 1..=4u8 {
        let mask: Vec<bool> = p.labels.data().iter().map(|&v| v == class).collect();
        let (_, sizes) = connected_components(&mask, [32; 3], Connectivity::TwentySix);
        let bfs: Vec<usize> = bfs_components(&mask, [32; 3]).iter().map(Vec::len).collect();
        assert_eq!(sizes, bfs, "class {class}");
    }
}

#[test]
fn stub_pipeline_restores_input_geometry() {
    let ras: Orientation = "asr".parse().unwrap();
    let vol = ct_volume([18, 26, 22], ras);
    let coarse = BoxNet { lo: [0.3, 0.2, 0.4], hi: [0.7, 0.6, 0.9] };
    let seg = segment_volume(&vol, &coarse, &ConstNet(3), &small_config()).unwrap();
    assert_eq!(seg.labels.geometry(), vol.geometry());
    let back = seg.labels.reorient(Orientation::LPI);
    let [_, h, w] = back.shape();
    let inside = back
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| seg.roi.contains([i / (h * w), (i / w) % h, i % w]))
        .all(|(_, &v)| v == 3);
    let outside_bg = back
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| !seg.roi.contains([i / (h * w), (i / w) % h, i % w]))
        .all(|(_, &v)| v == 0);
    assert!(inside && outside_bg);
    assert!(seg.timings_ms.contains_key("coarse") && seg.timings_ms.contains_key("fine"));
}

#[test]
fn run_pipeline_on_small_random_nets() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.coarse_net.levels = 3;
    cfg.fine_net.levels = 3;
    cfg.fine_net.base_channels = 4;
    let ph = synthetic_phantom(24, 9, "ras".parse().unwrap()).unwrap();
    let input = dir.path().join("ct.json");
    write_volume(&ph.image, &input).unwrap();
    let cw = dir.path().join("coarse.eswt");
    let fw = dir.path().join("fine.eswt");
    save_eswt(&kaiming_init(&cfg.coarse_spec().unwrap(), 42), &cw).unwrap();
    save_eswt(&kaiming_init(&cfg.fine_spec().unwrap(), 42), &fw).unwrap();

    let out_a = dir.path().join("a.json");
    let out_b = dir.path().join("b.json");
    let sa = run_pipeline(&input, &cw, &fw, &cfg, &out_a).unwrap();
    run_pipeline(&input, &cw, &fw, &cfg, &out_b).unwrap();
    assert_eq!(
        std::fs::read(out_a.with_extension("raw")).unwrap(),
        std::fs::read(out_b.with_extension("raw")).unwrap()
    );
    let labels = read_volume(&out_a).unwrap().into_labels().unwrap();
    assert_eq!(labels.geometry(), ph.image.geometry());
    assert_eq!(sa.per_class_voxels.values().sum::<u64>(), 24 * 24 * 24);
    let staged: f64 = sa.timings_ms.values().sum();
    assert!(staged <= sa.total_ms);
    assert_eq!(sa.config_echo, cfg);
}

#[test]
fn pipeline_errors_name_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let input = dir.path().join("ct.json");
    write_volume(&synthetic_phantom(16, 1, Orientation::LPI).unwrap().image, &input).unwrap();
    let missing = dir.path().join("none.eswt");
    let err = run_pipeline(&input, &missing, &missing, &cfg, &dir.path().join("o.json")).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("coarse weights") && text.contains("none.eswt"), "{text}");
    assert!(matches!(err.root(), Error::Io { .. }));

    // Fine weights saved for the coarse architecture.
    let cw = dir.path().join("coarse.eswt");
    save_eswt(&kaiming_init(&cfg.coarse_spec().unwrap(), 1), &cw).unwrap();
    let err = run_pipeline(&input, &cw, &cw, &cfg, &dir.path().join("o.json")).unwrap_err();
    assert!(err.to_string().contains("fine weights"));
}

#[test]
fn model_rejects_incomplete_store() {
    let spec = effseg::netdef::default_spec(NetKind::Coarse);
    let mut store = kaiming_init(&spec, 0);
    let full = Model::new(spec.clone(), store.clone());
    assert!(full.is_ok());
    store = effseg::weights::WeightStore::new();
    assert!(matches!(Model::new(spec, store), Err(Error::MissingWeight(_))));
}

#[test]
fn huge_margin_covers_whole_volume() {
    let roi = RoiBox { lo: [3, 4, 5], hi: [6, 7, 8] };
    assert_eq!(roi.with_margin(1e9, [10, 12, 14]), RoiBox::whole([10, 12, 14]));
    let cfg = PipelineConfig { roi_margin_frac: 1e6, ..small_config() };
    assert!(cfg.validate().is_ok());
    let bad = PipelineConfig { roi_margin_frac: f32::NAN, ..small_config() };
    assert!(bad.validate().is_err());
    let bad = PipelineConfig { clip_range: [10.0, -10.0], ..small_config() };
    assert!(bad.validate().is_err());
    let bad = PipelineConfig { fine_size: [20, 16, 16], ..small_config() };
    assert!(matches!(bad.validate(), Err(Error::InvalidArgument(_))));
}
