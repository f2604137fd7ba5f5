//! Declarative coarse/fine network graphs, the forward executor and
//! parameter/FLOP accounting.
//!
//! Layout (resolution level `l` has `min(base·2^l, cap)` channels):
//!
//! ```text
//! stem (l=0) -> enc1 .. enc{L-1} (stride 2 each) -> [context] -> dec{L-2} .. dec0 -> head
//!                 \_______________ additive skips, same level _______________/
//! ```
//!
//! The coarse net uses full 3×3×3 decoder convolutions and no context block;
//! the fine net uses anisotropic decoder convolutions and a mixed-pyramid
//! context block at the deepest level.

mod graph;
mod spec;

use serde::Serialize;

pub use graph::{block_params, LayerCost, ParamInit, ParamSpec};
pub use spec::{
    build_coarse_spec, build_coarse_spec_capped, build_fine_spec, default_spec, BlockKind, BlockSpec, NetKind, NetworkSpec,
    COARSE_BASE_CHANNELS, COARSE_INPUT, DEFAULT_CAP, DEFAULT_LEVELS, FINE_BASE_CHANNELS, FINE_INPUT,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weights::WeightStore;

/// Every learnable array of `spec`, in canonical order.
pub fn param_specs(spec: &NetworkSpec) -> Vec<ParamSpec> {
    spec.blocks.iter().flat_map(block_params).collect()
}

/// Exact parameter count: conv weights, biases and norm affine pairs.
pub fn count_params(spec: &NetworkSpec) -> u64 {
    param_specs(spec).iter().map(|p| p.len() as u64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStats {
    pub param_count: u64,
    pub macs: u64,
    /// Always `2 * macs`.
    pub flops: u64,
    pub layers: Vec<LayerCost>,
}

/// Cost of one forward pass at `input_size`, from shape algebra only.
///
/// Convolutions count `Cout·Cin·kd·kh·kw` MACs per output voxel; pooling and
/// interpolation count one op per contributing input element (8 per output
/// element for trilinear), booked as MACs. Norms, ReLUs and additions are
/// not counted.
pub fn count_flops(spec: &NetworkSpec, input_size: [usize; 3]) -> Result<ModelStats> {
    let sizes = spec.block_sizes(input_size)?;
    let mut layers = Vec::new();
    let mut cur = input_size;
    for b in &spec.blocks {
        let skip = skip_index(spec, b).map(|i| sizes[i]);
        cur = graph::block_cost(b, &mut layers, cur, skip)?;
    }
    let macs = layers.iter().map(|l| l.macs).sum();
    Ok(ModelStats {
        param_count: count_params(spec),
        macs,
        flops: 2 * macs,
        layers,
    })
}

fn skip_index(spec: &NetworkSpec, b: &BlockSpec) -> Option<usize> {
    let src = b.skip_from.as_deref()?;
    spec.blocks.iter().position(|x| x.name == src)
}

/// Run `spec` on a `(1, 1, D, H, W)` input; returns `(1, num_classes, D, H, W)`
/// class scores. Weights are looked up by name.
pub fn forward(spec: &NetworkSpec, weights: &WeightStore, x: &Tensor) -> Result<Tensor> {
    let [n, c, ..] = x.shape();
    if n != 1 || c != 1 {
        return Err(Error::Shape(format!(
            "network input must be (1, 1, D, H, W), got {:?}",
            x.shape()
        )));
    }
    spec.check_input(x.spatial())?;

    // Outputs still needed as skips, by block index.
    let mut kept: Vec<Option<Tensor>> = vec![None; spec.blocks.len()];
    let needed: Vec<bool> = (0..spec.blocks.len())
        .map(|i| spec.blocks.iter().any(|b| skip_index(spec, b) == Some(i)))
        .collect();

    let mut cur = x.clone();
    for (i, b) in spec.blocks.iter().enumerate() {
        let skip_idx = skip_index(spec, b);
        let skip = skip_idx.and_then(|j| kept[j].as_ref());
        let out = graph::block_forward(b, weights, &cur, skip)?;
        if let Some(j) = skip_idx {
            kept[j] = None;
        }
        if needed[i] {
            kept[i] = Some(out.clone());
        }
        cur = out;
    }
    Ok(cur)
}
