//! Block internals: parameter layout, execution and cost, kept side by side
//! so the three stay in agreement.
//!
//! Parameter names are `<block>.<layer>.<field>`, e.g. `enc2.res0.conv1.weight`,
//! `dec1.res.conv2.intra.weight`, `context.strip_h.bias`, `head.weight`.

use super::spec::{BlockKind, BlockSpec};
use crate::error::Result;
use crate::nnops::{
    anisotropic_params, avg_pool3d_ceil, conv3d, instance_norm, resize_trilinear, strip_pool, ConvParams,
    SpatialAxis, DEFAULT_EPS,
};
use crate::tensor::Tensor;
use crate::weights::WeightStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamInit {
    /// Normal(0, sqrt(2 / fan_in)).
    Kaiming { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub init: ParamInit,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One cost-accounting row.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LayerCost {
    pub name: String,
    pub op: &'static str,
    pub output: [usize; 4],
    pub params: u64,
    pub macs: u64,
}

fn conv_params_into(out: &mut Vec<ParamSpec>, name: &str, p: &ConvParams) {
    out.push(ParamSpec {
        name: format!("{name}.weight"),
        dims: p.weight_dims(),
        init: ParamInit::Kaiming { fan_in: p.fan_in() },
    });
    if p.has_bias {
        out.push(ParamSpec {
            name: format!("{name}.bias"),
            dims: vec![p.out_channels],
            init: ParamInit::Zeros,
        });
    }
}

fn norm_params_into(out: &mut Vec<ParamSpec>, name: &str, channels: usize) {
    out.push(ParamSpec {
        name: format!("{name}.gamma"),
        dims: vec![channels],
        init: ParamInit::Ones,
    });
    out.push(ParamSpec {
        name: format!("{name}.beta"),
        dims: vec![channels],
        init: ParamInit::Zeros,
    });
}

fn apply_conv(w: &WeightStore, name: &str, p: &ConvParams, x: &Tensor) -> Result<Tensor> {
    let weight = w.expect(&format!("{name}.weight"), &p.weight_dims())?;
    let bias = if p.has_bias {
        Some(w.expect(&format!("{name}.bias"), &[p.out_channels])?)
    } else {
        None
    };
    conv3d(x, weight, bias, p)
}

fn apply_norm(w: &WeightStore, name: &str, x: &Tensor) -> Result<Tensor> {
    let c = x.channels();
    let gamma = w.expect(&format!("{name}.gamma"), &[c])?;
    let beta = w.expect(&format!("{name}.beta"), &[c])?;
    instance_norm(x, gamma, beta, DEFAULT_EPS)
}

fn conv_cost(costs: &mut Vec<LayerCost>, name: &str, p: &ConvParams, input: [usize; 3]) -> Result<[usize; 3]> {
    let out = p.output_spatial(input)?;
    costs.push(LayerCost {
        name: name.to_string(),
        op: "conv",
        output: [p.out_channels, out[0], out[1], out[2]],
        params: p.param_count() as u64,
        macs: p.macs(input)?,
    });
    Ok(out)
}

fn norm_cost(costs: &mut Vec<LayerCost>, name: &str, channels: usize, size: [usize; 3]) {
    costs.push(LayerCost {
        name: name.to_string(),
        op: "instance_norm",
        output: [channels, size[0], size[1], size[2]],
        params: 2 * channels as u64,
        macs: 0,
    });
}

fn voxels(s: [usize; 3]) -> u64 {
    s.iter().map(|&v| v as u64).product()
}

fn op_cost(costs: &mut Vec<LayerCost>, name: String, op: &'static str, channels: usize, size: [usize; 3], ops: u64) {
    costs.push(LayerCost {
        name,
        op,
        output: [channels, size[0], size[1], size[2]],
        params: 0,
        macs: ops,
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConvStyle {
    Full,
    Anisotropic,
}

/// conv-norm-ReLU-conv-norm, add shortcut, ReLU.
///
/// The shortcut is the identity when width and resolution are kept and a
/// strided 1×1×1 conv plus norm otherwise.
struct ResidualUnit {
    prefix: String,
    in_ch: usize,
    out_ch: usize,
    stride: usize,
    style: ConvStyle,
}

impl ResidualUnit {
    fn full_conv(&self, idx: usize) -> ConvParams {
        let cin = if idx == 1 { self.in_ch } else { self.out_ch };
        let stride = if idx == 1 { self.stride } else { 1 };
        ConvParams::same(cin, self.out_ch, [3, 3, 3]).with_stride(stride)
    }

    fn projection(&self) -> Option<ConvParams> {
        (self.in_ch != self.out_ch || self.stride != 1)
            .then(|| ConvParams::same(self.in_ch, self.out_ch, [1, 1, 1]).with_stride(self.stride))
    }

    fn aniso(&self, idx: usize) -> (ConvParams, ConvParams) {
        let cin = if idx == 1 { self.in_ch } else { self.out_ch };
        anisotropic_params(cin, self.out_ch)
    }

    fn params(&self, out: &mut Vec<ParamSpec>) {
        for idx in 1..=2 {
            let conv = format!("{}.conv{idx}", self.prefix);
            match self.style {
                ConvStyle::Full => conv_params_into(out, &conv, &self.full_conv(idx)),
                ConvStyle::Anisotropic => {
                    let (intra, inter) = self.aniso(idx);
                    conv_params_into(out, &format!("{conv}.intra"), &intra);
                    conv_params_into(out, &format!("{conv}.inter"), &inter);
                }
            }
            norm_params_into(out, &format!("{}.norm{idx}", self.prefix), self.out_ch);
        }
        if let Some(p) = self.projection() {
            conv_params_into(out, &format!("{}.proj", self.prefix), &p);
            norm_params_into(out, &format!("{}.proj_norm", self.prefix), self.out_ch);
        }
    }

    fn conv(&self, w: &WeightStore, idx: usize, x: &Tensor) -> Result<Tensor> {
        let conv = format!("{}.conv{idx}", self.prefix);
        match self.style {
            ConvStyle::Full => apply_conv(w, &conv, &self.full_conv(idx), x),
            ConvStyle::Anisotropic => {
                let (intra, inter) = self.aniso(idx);
                let y = apply_conv(w, &format!("{conv}.intra"), &intra, x)?;
                apply_conv(w, &format!("{conv}.inter"), &inter, &y)
            }
        }
    }

    fn forward(&self, w: &WeightStore, x: &Tensor) -> Result<Tensor> {
        let mut y = self.conv(w, 1, x)?;
        y = apply_norm(w, &format!("{}.norm1", self.prefix), &y)?;
        y.relu_in_place();
        y = self.conv(w, 2, &y)?;
        y = apply_norm(w, &format!("{}.norm2", self.prefix), &y)?;
        match self.projection() {
            Some(p) => {
                let s = apply_conv(w, &format!("{}.proj", self.prefix), &p, x)?;
                let s = apply_norm(w, &format!("{}.proj_norm", self.prefix), &s)?;
                y.add_assign(&s)?;
            }
            None => y.add_assign(x)?,
        }
        y.relu_in_place();
        Ok(y)
    }

    fn cost(&self, costs: &mut Vec<LayerCost>, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut size = input;
        for idx in 1..=2 {
            let conv = format!("{}.conv{idx}", self.prefix);
            size = match self.style {
                ConvStyle::Full => conv_cost(costs, &conv, &self.full_conv(idx), size)?,
                ConvStyle::Anisotropic => {
                    let (intra, inter) = self.aniso(idx);
                    let s = conv_cost(costs, &format!("{conv}.intra"), &intra, size)?;
                    conv_cost(costs, &format!("{conv}.inter"), &inter, s)?
                }
            };
            norm_cost(costs, &format!("{}.norm{idx}", self.prefix), self.out_ch, size);
        }
        if let Some(p) = self.projection() {
            conv_cost(costs, &format!("{}.proj", self.prefix), &p, input)?;
            norm_cost(costs, &format!("{}.proj_norm", self.prefix), self.out_ch, size);
        }
        Ok(size)
    }
}

fn stem_conv(b: &BlockSpec) -> ConvParams {
    ConvParams::same(b.in_channels, b.out_channels, [3, 3, 3])
}

fn pointwise(cin: usize, cout: usize) -> ConvParams {
    ConvParams::same(cin, cout, [1, 1, 1]).with_bias(true)
}

fn encoder_units(b: &BlockSpec) -> [ResidualUnit; 2] {
    [
        ResidualUnit {
            prefix: format!("{}.res0", b.name),
            in_ch: b.in_channels,
            out_ch: b.out_channels,
            stride: b.scale,
            style: ConvStyle::Full,
        },
        ResidualUnit {
            prefix: format!("{}.res1", b.name),
            in_ch: b.out_channels,
            out_ch: b.out_channels,
            stride: 1,
            style: ConvStyle::Full,
        },
    ]
}

fn decoder_unit(b: &BlockSpec) -> ResidualUnit {
    ResidualUnit {
        prefix: format!("{}.res", b.name),
        in_ch: b.out_channels,
        out_ch: b.out_channels,
        stride: 1,
        style: if b.kind == BlockKind::DecoderResidualAniso {
            ConvStyle::Anisotropic
        } else {
            ConvStyle::Full
        },
    }
}

fn context_unit(b: &BlockSpec) -> ResidualUnit {
    ResidualUnit {
        prefix: format!("{}.res", b.name),
        in_ch: b.out_channels,
        out_ch: b.out_channels,
        stride: 1,
        style: ConvStyle::Full,
    }
}

/// Pooling branches of the context block, in summation order.
#[derive(Debug, Clone, Copy)]
pub(crate) enum ContextBranch {
    Pool(usize),
    Strip(SpatialAxis),
}

pub(crate) const CONTEXT_BRANCHES: [(&str, ContextBranch); 5] = [
    ("pool2", ContextBranch::Pool(2)),
    ("pool4", ContextBranch::Pool(4)),
    ("strip_d", ContextBranch::Strip(SpatialAxis::D)),
    ("strip_h", ContextBranch::Strip(SpatialAxis::H)),
    ("strip_w", ContextBranch::Strip(SpatialAxis::W)),
];

pub fn block_params(b: &BlockSpec) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    match b.kind {
        BlockKind::StemConv => {
            conv_params_into(&mut out, &format!("{}.conv", b.name), &stem_conv(b));
            norm_params_into(&mut out, &format!("{}.norm", b.name), b.out_channels);
        }
        BlockKind::EncoderResidual => {
            for unit in encoder_units(b) {
                unit.params(&mut out);
            }
        }
        BlockKind::ContextMixedPyramid => {
            for (branch, _) in CONTEXT_BRANCHES {
                let p = pointwise(b.in_channels, b.out_channels);
                conv_params_into(&mut out, &format!("{}.{branch}", b.name), &p);
            }
            context_unit(b).params(&mut out);
        }
        BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso => {
            let p = pointwise(b.in_channels, b.out_channels);
            conv_params_into(&mut out, &format!("{}.up", b.name), &p);
            decoder_unit(b).params(&mut out);
        }
        BlockKind::HeadConv => {
            let p = pointwise(b.in_channels, b.out_channels);
            conv_params_into(&mut out, &b.name, &p);
        }
    }
    out
}

/// Run one block. `skip` is the stored output of `b.skip_from` for decoders.
pub fn block_forward(b: &BlockSpec, w: &WeightStore, x: &Tensor, skip: Option<&Tensor>) -> Result<Tensor> {
    match b.kind {
        BlockKind::StemConv => {
            let y = apply_conv(w, &format!("{}.conv", b.name), &stem_conv(b), x)?;
            let mut y = apply_norm(w, &format!("{}.norm", b.name), &y)?;
            y.relu_in_place();
            Ok(y)
        }
        BlockKind::EncoderResidual => {
            let [first, second] = encoder_units(b);
            let y = first.forward(w, x)?;
            second.forward(w, &y)
        }
        BlockKind::ContextMixedPyramid => {
            let size = x.spatial();
            let mut fused = x.clone();
            for (branch, kind) in CONTEXT_BRANCHES {
                let p = pointwise(b.in_channels, b.out_channels);
                let name = format!("{}.{branch}", b.name);
                let y = match kind {
                    ContextBranch::Pool(f) => {
                        let pooled = avg_pool3d_ceil(x, [f; 3])?;
                        resize_trilinear(&apply_conv(w, &name, &p, &pooled)?, size)?
                    }
                    ContextBranch::Strip(axis) => apply_conv(w, &name, &p, &strip_pool(x, axis))?,
                };
                fused.add_assign(&y)?;
            }
            context_unit(b).forward(w, &fused)
        }
        BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso => {
            let skip = skip.expect("decoder blocks receive their skip tensor");
            let p = pointwise(b.in_channels, b.out_channels);
            let y = apply_conv(w, &format!("{}.up", b.name), &p, x)?;
            let mut y = resize_trilinear(&y, skip.spatial())?;
            y.add_assign(skip)?;
            decoder_unit(b).forward(w, &y)
        }
        BlockKind::HeadConv => apply_conv(w, &b.name, &pointwise(b.in_channels, b.out_channels), x),
    }
}

/// Append the cost rows of one block; returns its output spatial size.
pub fn block_cost(b: &BlockSpec, costs: &mut Vec<LayerCost>, input: [usize; 3], skip_size: Option<[usize; 3]>) -> Result<[usize; 3]> {
    match b.kind {
        BlockKind::StemConv => {
            let size = conv_cost(costs, &format!("{}.conv", b.name), &stem_conv(b), input)?;
            norm_cost(costs, &format!("{}.norm", b.name), b.out_channels, size);
            Ok(size)
        }
        BlockKind::EncoderResidual => {
            let [first, second] = encoder_units(b);
            let size = first.cost(costs, input)?;
            second.cost(costs, size)
        }
        BlockKind::ContextMixedPyramid => {
            let c = b.in_channels;
            let elems = voxels(input) * c as u64;
            for (branch, kind) in CONTEXT_BRANCHES {
                let name = format!("{}.{branch}", b.name);
                let p = pointwise(c, b.out_channels);
                match kind {
                    ContextBranch::Pool(f) => {
                        let pooled = input.map(|s| s.div_ceil(f));
                        op_cost(costs, format!("{name}.avg_pool"), "avg_pool", c, pooled, elems);
                        conv_cost(costs, &name, &p, pooled)?;
                        op_cost(costs, format!("{name}.resize"), "trilinear", c, input, 8 * elems);
                    }
                    ContextBranch::Strip(_) => {
                        op_cost(costs, format!("{name}.strip_pool"), "strip_pool", c, input, elems);
                        conv_cost(costs, &name, &p, input)?;
                    }
                }
            }
            context_unit(b).cost(costs, input)
        }
        BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso => {
            let target = skip_size.expect("decoder blocks receive their skip size");
            let name = format!("{}.up", b.name);
            conv_cost(costs, &name, &pointwise(b.in_channels, b.out_channels), input)?;
            let ops = 8 * voxels(target) * b.out_channels as u64;
            op_cost(costs, format!("{name}.resize"), "trilinear", b.out_channels, target, ops);
            decoder_unit(b).cost(costs, target)
        }
        BlockKind::HeadConv => conv_cost(costs, &b.name, &pointwise(b.in_channels, b.out_channels), input),
    }
}
