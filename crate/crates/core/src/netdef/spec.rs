use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::voxgrid::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Coarse,
    Fine,
}

impl std::fmt::Display for NetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetKind::Coarse => "coarse",
            NetKind::Fine => "fine",
        })
    }
}

impl std::str::FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coarse" => Ok(NetKind::Coarse),
            "fine" => Ok(NetKind::Fine),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected coarse or fine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// 3×3×3 conv, instance norm, ReLU at full resolution.
    StemConv,
    /// Two residual units; the first one carries the stride.
    EncoderResidual,
    /// Mixed pyramid pooling: 2³ and 4³ average pools plus three strip
    /// pools, each through a 1×1×1 conv, summed with the input and refined by
    /// one residual unit.
    ContextMixedPyramid,
    /// 1×1×1 projection, trilinear upsampling, additive skip, one residual
    /// unit built from anisotropic convolutions.
    DecoderResidualAniso,
    /// As `DecoderResidualAniso` with full 3×3×3 convolutions.
    DecoderResidual,
    /// 1×1×1 conv to class scores.
    HeadConv,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Downsampling stride for encoder blocks, upsampling factor for
    /// decoder blocks, 1 otherwise.
    pub scale: usize,
    /// Encoder block whose output a decoder block adds in.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_from: Option<String>,
}

impl BlockSpec {
    fn new(name: impl Into<String>, kind: BlockKind, in_channels: usize, out_channels: usize, scale: usize) -> Self {
        BlockSpec {
            name: name.into(),
            kind,
            in_channels,
            out_channels,
            scale,
            skip_from: None,
        }
    }

    pub fn is_decoder(&self) -> bool {
        matches!(
            self.kind,
            BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso
        )
    }
}

/// A coarse or fine segmentation network.
///
/// Resolution level 0 is the stem at input resolution; each encoder block
/// halves the resolution, so the deepest features are `input / 2^(levels-1)`
/// per axis. Decoder blocks climb back, adding the encoder output of the same
/// level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub name: NetKind,
    pub base_channels: usize,
    pub levels: usize,
    pub channel_cap: usize,
    pub num_classes: usize,
    pub input_size: [usize; 3],
    pub blocks: Vec<BlockSpec>,
}

pub const DEFAULT_LEVELS: usize = 5;
pub const DEFAULT_CAP: usize = 256;
pub const FINE_BASE_CHANNELS: usize = 16;
pub const COARSE_BASE_CHANNELS: usize = 8;
pub const FINE_INPUT: [usize; 3] = [192; 3];
pub const COARSE_INPUT: [usize; 3] = [160; 3];

fn level_channels(base: usize, level: usize, cap: usize) -> usize {
    base.checked_shl(level as u32)
        .filter(|&c| c >> level == base)
        .unwrap_or(usize::MAX)
        .min(cap)
}

fn build(
    name: NetKind,
    base: usize,
    levels: usize,
    cap: usize,
    input_size: [usize; 3],
) -> Result<NetworkSpec> {
    if !(2..=12).contains(&levels) {
        return Err(Error::InvalidArgument(format!("levels must be in 2..=12, got {levels}")));
    }
    if base == 0 || cap < base {
        return Err(Error::InvalidArgument(format!(
            "need 0 < base_channels <= channel_cap, got {base} / {cap}"
        )));
    }
    let ch = |l: usize| level_channels(base, l, cap);
    let mut blocks = vec![BlockSpec::new("stem", BlockKind::StemConv, 1, base, 1)];
    for l in 1..levels {
        blocks.push(BlockSpec::new(format!("enc{l}"), BlockKind::EncoderResidual, ch(l - 1), ch(l), 2));
    }
    let deepest = ch(levels - 1);
    if name == NetKind::Fine {
        blocks.push(BlockSpec::new("context", BlockKind::ContextMixedPyramid, deepest, deepest, 1));
    }
    let decoder = match name {
        NetKind::Fine => BlockKind::DecoderResidualAniso,
        NetKind::Coarse => BlockKind::DecoderResidual,
    };
    for l in (0..levels - 1).rev() {
        let mut b = BlockSpec::new(format!("dec{l}"), decoder, ch(l + 1), ch(l), 2);
        b.skip_from = Some(if l == 0 { "stem".into() } else { format!("enc{l}") });
        blocks.push(b);
    }
    blocks.push(BlockSpec::new("head", BlockKind::HeadConv, base, NUM_CLASSES, 1));

    // Round the nominal input up to a size the encoder can halve cleanly.
    let multiple = 1usize << (levels - 1);
    let spec = NetworkSpec {
        name,
        base_channels: base,
        levels,
        channel_cap: cap,
        num_classes: NUM_CLASSES,
        input_size: input_size.map(|s| s.div_ceil(multiple) * multiple),
        blocks,
    };
    spec.validate()?;
    Ok(spec)
}

/// Fine network: residual encoder, context block at the
/// deepest level, anisotropic decoder.
pub fn build_fine_spec(base_channels: usize, levels: usize, cap: usize) -> Result<NetworkSpec> {
    build(NetKind::Fine, base_channels, levels, cap, FINE_INPUT)
}

/// Plain residual U-Net used for localization.
pub fn build_coarse_spec(base_channels: usize, levels: usize) -> Result<NetworkSpec> {
    build_coarse_spec_capped(base_channels, levels, DEFAULT_CAP)
}

pub fn build_coarse_spec_capped(base_channels: usize, levels: usize, cap: usize) -> Result<NetworkSpec> {
    build(NetKind::Coarse, base_channels, levels, cap, COARSE_INPUT)
}

pub fn default_spec(kind: NetKind) -> NetworkSpec {
    match kind {
        NetKind::Fine => build_fine_spec(FINE_BASE_CHANNELS, DEFAULT_LEVELS, DEFAULT_CAP),
        NetKind::Coarse => build_coarse_spec(COARSE_BASE_CHANNELS, DEFAULT_LEVELS),
    }
    .expect("default specs are valid")
}

impl NetworkSpec {
    pub fn with_input_size(mut self, input_size: [usize; 3]) -> Result<Self> {
        self.input_size = input_size;
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("network spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn block(&self, name: &str) -> Option<&BlockSpec> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Spatial divisor every input axis must be a multiple of.
    pub fn input_multiple(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| b.kind == BlockKind::EncoderResidual)
            .map(|b| b.scale)
            .product()
    }

    pub fn check_input(&self, size: [usize; 3]) -> Result<()> {
        let m = self.input_multiple();
        if size.iter().any(|&s| s == 0 || s % m != 0) {
            return Err(Error::InvalidArgument(format!(
                "input {size:?} must be a positive multiple of {m} on every axis for the {} net with {} levels",
                self.name, self.levels
            )));
        }
        Ok(())
    }

    /// Spatial size after each block for an input of `size`.
    pub fn block_sizes(&self, size: [usize; 3]) -> Result<Vec<[usize; 3]>> {
        self.check_input(size)?;
        let mut out: Vec<[usize; 3]> = Vec::with_capacity(self.blocks.len());
        let mut cur = size;
        for b in &self.blocks {
            cur = match b.kind {
                BlockKind::EncoderResidual => cur.map(|s| s / b.scale),
                BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso => {
                    let src = b.skip_from.as_deref().unwrap_or_default();
                    let i = self.blocks[..out.len()]
                        .iter()
                        .position(|x| x.name == src)
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!("{}: unknown skip {src:?}", b.name))
                        })?;
                    out[i]
                }
                _ => cur,
            };
            out.push(cur);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("network spec: {msg}")));
        if self.blocks.len() < 3 {
            return bad("needs at least stem, one encoder and head".into());
        }
        if self.num_classes < 2 || self.num_classes > 256 {
            return bad(format!("num_classes {} out of range", self.num_classes));
        }
        let first = &self.blocks[0];
        if first.kind != BlockKind::StemConv || first.in_channels != 1 {
            return bad("first block must be a single-channel stem_conv".into());
        }
        if first.out_channels != self.base_channels {
            return bad("stem width must equal base_channels".into());
        }
        let last = self.blocks.last().unwrap();
        if last.kind != BlockKind::HeadConv || last.out_channels != self.num_classes {
            return bad("last block must be a head_conv emitting num_classes".into());
        }

        let mut seen: Vec<&str> = Vec::new();
        let mut encoders = 0;
        let mut contexts = 0;
        let mut prev_out = 1;
        for (i, b) in self.blocks.iter().enumerate() {
            if seen.contains(&b.name.as_str()) {
                return bad(format!("duplicate block name {:?}", b.name));
            }
            if b.in_channels == 0 || b.out_channels == 0 {
                return bad(format!("{}: zero channels", b.name));
            }
            if b.in_channels != prev_out {
                return bad(format!(
                    "{}: takes {} channels but previous block emits {prev_out}",
                    b.name, b.in_channels
                ));
            }
            let position_ok = match b.kind {
                BlockKind::StemConv => i == 0,
                BlockKind::HeadConv => i == self.blocks.len() - 1,
                _ => i > 0 && i < self.blocks.len() - 1,
            };
            if !position_ok {
                return bad(format!("{}: {:?} block out of place", b.name, b.kind));
            }
            match b.kind {
                BlockKind::EncoderResidual => {
                    if !(1..=2).contains(&b.scale) {
                        return bad(format!("{}: encoder stride must be 1 or 2", b.name));
                    }
                    if contexts > 0 || self.blocks[..i].iter().any(BlockSpec::is_decoder) {
                        return bad(format!("{}: encoder after context/decoder", b.name));
                    }
                    encoders += 1;
                }
                BlockKind::ContextMixedPyramid => {
                    if b.in_channels != b.out_channels {
                        return bad(format!("{}: context block must keep width", b.name));
                    }
                    if self.blocks[..i].iter().any(BlockSpec::is_decoder) {
                        return bad(format!("{}: context block after decoder", b.name));
                    }
                    contexts += 1;
                }
                BlockKind::DecoderResidual | BlockKind::DecoderResidualAniso => {
                    let Some(src) = b.skip_from.as_deref() else {
                        return bad(format!("{}: decoder without skip_from", b.name));
                    };
                    let Some(skip) = self.blocks[..i].iter().find(|x| x.name == src) else {
                        return bad(format!("{}: skip_from {src:?} not an earlier block", b.name));
                    };
                    if !matches!(skip.kind, BlockKind::StemConv | BlockKind::EncoderResidual) {
                        return bad(format!("{}: skip_from must name an encoder or stem", b.name));
                    }
                    if skip.out_channels != b.out_channels {
                        return bad(format!(
                            "{}: emits {} channels but skip {src:?} has {}",
                            b.name, b.out_channels, skip.out_channels
                        ));
                    }
                }
                BlockKind::StemConv | BlockKind::HeadConv => {}
            }
            if b.kind != BlockKind::EncoderResidual && !b.is_decoder() && b.scale != 1 {
                return bad(format!("{}: scale must be 1", b.name));
            }
            seen.push(&b.name);
            prev_out = b.out_channels;
        }
        if contexts > 1 {
            return bad("at most one context block".into());
        }
        if encoders + 1 != self.levels {
            return bad(format!(
                "{} encoder blocks do not match levels = {}",
                encoders, self.levels
            ));
        }
        // Decoders must end back at input resolution.
        let sizes = self.block_sizes(self.input_size)?;
        if sizes[sizes.len() - 1] != self.input_size {
            return bad("decoder does not return to input resolution".into());
        }
        Ok(())
    }
}
