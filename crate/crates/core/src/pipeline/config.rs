use serde::{Deserialize, Serialize};

use super::components::Connectivity;
use crate::error::{Error, Result};
use crate::netdef::{
    build_coarse_spec_capped, build_fine_spec, NetworkSpec, COARSE_BASE_CHANNELS, DEFAULT_CAP,
    DEFAULT_LEVELS, FINE_BASE_CHANNELS,
};
use crate::voxgrid::Orientation;

/// Width/depth knobs of one of the two networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub base_channels: usize,
    pub levels: usize,
    pub channel_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub coarse_size: [usize; 3],
    pub fine_size: [usize; 3],
    /// HU window applied before z-scoring.
    pub clip_range: [f32; 2],
    /// ROI growth per side, as a fraction of the box side.
    pub roi_margin_frac: f32,
    /// Components smaller than this fraction of their class's largest are
    /// removed.
    pub cc_keep_ratio: f32,
    pub connectivity: Connectivity,
    pub target_orientation: Orientation,
    pub coarse_net: NetConfig,
    pub fine_net: NetConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            coarse_size: [160; 3],
            fine_size: [192; 3],
            clip_range: [-325.0, 325.0],
            roi_margin_frac: 0.10,
            cc_keep_ratio: 0.10,
            connectivity: Connectivity::TwentySix,
            target_orientation: Orientation::LPI,
            coarse_net: NetConfig {
                base_channels: COARSE_BASE_CHANNELS,
                levels: DEFAULT_LEVELS,
                channel_cap: DEFAULT_CAP,
            },
            fine_net: NetConfig {
                base_channels: FINE_BASE_CHANNELS,
                levels: DEFAULT_LEVELS,
                channel_cap: DEFAULT_CAP,
            },
        }
    }
}

impl PipelineConfig {
    /// Default networks at 64³ (coarse) and 96³ (fine) input, sized for a
    /// desktop CPU.
    pub fn reduced() -> Self {
        PipelineConfig {
            coarse_size: [64; 3],
            fine_size: [96; 3],
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("pipeline config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn coarse_spec(&self) -> Result<NetworkSpec> {
        let n = &self.coarse_net;
        build_coarse_spec_capped(n.base_channels, n.levels, n.channel_cap)?
            .with_input_size(self.coarse_size)
    }

    pub fn fine_spec(&self) -> Result<NetworkSpec> {
        let n = &self.fine_net;
        build_fine_spec(n.base_channels, n.levels, n.channel_cap)?.with_input_size(self.fine_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("pipeline config: {m}")));
        let [lo, hi] = self.clip_range;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return bad(format!("clip range [{lo}, {hi}] is empty"));
        }
        // Any margin is allowed; a large one makes the fine stage see the
        // whole volume.
        if !(self.roi_margin_frac.is_finite() && self.roi_margin_frac >= 0.0) {
            return bad(format!("roi_margin_frac {} must be finite and >= 0", self.roi_margin_frac));
        }
        if !(0.0..=1.0).contains(&self.cc_keep_ratio) {
            return bad(format!("cc_keep_ratio {} not in [0, 1]", self.cc_keep_ratio));
        }
        self.coarse_spec()?;
        self.fine_spec()?;
        Ok(())
    }
}
