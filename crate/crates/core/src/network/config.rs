use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blocks::ctl::{ChannelKind, CtlShape, MixerKind};
use crate::error::{CanmError, Result};
use crate::matching::MatchMode;

pub const LEVELS: usize = 4;
pub const MATCH_LEVELS: usize = 3;

/// Full description of a network; it alone determines the graph and parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_size: [usize; 2],
    pub channels: [usize; LEVELS],
    pub cte_ctls: [usize; LEVELS],
    /// Decoder layer counts indexed by level (1, 2, 3).
    pub ctd_ctls: [usize; MATCH_LEVELS],
    pub wa_heads: [usize; LEVELS],
    pub ca_heads: [usize; LEVELS],
    pub neighborhoods: [[usize; 2]; MATCH_LEVELS],
    pub patch_size: [usize; 2],
    pub window_size: usize,
    pub ffb_ratio: usize,
    pub use_cab: bool,
    pub use_wab: bool,
    pub use_pyramid: bool,
    pub cnn_only: bool,
    pub matching: MatchMode,
    pub global_residual: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Default,
    WoCa,
    WoWa,
    WoPs,
    CnnOnly,
    WoFm,
    Gfm,
}

impl Variant {
    pub const ABLATIONS: [Variant; 6] = [
        Variant::WoCa,
        Variant::WoWa,
        Variant::WoPs,
        Variant::CnnOnly,
        Variant::WoFm,
        Variant::Gfm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::WoCa => "wo_ca",
            Variant::WoWa => "wo_wa",
            Variant::WoPs => "wo_ps",
            Variant::CnnOnly => "cnn_only",
            Variant::WoFm => "wo_fm",
            Variant::Gfm => "gfm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        std::iter::once(Variant::Default)
            .chain(Variant::ABLATIONS)
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                CanmError::usage(format!(
                    "unknown variant `{s}` (expected one of default, wo_ca, wo_wa, wo_ps, cnn_only, wo_fm, gfm)"
                ))
            })
    }

    pub fn apply(self, cfg: &NetworkConfig) -> NetworkConfig {
        let mut c = cfg.clone();
        match self {
            Variant::Default => {}
            Variant::WoCa => c.use_cab = false,
            Variant::WoWa => c.use_wab = false,
            Variant::WoPs => c.use_pyramid = false,
            Variant::CnnOnly => c.cnn_only = true,
            Variant::WoFm => c.matching = MatchMode::None,
            Variant::Gfm => c.matching = MatchMode::Gfm,
        }
        c
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl NetworkConfig {
    /// Full-size configuration: 256x256 input, channel ladder 64..256.
    pub fn full() -> Self {
        NetworkConfig {
            input_size: [256, 256],
            channels: [64, 128, 256, 256],
            cte_ctls: [4, 4, 16, 4],
            ctd_ctls: [4, 4, 4],
            wa_heads: [2, 4, 8, 8],
            ca_heads: [1, 2, 4, 8],
            neighborhoods: [[3, 3], [3, 3], [5, 5]],
            patch_size: [3, 3],
            window_size: 8,
            ffb_ratio: 2,
            use_cab: true,
            use_wab: true,
            use_pyramid: true,
            cnn_only: false,
            matching: MatchMode::Nbfm,
            global_residual: true,
        }
    }

    /// Small configuration for single-core experiments.
    pub fn desk() -> Self {
        NetworkConfig {
            input_size: [64, 64],
            channels: [16, 24, 32, 32],
            cte_ctls: [2, 2, 2, 2],
            ctd_ctls: [2, 2, 2],
            ..NetworkConfig::full()
        }
    }

    /// Tiny configuration whose neighborhoods cover every level's patch grid.
    pub fn micro_covering() -> Self {
        NetworkConfig {
            input_size: [64, 64],
            channels: [4, 8, 8, 8],
            cte_ctls: [2, 2, 2, 2],
            ctd_ctls: [2, 2, 2],
            wa_heads: [2, 2, 2, 2],
            ca_heads: [1, 1, 1, 1],
            neighborhoods: [[63, 63], [31, 31], [15, 15]],
            ..NetworkConfig::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" | "full" => Ok(NetworkConfig::full()),
            "desk" => Ok(NetworkConfig::desk()),
            "micro" => Ok(NetworkConfig::micro_covering()),
            _ => Err(CanmError::usage(format!("unknown preset `{name}` (expected default, full, desk or micro)"))),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: NetworkConfig = serde_json::from_str(s).map_err(|e| CanmError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Feature size at level `k` (1-based).
    pub fn level_size(&self, k: usize) -> (usize, usize) {
        (self.input_size[0] >> k, self.input_size[1] >> k)
    }

    pub fn mixer(&self) -> MixerKind {
        MixerKind {
            window: self.use_wab,
            channel: match (self.use_cab, self.use_pyramid) {
                (false, _) => ChannelKind::None,
                (true, true) => ChannelKind::Pyramid,
                (true, false) => ChannelKind::FullScale,
            },
            cnn_only: self.cnn_only,
        }
    }

    pub fn ctl_shape(&self, k: usize) -> CtlShape {
        CtlShape {
            channels: self.channels[k - 1],
            wa_heads: self.wa_heads[k - 1],
            ca_heads: self.ca_heads[k - 1],
            window: self.window_size,
            ffb_ratio: self.ffb_ratio,
            mixer: self.mixer(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CanmError::config(m));
        let [h, w] = self.input_size;
        if h == 0 || w == 0 || h % (1 << LEVELS) != 0 || w % (1 << LEVELS) != 0 {
            return bad(format!("input_size {h}x{w} must be divisible by {}", 1 << LEVELS));
        }
        if self.channels.contains(&0) {
            return bad("channels must be positive".into());
        }
        for (k, n) in self.cte_ctls.iter().enumerate() {
            if n % 2 != 0 {
                return bad(format!("cte_ctls[{k}] = {n} must be even"));
            }
        }
        for (k, n) in self.ctd_ctls.iter().enumerate() {
            if n % 2 != 0 {
                return bad(format!("ctd_ctls[{k}] = {n} must be even"));
            }
        }
        if self.window_size == 0 || self.ffb_ratio == 0 {
            return bad("window_size and ffb_ratio must be positive".into());
        }
        let [ph, pw] = self.patch_size;
        if ph % 2 == 0 || pw % 2 == 0 {
            return bad(format!("patch_size ({ph}, {pw}) must be odd"));
        }
        for (k, [nh, nw]) in self.neighborhoods.iter().enumerate() {
            if nh % 2 == 0 || nw % 2 == 0 {
                return bad(format!("neighborhoods[{k}] ({nh}, {nw}) must be odd"));
            }
        }
        if !self.cnn_only && !self.use_wab && !self.use_cab {
            return bad("use_wab and use_cab cannot both be false".into());
        }
        for k in 1..=LEVELS {
            let (lh, lw) = self.level_size(k);
            let c = self.channels[k - 1];
            if self.cnn_only {
                continue;
            }
            if self.use_wab {
                let (wh, ww) = (self.window_size.min(lh), self.window_size.min(lw));
                if lh % wh != 0 || lw % ww != 0 {
                    return bad(format!("level {k} features {lh}x{lw} are not divisible by window {}", self.window_size));
                }
                if !c.is_multiple_of(self.wa_heads[k - 1]) || self.wa_heads[k - 1] == 0 {
                    return bad(format!("level {k}: {c} channels not divisible by {} window heads", self.wa_heads[k - 1]));
                }
            }
            if self.use_cab {
                if self.use_pyramid && (lh % 4 != 0 || lw % 4 != 0) {
                    return bad(format!("level {k} features {lh}x{lw} are not divisible by 4"));
                }
                if self.ca_heads[k - 1] == 0 || !c.is_multiple_of(self.ca_heads[k - 1]) {
                    return bad(format!("level {k}: {c} channels not divisible by {} channel heads", self.ca_heads[k - 1]));
                }
            }
        }
        Ok(())
    }
}
