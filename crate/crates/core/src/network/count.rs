//! Closed-form parameter and multiply-accumulate counts.
//!
//! MACs cover convolutions, attention products and matching dot products
//! for one `[1, 1, H, W]` forward pass; normalization, softmax and other
//! elementwise work is excluded.

use serde::Serialize;

use super::config::{NetworkConfig, LEVELS, MATCH_LEVELS};
use crate::blocks::ctl::ChannelKind;
use crate::matching::{MatchMode, Neighborhood};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub params: usize,
    pub macs: u64,
}

fn conv_params(cin: usize, cout: usize, k: usize, groups: usize) -> usize {
    cout * (cin / groups) * k * k + cout
}

fn ctl_params(cfg: &NetworkConfig, k: usize) -> usize {
    let c = cfg.channels[k - 1];
    let pw = conv_params(c, c, 1, 1);
    let mixer = if cfg.cnn_only {
        2 * conv_params(c, c, 3, 1)
    } else {
        let mut paths = 0;
        let mut p = 0;
        if cfg.use_wab {
            paths += 1;
            p += 4 * pw;
        }
        match cfg.mixer().channel {
            ChannelKind::None => {}
            ChannelKind::Pyramid => {
                paths += 1;
                p += 6 * pw + 2;
            }
            ChannelKind::FullScale => {
                paths += 1;
                p += 4 * pw + 1;
            }
        }
        p + conv_params(paths * c, c, 1, 1)
    };
    let hidden = cfg.ffb_ratio * c;
    let ffb = conv_params(c, 2 * hidden, 1, 1) + conv_params(hidden, hidden, 3, hidden) + conv_params(hidden, c, 1, 1);
    mixer + ffb + 4 * c
}

/// Parameter count derived from the configuration alone.
pub fn analytic_params(cfg: &NetworkConfig) -> usize {
    let ch = cfg.channels;
    let mut n = 2 * conv_params(1, ch[0], 3, 1);
    for k in 1..=LEVELS {
        let stage = cfg.cte_ctls[k - 1] * ctl_params(cfg, k)
            + if k < LEVELS { conv_params(ch[k - 1], ch[k], 2, 1) } else { 0 };
        n += 2 * stage;
    }
    for k in 1..=MATCH_LEVELS {
        let c = ch[k - 1];
        let (gh, gw) = cfg.level_size(k);
        n += conv_params(2 * c, c, 1, 1);
        n += match cfg.matching {
            MatchMode::None => 0,
            MatchMode::Nbfm => {
                let [nh, nw] = cfg.neighborhoods[k - 1];
                2 * conv_params(c, c, 3, 1) + nh * nw
            }
            MatchMode::Gfm => 2 * conv_params(c, c, 3, 1) + (2 * gh - 1) * (2 * gw - 1),
        };
        n += conv_params(ch[k], 4 * c, 1, 1) + conv_params(2 * c, c, 1, 1) + cfg.ctd_ctls[k - 1] * ctl_params(cfg, k);
    }
    n += conv_params(2 * ch[3], ch[3], 1, 1);
    n += conv_params(ch[0], 4 * ch[0], 1, 1) + conv_params(ch[0], 1, 3, 1);
    n
}

fn conv_macs(cin: usize, cout: usize, k: usize, groups: usize, out_px: usize) -> u64 {
    (cout * (cin / groups) * k * k * out_px) as u64
}

fn ctl_macs(cfg: &NetworkConfig, k: usize) -> u64 {
    let c = cfg.channels[k - 1];
    let (h, w) = cfg.level_size(k);
    let px = h * w;
    let pw = conv_macs(c, c, 1, 1, px);
    let mixer = if cfg.cnn_only {
        2 * conv_macs(c, c, 3, 1, px)
    } else {
        let mut paths = 0;
        let mut m = 0;
        if cfg.use_wab {
            paths += 1;
            let tokens = cfg.window_size.min(h) * cfg.window_size.min(w);
            // q k^T and attn v, each T*T*d per head and window
            m += 4 * pw + 2 * (px * tokens * c) as u64;
        }
        let d = c / cfg.ca_heads[k - 1];
        match cfg.mixer().channel {
            ChannelKind::None => {}
            ChannelKind::Pyramid => {
                paths += 1;
                m += 2 * pw + 2 * conv_macs(c, c, 1, 1, px / 4) + 2 * conv_macs(c, c, 1, 1, px / 16);
                m += (c * d * (px / 4 + px / 16 + px)) as u64;
            }
            ChannelKind::FullScale => {
                paths += 1;
                m += 4 * pw + (2 * c * d * px) as u64;
            }
        }
        m + conv_macs(paths * c, c, 1, 1, px)
    };
    let hidden = cfg.ffb_ratio * c;
    mixer + conv_macs(c, 2 * hidden, 1, 1, px) + conv_macs(hidden, hidden, 3, hidden, px) + conv_macs(hidden, c, 1, 1, px)
}

pub fn analytic_macs(cfg: &NetworkConfig) -> u64 {
    let ch = cfg.channels;
    let [ph, pw] = cfg.patch_size;
    let px = |k: usize| {
        let (h, w) = cfg.level_size(k);
        h * w
    };
    let mut m = 2 * conv_macs(1, ch[0], 3, 1, px(1));
    for k in 1..=LEVELS {
        m += 2 * cfg.cte_ctls[k - 1] as u64 * ctl_macs(cfg, k);
        if k < LEVELS {
            m += 2 * conv_macs(ch[k - 1], ch[k], 2, 1, px(k + 1));
        }
    }
    for k in 1..=MATCH_LEVELS {
        let c = ch[k - 1];
        let (gh, gw) = cfg.level_size(k);
        m += conv_macs(2 * c, c, 1, 1, px(k));
        let pairs = match cfg.matching {
            MatchMode::None => None,
            MatchMode::Nbfm => {
                let [nh, nw] = cfg.neighborhoods[k - 1];
                Neighborhood::new(gh, gw, nh, nw).ok().map(|n| n.valid_pairs())
            }
            MatchMode::Gfm => Some(px(k) * px(k)),
        };
        if let Some(pairs) = pairs {
            // similarity and aggregation over patch vectors of length C*ph*pw
            m += 2 * conv_macs(c, c, 3, 1, px(k)) + 2 * (pairs * c * ph * pw) as u64;
        }
        m += conv_macs(ch[k], 4 * c, 1, 1, px(k + 1)) + conv_macs(2 * c, c, 1, 1, px(k));
        m += cfg.ctd_ctls[k - 1] as u64 * ctl_macs(cfg, k);
    }
    m += conv_macs(2 * ch[3], ch[3], 1, 1, px(4));
    m += conv_macs(ch[0], 4 * ch[0], 1, 1, px(1));
    let [h, w] = cfg.input_size;
    m + conv_macs(ch[0], 1, 3, 1, h * w)
}

pub fn count(cfg: &NetworkConfig, params: usize) -> Counts {
    Counts {
        params,
        macs: analytic_macs(cfg),
    }
}
