use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image_io::{encode_png, BitDepth};
use super::kspace::kspace_degrade;
use super::normalize::{normalize, NormRecord};
use super::phantom::{contrast_a, contrast_b, geometry, render};
use crate::error::{CanmError, Result};
use crate::fsutil::OutputSet;
use crate::tensor::Tensor;

/// A registered reference / target pair with its simulated low-resolution version.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePair {
    pub reference: Tensor,
    pub hr: Tensor,
    pub lr_small: Tensor,
    pub lr_interp: Tensor,
    pub scale: usize,
    pub seed: Option<u64>,
    pub ref_norm: NormRecord,
    pub hr_norm: NormRecord,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairMeta {
    pub scale: usize,
    pub seed: Option<u64>,
    pub normalization: NormMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormMeta {
    pub reference: NormRecord,
    pub hr: NormRecord,
}

impl ImagePair {
    /// Builds a pair from raw reference and target images.
    pub fn from_images(reference: &Tensor, target: &Tensor, scale: usize) -> Result<Self> {
        if reference.shape() != target.shape() {
            return Err(CanmError::shape(format!(
                "reference {:?} and target {:?} differ",
                reference.shape(),
                target.shape()
            )));
        }
        let (reference, ref_norm) = normalize(reference);
        let (hr, hr_norm) = normalize(target);
        let d = kspace_degrade(&hr, scale)?;
        Ok(ImagePair {
            reference,
            hr,
            lr_small: d.lr_small,
            lr_interp: d.lr_interp,
            scale,
            seed: None,
            ref_norm,
            hr_norm,
        })
    }

    pub fn meta(&self) -> PairMeta {
        PairMeta {
            scale: self.scale,
            seed: self.seed,
            normalization: NormMeta {
                reference: self.ref_norm,
                hr: self.hr_norm,
            },
        }
    }

    /// Writes `ref.png`, `hr.png`, `lr_small.png`, `lr_interp.png` (16-bit) and `meta.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        let mut out = OutputSet::new();
        for (name, img) in [
            ("ref.png", &self.reference),
            ("hr.png", &self.hr),
            ("lr_small.png", &self.lr_small),
            ("lr_interp.png", &self.lr_interp),
        ] {
            out.add(name, encode_png(img, BitDepth::Sixteen)?);
        }
        out.add("meta.json", serde_json::to_vec_pretty(&self.meta())?);
        out.commit(dir)
    }

    /// `[1, 1, H, W]` views for the network.
    pub fn batch(img: &Tensor) -> Tensor {
        let s = img.shape();
        img.reshape(&[1, 1, s[0], s[1]]).expect("image is [H, W]")
    }
}

/// Deterministic phantom pair: shared geometry, two contrasts, degraded target.
pub fn synth_pair(seed: u64, h: usize, w: usize, s: usize) -> Result<ImagePair> {
    let g = geometry(seed, h, w);
    let mut pair = ImagePair::from_images(&render(&g, contrast_a), &render(&g, contrast_b), s)?;
    pair.seed = Some(seed);
    Ok(pair)
}

/// Pearson correlation of gradient-magnitude maps.
pub fn edge_correlation(a: &Tensor, b: &Tensor) -> f64 {
    let edges = |t: &Tensor| -> Vec<f64> {
        let &[h, w] = t.shape() else { return Vec::new() };
        let mut e = Vec::with_capacity((h - 1) * (w - 1));
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let gy = t.get(&[y + 1, x]) - t.get(&[y, x]);
                let gx = t.get(&[y, x + 1]) - t.get(&[y, x]);
                e.push((gy * gy + gx * gx).sqrt());
            }
        }
        e
    };
    let (ea, eb) = (edges(a), edges(b));
    let n = ea.len() as f64;
    let (ma, mb) = (ea.iter().sum::<f64>() / n, eb.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ea.iter().zip(&eb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}
