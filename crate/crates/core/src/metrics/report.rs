use serde::{Serialize, Serializer};

use super::{l1, psnr, ssim};
use crate::error::Result;
use crate::tensor::Tensor;

/// Writes non-finite floats as the strings `"inf"`, `"-inf"` or `"nan"`.
pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub fn fmt_f64(v: f64, prec: usize) -> String {
    if v.is_finite() {
        format!("{v:.prec$}")
    } else {
        ser_name(v).to_string()
    }
}

fn ser_name(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageMetrics {
    pub name: String,
    #[serde(serialize_with = "ser_f64")]
    pub psnr: f64,
    #[serde(serialize_with = "ser_f64")]
    pub ssim: f64,
    #[serde(serialize_with = "ser_f64")]
    pub l1: f64,
}

impl ImageMetrics {
    /// PSNR and SSIM at data range 1.
    pub fn measure(name: &str, y: &Tensor, target: &Tensor) -> Result<Self> {
        Ok(ImageMetrics {
            name: name.to_string(),
            psnr: psnr(y, target, 1.0)?,
            ssim: ssim(y, target, 1.0)?,
            l1: l1(y, target)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    #[serde(serialize_with = "ser_f64")]
    pub mean: f64,
    #[serde(serialize_with = "ser_f64")]
    pub std: f64,
    #[serde(serialize_with = "ser_f64")]
    pub min: f64,
    #[serde(serialize_with = "ser_f64")]
    pub max: f64,
}

impl Aggregate {
    pub fn of(vals: &[f64]) -> Self {
        let n = vals.len() as f64;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if vals.iter().any(|v| v.is_infinite()) {
            let mean = vals.iter().sum::<f64>() / n;
            return Aggregate { mean, std: f64::NAN, min, max };
        }
        // keep the mean inside the observed range despite rounding
        let mean = (vals.iter().sum::<f64>() / n).clamp(min, max);
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Aggregate {
            mean,
            std: var.sqrt(),
            min,
            max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub images: Vec<ImageMetrics>,
    pub psnr: Aggregate,
    pub ssim: Aggregate,
    pub l1: Aggregate,
}

impl MetricReport {
    pub fn new(images: Vec<ImageMetrics>) -> Self {
        let col = |f: fn(&ImageMetrics) -> f64| Aggregate::of(&images.iter().map(f).collect::<Vec<_>>());
        MetricReport {
            psnr: col(|m| m.psnr),
            ssim: col(|m| m.ssim),
            l1: col(|m| m.l1),
            images,
        }
    }

    pub fn get(&self, name: &str) -> Option<&ImageMetrics> {
        self.images.iter().find(|m| m.name == name)
    }

    /// Aligned human-readable table.
    pub fn to_text(&self) -> String {
        let width = self.images.iter().map(|m| m.name.len()).max().unwrap_or(4).max(5);
        let mut s = format!("{:<width$}  {:>10}  {:>8}  {:>10}\n", "image", "psnr_db", "ssim", "l1");
        for m in &self.images {
            s += &format!(
                "{:<width$}  {:>10}  {:>8}  {:>10}\n",
                m.name,
                fmt_f64(m.psnr, 4),
                fmt_f64(m.ssim, 5),
                fmt_f64(m.l1, 6)
            );
        }
        s
    }
}
