use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Intensity range used to map an image to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub min: f64,
    pub max: f64,
}

/// Min-max scaling to `[0, 1]`; a constant image maps to zeros.
pub fn normalize(img: &Tensor) -> (Tensor, NormRecord) {
    let min = img.data().iter().copied().fold(f64::INFINITY, f64::min);
    let max = img.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rec = NormRecord { min, max };
    if max == min {
        return (Tensor::zeros(img.shape()), rec);
    }
    let span = max - min;
    (img.map(|v| (v - min) / span), rec)
}

pub fn denormalize(img: &Tensor, rec: &NormRecord) -> Tensor {
    let span = rec.max - rec.min;
    img.map(|v| v * span + rec.min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_values() {
        let (n, r) = normalize(&Tensor::new(&[2], vec![2.0, 4.0]).unwrap());
        assert_eq!(n.data(), &[0.0, 1.0]);
        assert_eq!(r, NormRecord { min: 2.0, max: 4.0 });
    }

    #[test]
    fn constant_maps_to_zero() {
        let (n, r) = normalize(&Tensor::full(&[3, 3], 7.0));
        assert!(n.data().iter().all(|&v| v == 0.0));
        assert_eq!(r.min, r.max);
        assert!(denormalize(&n, &r).data().iter().all(|&v| v == 7.0));
    }
}
