use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{Conv, ConvShape, ParamSource};

/// Gated feed-forward: expand to `2rC`, gate one half by GELU of the other,
/// depthwise 3x3, project back to `C`.
#[derive(Clone, Debug)]
pub struct Ffb {
    pub expand: Conv,
    pub dw: Conv,
    pub proj: Conv,
}

impl Ffb {
    pub fn declare(src: &mut dyn ParamSource, name: &str, c: usize, ratio: usize) -> Result<Self> {
        let hidden = ratio * c;
        Ok(Ffb {
            expand: Conv::declare(src, &format!("{name}.expand"), ConvShape::pointwise(c, 2 * hidden))?,
            dw: Conv::declare(src, &format!("{name}.dw"), ConvShape::depthwise(hidden, 3))?,
            proj: Conv::declare(src, &format!("{name}.proj"), ConvShape::pointwise(hidden, c))?,
        })
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        let halves = self.expand.forward(x)?.chunk(2, 1)?;
        let gated = halves[0].mul(&halves[1].gelu()?)?;
        self.proj.forward(&self.dw.forward(&gated)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamInit;
    use crate::tensor::Tensor;

    #[test]
    fn shape_is_preserved() {
        let f = Ffb::declare(&mut ParamInit::untracked(0), "f", 4, 2).unwrap();
        let x = Var::constant(Tensor::ones(&[2, 4, 5, 5]));
        assert_eq!(f.forward(&x).unwrap().shape(), &[2, 4, 5, 5]);
        assert_eq!(f.expand.out_channels(), 16);
    }
}
