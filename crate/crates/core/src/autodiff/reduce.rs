use super::broadcast::{broadcast_to, sum_to_shape};
use super::Var;
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

impl Var {
    pub fn sum(&self) -> Result<Var> {
        let shape = self.shape().to_vec();
        Var::from_op("sum", Tensor::scalar(self.value().sum()), &[self], move |c| {
            vec![Some(Tensor::full(&shape, c.grad.data()[0]))]
        })
    }

    pub fn mean(&self) -> Result<Var> {
        let shape = self.shape().to_vec();
        let n = self.value().len() as f64;
        Var::from_op("mean", Tensor::scalar(self.value().sum() / n), &[self], move |c| {
            vec![Some(Tensor::full(&shape, c.grad.data()[0] / n))]
        })
    }

    /// Sum over `axes`, keeping them as size-1 dimensions.
    pub fn sum_axes(&self, axes: &[usize]) -> Result<Var> {
        let shape = self.shape().to_vec();
        let mut kept = shape.clone();
        for &a in axes {
            if a >= shape.len() {
                return Err(CanmError::shape(format!(
                    "axis {a} out of range for {shape:?}"
                )));
            }
            kept[a] = 1;
        }
        let out = sum_to_shape(self.value(), &kept);
        Var::from_op("sum_axes", out, &[self], move |c| {
            vec![Some(broadcast_to(c.grad, &shape).unwrap())]
        })
    }

    pub fn mean_axes(&self, axes: &[usize]) -> Result<Var> {
        let n: usize = axes.iter().map(|&a| self.shape().get(a).copied().unwrap_or(1)).product();
        self.sum_axes(axes)?.scale(1.0 / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_axes_keepdim() {
        let x = Var::param(Tensor::from_fn(&[2, 3, 2], |i| (i[0] * 6 + i[1] * 2 + i[2]) as f64));
        let s = x.sum_axes(&[1]).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        assert_eq!(s.value().data(), &[6., 9., 24., 27.]);
        s.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), Tensor::ones(&[2, 3, 2]));
    }

    #[test]
    fn mean_axes_divides_by_reduced_count() {
        let x = Var::constant(Tensor::from_fn(&[1, 2, 2, 2], |i| (i[2] * 2 + i[3]) as f64));
        let m = x.mean_axes(&[2, 3]).unwrap();
        assert_eq!(m.value().data(), &[1.5, 1.5]);
    }
}
