use super::broadcast::{binary_map, sum_to_shape};
use super::{check_divisor, Var};
use crate::error::Result;
use crate::tensor::Tensor;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    cdf + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

impl Var {
    pub fn add(&self, other: &Var) -> Result<Var> {
        let out = binary_map(self.value(), other.value(), |a, b| a + b)?;
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op("add", out, &[self, other], move |c| {
            vec![Some(sum_to_shape(c.grad, &sa)), Some(sum_to_shape(c.grad, &sb))]
        })
    }

    pub fn sub(&self, other: &Var) -> Result<Var> {
        let out = binary_map(self.value(), other.value(), |a, b| a - b)?;
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        Var::from_op("sub", out, &[self, other], move |c| {
            vec![
                Some(sum_to_shape(c.grad, &sa)),
                Some(sum_to_shape(&c.grad.map(|g| -g), &sb)),
            ]
        })
    }

    pub fn mul(&self, other: &Var) -> Result<Var> {
        let out = binary_map(self.value(), other.value(), |a, b| a * b)?;
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let (ta, tb) = (self.requires_grad(), other.requires_grad());
        Var::from_op("mul", out, &[self, other], move |c| {
            let (a, b) = (c.inputs[0], c.inputs[1]);
            let ga = ta.then(|| sum_to_shape(&binary_map(c.grad, b, |g, y| g * y).unwrap(), &sa));
            let gb = tb.then(|| sum_to_shape(&binary_map(c.grad, a, |g, x| g * x).unwrap(), &sb));
            vec![ga, gb]
        })
    }

    pub fn div(&self, other: &Var) -> Result<Var> {
        check_divisor(other.value())?;
        let out = binary_map(self.value(), other.value(), |a, b| a / b)?;
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        let (ta, tb) = (self.requires_grad(), other.requires_grad());
        Var::from_op("div", out, &[self, other], move |c| {
            let b = c.inputs[1];
            let ga = ta.then(|| sum_to_shape(&binary_map(c.grad, b, |g, y| g / y).unwrap(), &sa));
            // d(a/b)/db = -(a/b)/b
            let gb = tb.then(|| {
                let q = binary_map(c.output, b, |o, y| -o / y).unwrap();
                sum_to_shape(&binary_map(c.grad, &q, |g, v| g * v).unwrap(), &sb)
            });
            vec![ga, gb]
        })
    }

    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Result<Var> {
        let out = self.value().map(f);
        Var::from_op(op, out, &[self], move |c| {
            let g: Vec<f64> = c
                .grad
                .data()
                .iter()
                .zip(c.inputs[0].data())
                .zip(c.output.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::from_parts(c.grad.shape().to_vec(), g))]
        })
    }

    pub fn neg(&self) -> Result<Var> {
        self.unary("neg", |x| -x, |_, _| -1.0)
    }

    pub fn scale(&self, k: f64) -> Result<Var> {
        self.unary("scale", move |x| k * x, move |_, _| k)
    }

    pub fn add_scalar(&self, k: f64) -> Result<Var> {
        self.unary("add_scalar", move |x| x + k, |_, _| 1.0)
    }

    pub fn powf(&self, p: f64) -> Result<Var> {
        self.unary("pow", move |x| x.powf(p), move |x, _| p * x.powf(p - 1.0))
    }

    pub fn sqrt(&self) -> Result<Var> {
        self.unary("sqrt", f64::sqrt, |_, y| 0.5 / y)
    }

    pub fn exp(&self) -> Result<Var> {
        self.unary("exp", f64::exp, |_, y| y)
    }

    pub fn gelu(&self) -> Result<Var> {
        self.unary("gelu", gelu, |x, _| gelu_grad(x))
    }

    pub fn relu(&self) -> Result<Var> {
        self.unary("relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// `|x|` with subgradient 0 at ties.
    pub fn abs(&self) -> Result<Var> {
        self.unary("abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }
}
