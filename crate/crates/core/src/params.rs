//! Named parameters: declaration, seeded initialization and binding.
//!
//! Blocks declare their parameters through a [`ParamSource`]. The same
//! declaration code serves two purposes: with a [`ParamInit`] it creates
//! fresh tensors (recording them in a [`ParamStore`]); with a [`ParamBinder`]
//! it looks existing tensors up by name and wraps them as graph leaves.
//!
//! Each parameter draws from its own RNG stream derived from `(seed, name)`,
//! so a parameter's initial value does not depend on which other parameters
//! exist. Two architectures that share a name share its initial value.

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Conv2dSpec, Var};
use crate::error::{CanmError, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal(0, std) truncated to two standard deviations.
    TruncNormal(f64),
    Zeros,
    Ones,
    Const(f64),
}

pub const PROJ_STD: f64 = 0.02;

impl Init {
    pub fn sample(self, shape: &[usize], rng: &mut impl Rng) -> Tensor {
        match self {
            Init::TruncNormal(std) => {
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| loop {
                        let z: f64 = rng.sample(StandardNormal);
                        if z.abs() <= 2.0 {
                            break z * std;
                        }
                    })
                    .collect();
                Tensor::from_parts(shape.to_vec(), data)
            }
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::Const(v) => Tensor::full(shape, v),
        }
    }
}

/// FNV-1a, used to derive a per-parameter stream from its name.
fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(name_hash(name));
    rng
}

/// Ordered name -> tensor registry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(CanmError::config(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name.to_string(), t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }
}

pub trait ParamSource {
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var>;
}

/// Creates fresh parameters from `(seed, name)` streams.
pub struct ParamInit {
    seed: u64,
    requires_grad: bool,
    store: ParamStore,
    vars: IndexMap<String, Var>,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        ParamInit {
            seed,
            requires_grad: true,
            store: ParamStore::new(),
            vars: IndexMap::new(),
        }
    }

    pub fn untracked(seed: u64) -> Self {
        ParamInit {
            requires_grad: false,
            ..ParamInit::new(seed)
        }
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn vars(&self) -> &IndexMap<String, Var> {
        &self.vars
    }
}

impl ParamSource for ParamInit {
    fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        let t = init.sample(shape, &mut param_rng(self.seed, name));
        self.store.insert(name, t.clone())?;
        let v = Var::leaf(t, self.requires_grad);
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }
}

/// Wraps tensors of an existing store as graph leaves.
pub struct ParamBinder<'a> {
    store: &'a ParamStore,
    requires_grad: bool,
    vars: IndexMap<String, Var>,
}

impl<'a> ParamBinder<'a> {
    pub fn new(store: &'a ParamStore, requires_grad: bool) -> Self {
        ParamBinder {
            store,
            requires_grad,
            vars: IndexMap::new(),
        }
    }

    pub fn into_vars(self) -> IndexMap<String, Var> {
        self.vars
    }
}

impl ParamSource for ParamBinder<'_> {
    fn param(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Var> {
        let t = self
            .store
            .get(name)
            .ok_or_else(|| CanmError::config(format!("missing parameter `{name}`")))?;
        if t.shape() != shape {
            return Err(CanmError::config(format!(
                "parameter `{name}` has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        if self.vars.contains_key(name) {
            return Err(CanmError::config(format!("duplicate parameter name `{name}`")));
        }
        let v = Var::leaf(t.clone(), self.requires_grad);
        self.vars.insert(name.to_string(), v.clone());
        Ok(v)
    }
}

/// Serves parameters from an explicit name -> leaf map.
pub struct VarSource<'a> {
    vars: &'a IndexMap<String, Var>,
}

impl<'a> VarSource<'a> {
    pub fn new(vars: &'a IndexMap<String, Var>) -> Self {
        VarSource { vars }
    }
}

impl ParamSource for VarSource<'_> {
    fn param(&mut self, name: &str, shape: &[usize], _init: Init) -> Result<Var> {
        let v = self
            .vars
            .get(name)
            .ok_or_else(|| CanmError::config(format!("missing parameter `{name}`")))?;
        if v.shape() != shape {
            return Err(CanmError::config(format!(
                "parameter `{name}` has shape {:?}, expected {shape:?}",
                v.shape()
            )));
        }
        Ok(v.clone())
    }
}

/// Convolution layer parameters.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Var,
    pub bias: Option<Var>,
    pub spec: Conv2dSpec,
}

#[derive(Clone, Copy, Debug)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub spec: Conv2dSpec,
    pub bias: bool,
}

impl ConvShape {
    pub fn pointwise(cin: usize, cout: usize) -> Self {
        ConvShape {
            cin,
            cout,
            k: 1,
            spec: Conv2dSpec::default(),
            bias: true,
        }
    }

    pub fn same(cin: usize, cout: usize, k: usize) -> Self {
        ConvShape {
            cin,
            cout,
            k,
            spec: Conv2dSpec::same(k),
            bias: true,
        }
    }

    pub fn depthwise(c: usize, k: usize) -> Self {
        ConvShape {
            cin: c,
            cout: c,
            k,
            spec: Conv2dSpec {
                groups: c,
                ..Conv2dSpec::same(k)
            },
            bias: true,
        }
    }

    pub fn strided(cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvShape {
            cin,
            cout,
            k,
            spec: Conv2dSpec {
                stride,
                padding,
                groups: 1,
            },
            bias: true,
        }
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.cout, self.cin / self.spec.groups, self.k, self.k]
    }

    pub fn numel(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + if self.bias { self.cout } else { 0 }
    }
}

impl Conv {
    pub fn declare(src: &mut dyn ParamSource, name: &str, shape: ConvShape) -> Result<Conv> {
        Conv::declare_with(src, name, shape, Init::TruncNormal(PROJ_STD), Init::Zeros)
    }

    pub fn declare_with(
        src: &mut dyn ParamSource,
        name: &str,
        shape: ConvShape,
        weight: Init,
        bias: Init,
    ) -> Result<Conv> {
        let w = src.param(&format!("{name}.weight"), &shape.weight_shape(), weight)?;
        let b = if shape.bias {
            Some(src.param(&format!("{name}.bias"), &[shape.cout], bias)?)
        } else {
            None
        };
        Ok(Conv {
            weight: w,
            bias: b,
            spec: shape.spec,
        })
    }

    /// A layer built directly from tensors (tests and fixtures).
    pub fn from_tensors(weight: Tensor, bias: Option<Tensor>, spec: Conv2dSpec) -> Conv {
        Conv {
            weight: Var::param(weight),
            bias: bias.map(Var::param),
            spec,
        }
    }

    pub fn forward(&self, x: &Var) -> Result<Var> {
        x.conv2d(&self.weight, self.bias.as_ref(), self.spec)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Per-pixel normalization across channels with learnable gain and bias.
#[derive(Clone, Debug)]
pub struct ChannelNorm {
    pub gain: Var,
    pub bias: Var,
}

pub const NORM_EPS: f64 = 1e-5;

impl ChannelNorm {
    pub fn declare(src: &mut dyn ParamSource, name: &str, c: usize) -> Result<Self> {
        Ok(ChannelNorm {
            gain: src.param(&format!("{name}_gain"), &[1, c, 1, 1], Init::Ones)?,
            bias: src.param(&format!("{name}_bias"), &[1, c, 1, 1], Init::Zeros)?,
        })
    }

    /// `x: [B, C, H, W]`, normalized over `C` at every pixel.
    pub fn forward(&self, x: &Var) -> Result<Var> {
        let mu = x.mean_axes(&[1])?;
        let xc = x.sub(&mu)?;
        let var = xc.mul(&xc)?.mean_axes(&[1])?;
        let xhat = xc.div(&var.add_scalar(NORM_EPS)?.sqrt()?)?;
        xhat.mul(&self.gain)?.add(&self.bias)
    }
}
