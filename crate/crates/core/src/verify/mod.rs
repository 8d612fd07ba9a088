//! Finite-difference gradient checks, brute-force oracles and the suites that drive them.

pub mod gradcheck;
pub mod oracles;
pub mod suites;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::params::{param_rng, ParamBinder, ParamInit, ParamSource, ParamStore};
use crate::tensor::Tensor;

/// Declares a block, then replaces every parameter with `Normal(0, std)` draws
/// so that zero biases and unit gains do not hide errors.
pub fn randomized<T>(
    seed: u64,
    std: f64,
    declare: impl Fn(&mut dyn ParamSource) -> Result<T>,
) -> Result<(T, ParamStore)> {
    let mut init = ParamInit::untracked(seed);
    declare(&mut init)?;
    let mut store = init.into_store();
    for (name, t) in store.iter_mut() {
        *t = Tensor::randn(t.shape(), std, &mut param_rng(seed ^ 0x5eed, name));
    }
    let block = declare(&mut ParamBinder::new(&store, false))?;
    Ok((block, store))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
