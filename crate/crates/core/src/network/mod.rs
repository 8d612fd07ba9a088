//! Network configuration, construction, inference and persistence.

pub mod checkpoint;
pub mod config;
pub mod count;
pub mod model;

pub use config::{NetworkConfig, Variant};
pub use count::Counts;
pub use model::{ForwardOutput, Model};

use indexmap::IndexMap;

use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{ParamBinder, ParamInit, ParamStore, VarSource};
use crate::tensor::Tensor;

/// A configuration together with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    pub params: ParamStore,
}

impl Network {
    /// Validates `config` and initializes every parameter from `seed`.
    pub fn build(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut init = ParamInit::untracked(seed);
        Model::declare(&mut init, config)?;
        Ok(Network {
            config: config.clone(),
            params: init.into_store(),
        })
    }

    pub fn build_variant(config: &NetworkConfig, variant: Variant, seed: u64) -> Result<Self> {
        Network::build(&variant.apply(config), seed)
    }

    /// Wraps the current parameter values as graph leaves.
    pub fn bind(&self, requires_grad: bool) -> Result<(Model, IndexMap<String, Var>)> {
        let mut binder = ParamBinder::new(&self.params, requires_grad);
        let model = Model::declare(&mut binder, &self.config)?;
        Ok((model, binder.into_vars()))
    }

    /// Builds the model over caller-provided leaves (one per parameter name).
    pub fn model_from_vars(&self, vars: &IndexMap<String, Var>) -> Result<Model> {
        Model::declare(&mut VarSource::new(vars), &self.config)
    }

    /// Untracked inference on `[B, 1, H, W]` inputs.
    pub fn forward(&self, reference: &Tensor, lr_interp: &Tensor) -> Result<Tensor> {
        let (model, _) = self.bind(false)?;
        let out = model.forward(&Var::constant(reference.clone()), &Var::constant(lr_interp.clone()))?;
        Ok(out.output.value().clone())
    }

    /// Copies the degraded branch's head and encoder weights into the reference branch.
    pub fn share_branches(&mut self) {
        let pairs: Vec<(String, Tensor)> = self
            .params
            .iter()
            .filter_map(|(name, t)| {
                let to = name
                    .strip_prefix("enc_deg.")
                    .map(|rest| format!("enc_ref.{rest}"))
                    .or_else(|| name.strip_prefix("head_deg.").map(|rest| format!("head_ref.{rest}")))?;
                Some((to, t.clone()))
            })
            .collect();
        for (to, t) in pairs {
            *self.params.get_mut(&to).expect("branches are symmetric") = t;
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn counts(&self) -> Counts {
        count::count(&self.config, self.param_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::MatchMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs(cfg: &NetworkConfig, b: usize, seed: u64) -> (Tensor, Tensor) {
        let [h, w] = cfg.input_size;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            Tensor::rand_uniform(&[b, 1, h, w], 0.0, 1.0, &mut rng),
            Tensor::rand_uniform(&[b, 1, h, w], 0.0, 1.0, &mut rng),
        )
    }

    #[test]
    fn same_seed_same_registry() {
        let cfg = NetworkConfig::desk();
        assert_eq!(Network::build(&cfg, 3).unwrap(), Network::build(&cfg, 3).unwrap());
        assert_ne!(Network::build(&cfg, 3).unwrap().params, Network::build(&cfg, 4).unwrap().params);
    }

    #[test]
    fn fresh_network_returns_lr_input() {
        let cfg = NetworkConfig::desk();
        let net = Network::build(&cfg, 1).unwrap();
        let (r, lr) = inputs(&cfg, 1, 0);
        let y = net.forward(&r, &lr).unwrap();
        assert_eq!(y, lr);
    }

    #[test]
    fn registry_matches_closed_form() {
        for v in std::iter::once(Variant::Default).chain(Variant::ABLATIONS) {
            let cfg = v.apply(&NetworkConfig::desk());
            let net = Network::build(&cfg, 0).unwrap();
            assert_eq!(net.param_count(), count::analytic_params(&cfg), "{v}");
        }
    }

    #[test]
    fn doubling_width_quadruples_conv_weights() {
        let mut cfg = NetworkConfig::desk();
        let a = count::analytic_params(&cfg) as f64;
        cfg.channels = cfg.channels.map(|c| 2 * c);
        let b = count::analytic_params(&cfg) as f64;
        assert!(b / a > 3.8 && b / a < 4.0, "{}", b / a);
    }

    #[test]
    fn wo_fm_has_no_matching_weights() {
        let cfg = NetworkConfig::desk();
        let base = Network::build(&cfg, 0).unwrap();
        let wo = Network::build_variant(&cfg, Variant::WoFm, 0).unwrap();
        assert!(wo.params.names().all(|n| !n.contains(".nbfm.") && !n.contains(".gfm.")));
        assert!(wo.param_count() < base.param_count());
        assert_eq!(Variant::Gfm.apply(&cfg).matching, MatchMode::Gfm);
    }

    #[test]
    fn wrong_resolution_is_shape_error() {
        let net = Network::build(&NetworkConfig::desk(), 0).unwrap();
        let x = Tensor::zeros(&[1, 1, 32, 32]);
        assert!(matches!(net.forward(&x, &x), Err(crate::CanmError::Shape(_))));
    }

    #[test]
    fn checkpoint_roundtrip_and_rejections() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NetworkConfig::desk();
        let mut net = Network::build(&cfg, 5).unwrap();
        // make the output depend on every weight
        let t = net.params.get_mut("out.conv.weight").unwrap();
        *t = Tensor::full(t.shape(), 0.01);
        net.save_weights(dir.path()).unwrap();
        let mut other = Network::build(&cfg, 6).unwrap();
        other.load_weights(dir.path()).unwrap();
        assert_eq!(other, net);
        let (r, lr) = inputs(&cfg, 1, 1);
        assert_eq!(other.forward(&r, &lr).unwrap(), net.forward(&r, &lr).unwrap());

        let mut gfm = Network::build_variant(&cfg, Variant::Gfm, 0).unwrap();
        let before = gfm.clone();
        let err = gfm.load_weights(dir.path()).unwrap_err().to_string();
        assert!(err.contains("match1.gfm.w") || err.contains("match1.nbfm.w"), "{err}");
        assert_eq!(gfm, before);

        let f = dir.path().join("head_ref.weight.canm");
        let bytes = std::fs::read(&f).unwrap();
        std::fs::write(&f, &bytes[..bytes.len() - 3]).unwrap();
        let mut fresh = Network::build(&cfg, 6).unwrap();
        let snapshot = fresh.clone();
        let err = fresh.load_weights(dir.path()).unwrap_err().to_string();
        assert!(err.contains("head_ref.weight"), "{err}");
        assert_eq!(fresh, snapshot);
    }

    #[test]
    fn batch_permutation_commutes() {
        let cfg = NetworkConfig::desk();
        let mut net = Network::build(&cfg, 2).unwrap();
        let t = net.params.get_mut("out.conv.weight").unwrap();
        *t = Tensor::full(t.shape(), 0.02);
        let (r, lr) = inputs(&cfg, 2, 9);
        let y = net.forward(&r, &lr).unwrap();
        let swap = |t: &Tensor| Tensor::stack(&[t.select(0, 1), t.select(0, 0)]).unwrap();
        let ys = net.forward(&swap(&r), &swap(&lr)).unwrap();
        assert_eq!(swap(&y), ys);
    }
}
