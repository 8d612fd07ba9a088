use serde::{Deserialize, Serialize};

use super::{fold_patches, global_match, nbfm_match, unfold_patches, Adain, MatchResult, Neighborhood, PatchGeometry};
use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{Conv, ConvShape, Init, ParamSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    Nbfm,
    Gfm,
    /// Plain concatenation of both branches.
    None,
}

/// Aligns, matches and fuses one level's reference features into the target branch.
#[derive(Clone, Debug)]
pub struct MatchUnit {
    pub mode: MatchMode,
    pub adain: Option<Adain>,
    pub w: Option<Var>,
    pub neighborhood: Option<Neighborhood>,
    pub patch: (usize, usize),
    pub fuse: Conv,
}

pub struct MatchOutput {
    pub fused: Var,
    pub matched_map: Option<Var>,
    pub result: Option<MatchResult>,
}

impl MatchUnit {
    #[allow(clippy::too_many_arguments)]
    pub fn declare(
        src: &mut dyn ParamSource,
        name: &str,
        c: usize,
        grid: (usize, usize),
        patch: (usize, usize),
        neighborhood: (usize, usize),
        mode: MatchMode,
    ) -> Result<Self> {
        let (adain, w, nb) = match mode {
            MatchMode::None => (None, None, None),
            MatchMode::Nbfm | MatchMode::Gfm => {
                let adain = Adain::declare(src, &format!("{name}.adain"), c)?;
                let (nb, tag) = if mode == MatchMode::Nbfm {
                    (Neighborhood::new(grid.0, grid.1, neighborhood.0, neighborhood.1)?, "nbfm")
                } else {
                    (Neighborhood::covering(grid.0, grid.1)?, "gfm")
                };
                let w = src.param(&format!("{name}.{tag}.w"), &[nb.offsets()], Init::Ones)?;
                (Some(adain), Some(w), Some(nb))
            }
        };
        Ok(MatchUnit {
            mode,
            adain,
            w,
            neighborhood: nb,
            patch,
            fuse: Conv::declare(src, &format!("{name}.fuse"), ConvShape::pointwise(2 * c, c))?,
        })
    }

    fn match_maps(&self, x_ref: &Var, x_deg: &Var, w: &Var, nb: &Neighborhood) -> Result<(MatchResult, PatchGeometry)> {
        let (p_deg, geom) = unfold_patches(x_deg, self.patch.0, self.patch.1)?;
        let (p_ref, _) = unfold_patches(x_ref, self.patch.0, self.patch.1)?;
        let result = match self.mode {
            MatchMode::Gfm => global_match(&p_deg, &p_ref, nb.gh, nb.gw, w)?,
            _ => nbfm_match(&p_deg, &p_ref, nb, w)?,
        };
        Ok((result, geom))
    }

    /// Matches `x_deg` against `x_ref` as given, without AdaIN alignment.
    /// `None` when the unit does no matching.
    pub fn match_unaligned(&self, x_ref: &Var, x_deg: &Var) -> Result<Option<MatchResult>> {
        let (Some(w), Some(nb)) = (&self.w, &self.neighborhood) else {
            return Ok(None);
        };
        Ok(Some(self.match_maps(x_ref, x_deg, w, nb)?.0))
    }

    pub fn forward(&self, x_ref: &Var, x_deg: &Var) -> Result<MatchOutput> {
        let (Some(adain), Some(w), Some(nb)) = (&self.adain, &self.w, &self.neighborhood) else {
            let fused = self.fuse.forward(&Var::concat(&[x_ref, x_deg], 1)?)?;
            return Ok(MatchOutput {
                fused,
                matched_map: None,
                result: None,
            });
        };
        let aligned = adain.forward(x_ref, x_deg)?;
        let (result, geom) = self.match_maps(&aligned, x_deg, w, nb)?;
        let matched = fold_patches(&result.matched, &geom)?;
        let fused = self.fuse.forward(&Var::concat(&[&matched, x_deg], 1)?)?;
        Ok(MatchOutput {
            fused,
            matched_map: Some(matched),
            result: Some(result),
        })
    }
}
