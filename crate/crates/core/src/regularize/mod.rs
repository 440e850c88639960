//! Fine-tuning regularizers on the drift `Δr = r_ft - r_0`.
//!
//! Every loss returns its value and the gradient with respect to `r_ft`.
//! `r_0` and its code `s_0` are constants. Gradients through the SAE encoder
//! use the fixed-support rule: only the Top-K entries selected at `r_ft`
//! respond to perturbations, each with its encoder row as derivative.

mod baselines;
mod pca;
mod sae_losses;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::{SaeModel, SparseCode};

pub use baselines::{l1_reg, l2_reg};
pub use pca::{pca_fit, pca_reg, PcaBasis};
pub use sae_losses::{add_reg, resid_loss, sparse_reg, wass_reg};

/// Which regularizer is added to the task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegKind {
    None,
    L1,
    L2,
    #[serde(alias = "sae_sparse")]
    SaeSparse,
    #[serde(alias = "sae_add")]
    SaeAdd,
    #[serde(alias = "sae_wass")]
    SaeWass,
    Pca,
}

impl RegKind {
    pub const ALL: [RegKind; 7] = [
        RegKind::None,
        RegKind::L1,
        RegKind::L2,
        RegKind::SaeSparse,
        RegKind::SaeAdd,
        RegKind::SaeWass,
        RegKind::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RegKind::None => "none",
            RegKind::L1 => "l1",
            RegKind::L2 => "l2",
            RegKind::SaeSparse => "sae-sparse",
            RegKind::SaeAdd => "sae-add",
            RegKind::SaeWass => "sae-wass",
            RegKind::Pca => "pca",
        }
    }

    pub fn needs_sae(self) -> bool {
        matches!(self, RegKind::SaeSparse | RegKind::SaeAdd | RegKind::SaeWass)
    }
}

impl std::str::FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let canonical = s.replace('_', "-");
        RegKind::ALL
            .into_iter()
            .find(|k| k.name() == canonical)
            .ok_or_else(|| Error::Config(format!("unknown regularizer kind `{s}`")))
    }
}

impl std::fmt::Display for RegKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Regularizer selection and coefficients.
///
/// The total penalty is `scale * (lambda_resid * L_resid + lambda_kind * term)`
/// for the residual-based kinds and `scale * lambda_kind * term` for `l1`/`l2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSpec {
    pub kind: RegKind,
    #[serde(default = "one")]
    pub lambda_resid: f64,
    /// `lambda_sparse`, `lambda_add`, `lambda_wass`, or the l1/l2 weight.
    #[serde(default = "one")]
    pub lambda_kind: f64,
    /// Overall regularization scale.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl RegularizerSpec {
    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            lambda_resid: 0.0,
            lambda_kind: 0.0,
            scale: 0.0,
        }
    }

    pub fn new(kind: RegKind, lambda_resid: f64, lambda_kind: f64, scale: f64) -> Self {
        Self {
            kind,
            lambda_resid,
            lambda_kind,
            scale,
        }
    }
}

/// Penalty value, its gradient with respect to `r_ft`, and the two terms
/// before weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_rft: Vec<f64>,
    /// Unweighted residual term (zero for kinds without one).
    pub resid: f64,
    /// Unweighted kind-specific term.
    pub kind_term: f64,
}

impl LossValue {
    pub fn zero(d: usize) -> Self {
        Self {
            value: 0.0,
            grad_rft: vec![0.0; d],
            resid: 0.0,
            kind_term: 0.0,
        }
    }

    fn scaled(mut self, s: f64) -> Self {
        self.value *= s;
        self.grad_rft.iter_mut().for_each(|g| *g *= s);
        self
    }
}

/// Mask of features active in the zero-shot code: `m_k = 1` iff `s0_k != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    active: Vec<usize>,
}

impl FeatureMask {
    pub fn from_code(s0: &SparseCode) -> Self {
        Self {
            active: s0.iter().filter(|&(_, v)| v != 0.0).map(|(k, _)| k).collect(),
        }
    }

    pub fn get(&self, k: usize) -> u8 {
        u8::from(self.active.binary_search(&k).is_ok())
    }

    pub fn to_dense(&self, p: usize) -> Vec<u8> {
        (0..p).map(|k| self.get(k)).collect()
    }
}

pub(crate) fn check_lambdas(lambdas: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in lambdas {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A validated spec bound to the SAE / PCA artifacts it needs.
#[derive(Debug, Clone, Copy)]
pub struct Regularizer<'a> {
    spec: RegularizerSpec,
    sae: Option<&'a SaeModel>,
    pca: Option<&'a PcaBasis>,
}

impl<'a> Regularizer<'a> {
    pub fn new(
        spec: RegularizerSpec,
        sae: Option<&'a SaeModel>,
        pca: Option<&'a PcaBasis>,
    ) -> Result<Self> {
        check_lambdas(&[
            ("lambda_resid", spec.lambda_resid),
            ("lambda_kind", spec.lambda_kind),
            ("scale", spec.scale),
        ])?;
        if spec.kind.needs_sae() && sae.is_none() {
            return Err(Error::Config(format!(
                "regularizer `{}` requires an SAE",
                spec.kind
            )));
        }
        if spec.kind == RegKind::Pca && pca.is_none() {
            return Err(Error::Config("regularizer `pca` requires a PCA basis".into()));
        }
        Ok(Self { spec, sae, pca })
    }

    pub fn spec(&self) -> &RegularizerSpec {
        &self.spec
    }

    pub fn eval(&self, r0: &[f64], rft: &[f64]) -> Result<LossValue> {
        let s = &self.spec;
        let (lr, lk) = (s.lambda_resid, s.lambda_kind);
        let out = match s.kind {
            RegKind::None => return Ok(LossValue::zero(rft.len())),
            RegKind::L1 => l1_reg(r0, rft, lk)?,
            RegKind::L2 => l2_reg(r0, rft, lk)?,
            RegKind::SaeSparse => sparse_reg(r0, rft, self.sae.unwrap(), lr, lk)?,
            RegKind::SaeAdd => add_reg(r0, rft, self.sae.unwrap(), lr, lk)?,
            RegKind::SaeWass => wass_reg(r0, rft, self.sae.unwrap(), lr, lk)?,
            RegKind::Pca => pca_reg(r0, rft, self.pca.unwrap(), lr, lk)?,
        };
        Ok(out.scaled(s.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in RegKind::ALL {
            assert_eq!(k.name().parse::<RegKind>().unwrap(), k);
            assert_eq!(k.name().replace('-', "_").parse::<RegKind>().unwrap(), k);
        }
        assert!("sae add".parse::<RegKind>().is_err());
    }

    #[test]
    fn spec_requires_artifacts() {
        let spec = RegularizerSpec::new(RegKind::SaeAdd, 1.0, 1.0, 70.0);
        assert!(Regularizer::new(spec, None, None).is_err());
        let spec = RegularizerSpec::new(RegKind::Pca, 1.0, 1.0, 1.0);
        assert!(Regularizer::new(spec, None, None).is_err());
        let spec = RegularizerSpec::new(RegKind::L2, 1.0, -1.0, 1.0);
        assert!(Regularizer::new(spec, None, None).is_err());
    }

    #[test]
    fn scale_multiplies_whole_penalty() {
        let spec = RegularizerSpec::new(RegKind::L2, 0.0, 2.0, 3.0);
        let reg = Regularizer::new(spec, None, None).unwrap();
        let v = reg.eval(&[0.0, 0.0], &[1.0, -2.0]).unwrap();
        assert_eq!(v.value, 30.0);
        assert_eq!(v.grad_rft, vec![12.0, -24.0]);
    }

    #[test]
    fn mask_marks_nonzero_zero_shot_features() {
        let s0 = SparseCode::new(vec![1, 4, 6], vec![0.5, 0.0, -2.0]).unwrap();
        let m = FeatureMask::from_code(&s0);
        assert_eq!(m.to_dense(7), vec![0, 1, 0, 0, 0, 0, 1]);
    }
}
