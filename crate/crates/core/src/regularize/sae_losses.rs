//! Residual, sparse, feature-addition and Wasserstein losses on SAE codes.

use super::{check_lambdas, sign, FeatureMask, LossValue};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::ot::{exact_w1, CostMatrix, DiscreteMeasure};
use crate::sae::{SaeModel, SparseCode};

struct Codes {
    s0: SparseCode,
    sft: SparseCode,
}

fn encode_pair(sae: &SaeModel, r0: &[f64], rft: &[f64]) -> Result<Codes> {
    check_dim("zero-shot representation width", sae.d(), r0.len())?;
    check_dim("fine-tuned representation width", sae.d(), rft.len())?;
    Ok(Codes {
        s0: sae.encode(r0)?,
        sft: sae.encode(rft)?,
    })
}

/// Residual term `||Δr - W_d Δs||^2`.
///
/// Returns the value, the direct gradient `2u` and the gradient with respect
/// to the values of `s_ft` (aligned with its support).
fn resid_parts(
    sae: &SaeModel,
    codes: &Codes,
    r0: &[f64],
    rft: &[f64],
) -> (f64, Vec<f64>, Vec<f64>) {
    let explained = sae.decode_linear(codes.sft.union_with(&codes.s0).map(|(k, a, b)| (k, a - b)));
    let u: Vec<f64> = rft
        .iter()
        .zip(r0)
        .zip(&explained)
        .map(|((f, z), e)| f - z - e)
        .collect();
    let value = linalg::dot(&u, &u);
    let grad_s = codes
        .sft
        .indices()
        .iter()
        .map(|&k| -2.0 * linalg::dot(sae.decoder_column(k), &u))
        .collect();
    let direct = u.iter().map(|v| 2.0 * v).collect();
    (value, direct, grad_s)
}

/// Combines `lambda_resid * resid + lambda_kind * term` into a [`LossValue`].
#[allow(clippy::too_many_arguments)]
fn combine(
    sae: &SaeModel,
    codes: &Codes,
    r0: &[f64],
    rft: &[f64],
    lambda_resid: f64,
    lambda_kind: f64,
    term: f64,
    term_grad_s: &[f64],
) -> LossValue {
    let (resid, mut grad, resid_grad_s) = resid_parts(sae, codes, r0, rft);
    grad.iter_mut().for_each(|g| *g *= lambda_resid);
    let grad_s: Vec<f64> = resid_grad_s
        .iter()
        .zip(term_grad_s)
        .map(|(a, b)| lambda_resid * a + lambda_kind * b)
        .collect();
    sae.encode_vjp(&codes.sft, &grad_s, &mut grad);
    LossValue {
        value: lambda_resid * resid + lambda_kind * term,
        grad_rft: grad,
        resid,
        kind_term: term,
    }
}

/// `L_resid = ||Δr - W_d(Δs)||^2`, with `Δs = encode(r_ft) - encode(r_0)` over
/// the union of both supports.
pub fn resid_loss(r0: &[f64], rft: &[f64], sae: &SaeModel) -> Result<LossValue> {
    let codes = encode_pair(sae, r0, rft)?;
    let zeros = vec![0.0; codes.sft.len()];
    Ok(combine(sae, &codes, r0, rft, 1.0, 0.0, 0.0, &zeros))
}

/// `lambda_resid * L_resid + lambda_sparse * ||Δs||_1`.
pub fn sparse_reg(
    r0: &[f64],
    rft: &[f64],
    sae: &SaeModel,
    lambda_resid: f64,
    lambda_sparse: f64,
) -> Result<LossValue> {
    check_lambdas(&[("lambda_resid", lambda_resid), ("lambda_sparse", lambda_sparse)])?;
    let codes = encode_pair(sae, r0, rft)?;
    let term: f64 = codes
        .sft
        .union_with(&codes.s0)
        .map(|(_, a, b)| (a - b).abs())
        .sum();
    let grad_s: Vec<f64> = codes
        .sft
        .iter()
        .map(|(k, v)| sign(v - codes.s0.get(k)))
        .collect();
    Ok(combine(sae, &codes, r0, rft, lambda_resid, lambda_sparse, term, &grad_s))
}

/// `lambda_resid * L_resid + lambda_add * (1/p) * sum_k (1 - m_k) |s_ft_k|`
/// where `m_k` marks features active in the zero-shot code.
pub fn add_reg(
    r0: &[f64],
    rft: &[f64],
    sae: &SaeModel,
    lambda_resid: f64,
    lambda_add: f64,
) -> Result<LossValue> {
    check_lambdas(&[("lambda_resid", lambda_resid), ("lambda_add", lambda_add)])?;
    let codes = encode_pair(sae, r0, rft)?;
    let mask = FeatureMask::from_code(&codes.s0);
    let inv_p = 1.0 / sae.p() as f64;
    let mut term = 0.0;
    let grad_s: Vec<f64> = codes
        .sft
        .iter()
        .map(|(k, v)| {
            if mask.get(k) == 1 {
                0.0
            } else {
                term += v.abs();
                sign(v) * inv_p
            }
        })
        .collect();
    term *= inv_p;
    Ok(combine(sae, &codes, r0, rft, lambda_resid, lambda_add, term, &grad_s))
}

fn code_measure(code: &SparseCode, which: &str) -> Result<DiscreteMeasure> {
    if let Some((k, v)) = code.iter().find(|&(_, v)| v < 0.0) {
        return Err(Error::Measure(format!(
            "{which} code has negative activation {v} at feature {k}"
        )));
    }
    DiscreteMeasure::from_masses(code.indices().to_vec(), code.values())
        .map_err(|e| Error::Measure(format!("{which} code: {e}")))
}

/// `lambda_resid * L_resid + lambda_wass * W1(nu_0, nu_ft; C)` where the
/// measures put mass `s_k / sum(s)` on the active features and
/// `C_ij = 1 - cos(W_d^i, W_d^j)`.
///
/// The gradient of W1 with respect to the target weights is the optimal
/// target potential (plan held fixed), chained through the normalization.
pub fn wass_reg(
    r0: &[f64],
    rft: &[f64],
    sae: &SaeModel,
    lambda_resid: f64,
    lambda_wass: f64,
) -> Result<LossValue> {
    check_lambdas(&[("lambda_resid", lambda_resid), ("lambda_wass", lambda_wass)])?;
    let codes = encode_pair(sae, r0, rft)?;
    let nu0 = code_measure(&codes.s0, "zero-shot")?;
    let nuft = code_measure(&codes.sft, "fine-tuned")?;

    let (term, grad_s) = if codes.s0 == codes.sft {
        // Minimum of W1; zero is a valid subgradient.
        (0.0, vec![0.0; codes.sft.len()])
    } else {
        let cost = CostMatrix::from_fn(nu0.len(), nuft.len(), |i, j| {
            1.0 - linalg::cosine(
                sae.decoder_column(nu0.atoms()[i]),
                sae.decoder_column(nuft.atoms()[j]),
            )
        })?;
        let sol = exact_w1(&nu0, &nuft, &cost)?;
        let mass: f64 = codes.sft.values().iter().sum();
        let mean_g: f64 = sol
            .g
            .iter()
            .zip(nuft.weights())
            .map(|(g, w)| g * w)
            .sum();
        let grad = sol.g.iter().map(|g| (g - mean_g) / mass).collect();
        (sol.value, grad)
    };
    Ok(combine(sae, &codes, r0, rft, lambda_resid, lambda_wass, term, &grad_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_sae(d: usize) -> SaeModel {
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        SaeModel::new_unchecked_width(d, d, d, eye.clone(), eye, None).unwrap()
    }

    /// d = 2, p = 4, K = 1; encoder rows pick out single features.
    fn selector_sae() -> SaeModel {
        let s = 0.5f64.sqrt();
        let dec = vec![1.0, 0.0, 0.0, 1.0, s, s, s, -s];
        SaeModel::new(2, 4, 1, dec.clone(), dec, None).unwrap()
    }

    #[test]
    fn zero_drift_is_zero_for_every_sae_loss() {
        let sae = selector_sae();
        let r = [0.3, 0.9];
        let losses = [
            resid_loss(&r, &r, &sae).unwrap(),
            sparse_reg(&r, &r, &sae, 1.0, 1.0).unwrap(),
            add_reg(&r, &r, &sae, 1.0, 1.0).unwrap(),
            wass_reg(&r, &r, &sae, 1.0, 1.0).unwrap(),
        ];
        for l in losses {
            assert_eq!(l.value, 0.0);
            assert!(l.grad_rft.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn identity_dictionary_explains_everything() {
        let sae = identity_sae(3);
        let v = resid_loss(&[0.1, -0.4, 2.0], &[1.0, 0.5, -3.0], &sae).unwrap();
        assert!(v.value.abs() < 1e-24);
    }

    #[test]
    fn sparse_term_hand_value() {
        // feature 0 active in both codes: value 2 at r0, 5 at rft
        let sae = selector_sae();
        let v = sparse_reg(&[2.0, 0.0], &[5.0, 0.0], &sae, 0.0, 1.0).unwrap();
        assert!((v.value - 3.0).abs() < 1e-12);
    }

    #[test]
    fn add_term_hand_value() {
        // p = 4, K = 2 identity-like encoder; s0 on {0, 1}, s_ft adds feature 2
        let d = 4;
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        let sae = SaeModel::new_unchecked_width(d, d, 2, eye.clone(), eye, None).unwrap();
        let r0 = [1.0, 1.0, 0.0, 0.0];
        let rft = [1.0, 0.0, 0.5, 0.0];
        let v = add_reg(&r0, &rft, &sae, 0.0, 1.0).unwrap();
        assert!((v.value - 0.125).abs() < 1e-15);
        // support kept -> addition term vanishes
        let v = add_reg(&r0, &[2.0, 0.7, 0.1, 0.0], &sae, 0.0, 1.0).unwrap();
        assert_eq!(v.kind_term, 0.0);
    }

    #[test]
    fn wass_point_masses() {
        let sae = selector_sae();
        // r0 selects feature 0, rft selects feature 2
        let v = wass_reg(&[1.0, 0.0], &[1.0, 1.0], &sae, 0.0, 1.0).unwrap();
        let cos = linalg::cosine(sae.decoder_column(0), sae.decoder_column(2));
        let code = sae.encode(&[1.0, 1.0]).unwrap();
        assert_eq!(code.indices(), &[2]);
        assert!((v.kind_term - (1.0 - cos)).abs() < 1e-15);
    }

    #[test]
    fn wass_rejects_negative_activation() {
        let sae = selector_sae();
        let err = wass_reg(&[-1.0, -0.5], &[1.0, 0.0], &sae, 0.0, 1.0).unwrap_err();
        assert!(matches!(err, Error::Measure(_)), "{err}");
    }

    #[test]
    fn negative_lambdas_rejected() {
        let sae = selector_sae();
        assert!(sparse_reg(&[1.0, 0.0], &[1.0, 0.0], &sae, -1.0, 0.0).is_err());
        assert!(add_reg(&[1.0, 0.0], &[1.0, 0.0], &sae, 0.0, -1.0).is_err());
        assert!(wass_reg(&[1.0, 0.0], &[1.0, 0.0], &sae, 0.0, -1.0).is_err());
    }
}
