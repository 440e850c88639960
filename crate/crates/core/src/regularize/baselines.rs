use super::{check_lambdas, sign, LossValue};
use crate::error::{check_dim, Result};

/// `lambda * ||Δr||_1`, subgradient `lambda * sign(Δr)` with `sign(0) = 0`.
pub fn l1_reg(r0: &[f64], rft: &[f64], lambda: f64) -> Result<LossValue> {
    check_dim("l1 representation width", r0.len(), rft.len())?;
    check_lambdas(&[("lambda", lambda)])?;
    let mut term = 0.0;
    let grad_rft = r0
        .iter()
        .zip(rft)
        .map(|(a, b)| {
            let delta = b - a;
            term += delta.abs();
            lambda * sign(delta)
        })
        .collect();
    Ok(LossValue {
        value: lambda * term,
        grad_rft,
        resid: 0.0,
        kind_term: term,
    })
}

/// `lambda * ||Δr||_2^2` with gradient `2 lambda Δr`.
pub fn l2_reg(r0: &[f64], rft: &[f64], lambda: f64) -> Result<LossValue> {
    check_dim("l2 representation width", r0.len(), rft.len())?;
    check_lambdas(&[("lambda", lambda)])?;
    let mut term = 0.0;
    let grad_rft = r0
        .iter()
        .zip(rft)
        .map(|(a, b)| {
            let delta = b - a;
            term += delta * delta;
            2.0 * lambda * delta
        })
        .collect();
    Ok(LossValue {
        value: lambda * term,
        grad_rft,
        resid: 0.0,
        kind_term: term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_drift() {
        for f in [l1_reg, l2_reg] {
            let v = f(&[1.0, 2.0], &[1.0, 2.0], 3.0).unwrap();
            assert_eq!(v.value, 0.0);
            assert_eq!(v.grad_rft, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn hand_values() {
        let r0 = [0.0, 0.0];
        let rft = [1.0, -2.0];
        assert_eq!(l1_reg(&r0, &rft, 1.0).unwrap().value, 3.0);
        assert_eq!(l2_reg(&r0, &rft, 1.0).unwrap().value, 5.0);
        assert_eq!(l1_reg(&r0, &rft, 1.0).unwrap().grad_rft, vec![1.0, -1.0]);
        assert_eq!(l2_reg(&r0, &rft, 1.0).unwrap().grad_rft, vec![2.0, -4.0]);
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(l1_reg(&[0.0], &[1.0], -1.0).is_err());
        assert!(l2_reg(&[0.0], &[1.0], -0.5).is_err());
    }
}
