use super::{check_problem, CostMatrix, DiscreteMeasure};
use crate::error::{Error, Result};

/// Outcome of an entropic OT solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    /// Transport cost `sum P .* C` of the entropic plan.
    pub value: f64,
    /// Row-major plan.
    pub plan: Vec<f64>,
    /// L1 violation of the source marginal after the last iteration.
    pub violation: f64,
    pub iterations: usize,
    pub converged: bool,
}

const TOL: f64 = 1e-9;

fn log_sum_exp(vals: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations for entropic OT with regularization
/// `epsilon`. Stops once the source marginal violation drops below 1e-9 or
/// after `max_iters`; non-convergence is reported through `converged`.
pub fn sinkhorn(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
    epsilon: f64,
    max_iters: usize,
) -> Result<SinkhornResult> {
    check_problem(mu, nu, cost)?;
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let (m, n) = (cost.rows(), cost.cols());
    let log_a: Vec<f64> = mu.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = nu.weights().iter().map(|w| w.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];

    let plan_entry =
        |f: &[f64], g: &[f64], i: usize, j: usize| ((f[i] + g[j] - cost.at(i, j)) / epsilon).exp();

    let mut violation = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        for i in 0..m {
            f[i] = if log_a[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                epsilon * (log_a[i] - log_sum_exp((0..n).map(|j| (g[j] - cost.at(i, j)) / epsilon)))
            };
        }
        for j in 0..n {
            g[j] = if log_b[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                epsilon * (log_b[j] - log_sum_exp((0..m).map(|i| (f[i] - cost.at(i, j)) / epsilon)))
            };
        }
        violation = (0..m)
            .map(|i| {
                let row: f64 = (0..n).map(|j| plan_entry(&f, &g, i, j)).sum();
                (row - mu.weights()[i]).abs()
            })
            .sum();
        if violation < TOL {
            break;
        }
    }

    let mut plan = Vec::with_capacity(m * n);
    let mut value = 0.0;
    for i in 0..m {
        for j in 0..n {
            let p = plan_entry(&f, &g, i, j);
            value += p * cost.at(i, j);
            plan.push(p);
        }
    }
    Ok(SinkhornResult {
        value,
        plan,
        violation,
        iterations,
        converged: violation < TOL,
    })
}
