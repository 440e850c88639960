//! Cosine-style linear classifier and softmax cross-entropy.

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::repr::ClassEmbeddings;

pub const DEFAULT_TAU: f64 = 100.0;

/// `logits = tau * W r / ||r||`, `W` stored `n_classes x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    n_classes: usize,
    d: usize,
    weight: Vec<f64>,
    tau: f64,
}

impl LinearHead {
    pub fn new(n_classes: usize, d: usize, weight: Vec<f64>, tau: f64) -> Result<Self> {
        if n_classes == 0 || d == 0 {
            return Err(Error::Dimension("head needs n_classes, d >= 1".into()));
        }
        check_dim("head weight size", n_classes * d, weight.len())?;
        if !linalg::all_finite(&weight) {
            return Err(Error::Data("non-finite head weight".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("logit scale must be > 0, got {tau}")));
        }
        Ok(Self {
            n_classes,
            d,
            weight,
            tau,
        })
    }

    pub fn from_class_embeddings(emb: &ClassEmbeddings, tau: f64) -> Result<Self> {
        Self::new(emb.n_classes(), emb.d(), emb.matrix().to_vec(), tau)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weight[k * self.d..(k + 1) * self.d]
    }

    pub(crate) fn weight_mut(&mut self) -> &mut [f64] {
        &mut self.weight
    }

    /// Gradients of `grad_logits . logits(r)` with respect to `W` and `r`.
    pub fn backward(&self, r: &[f64], grad_logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("head input", self.d, r.len())?;
        check_dim("logit gradient", self.n_classes, grad_logits.len())?;
        let norm = nonzero_norm(r)?;
        let u: Vec<f64> = r.iter().map(|v| v / norm).collect();

        let mut grad_w = vec![0.0; self.weight.len()];
        // a = tau * W^T g, gradient wrt u
        let mut a = vec![0.0; self.d];
        for (k, &g) in grad_logits.iter().enumerate() {
            linalg::axpy(self.tau * g, &u, &mut grad_w[k * self.d..(k + 1) * self.d]);
            linalg::axpy(self.tau * g, self.row(k), &mut a);
        }
        // d(r/|r|)/dr = (I - u u^T) / |r|
        let au = linalg::dot(&a, &u);
        let grad_r = a.iter().zip(&u).map(|(ai, ui)| (ai - au * ui) / norm).collect();
        Ok((grad_w, grad_r))
    }

    /// Argmax class, ties to the lower id.
    pub fn predict(&self, r: &[f64]) -> Result<usize> {
        let logits = zero_shot_logits(self, r)?;
        Ok(argmax(&logits))
    }
}

fn nonzero_norm(r: &[f64]) -> Result<f64> {
    let norm = linalg::norm(r);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "representation norm is {norm}; logits need a nonzero finite norm"
        )));
    }
    Ok(norm)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `tau * W (r / ||r||)`.
pub fn zero_shot_logits(head: &LinearHead, r: &[f64]) -> Result<Vec<f64>> {
    check_dim("head input", head.d, r.len())?;
    let norm = nonzero_norm(r)?;
    Ok(head
        .weight
        .chunks_exact(head.d)
        .map(|row| head.tau * linalg::dot(row, r) / norm)
        .collect())
}

/// Softmax cross-entropy with max subtraction; gradient `softmax - onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Data(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let value = z.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    Ok((value, grad))
}
