//! Representation-drift and SAE feature statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::repr::{ClassEmbeddings, RepresentationSet};
use crate::sae::{SaeModel, SparseCode};

/// Codes of one dataset under one SAE; all entries share `p` and `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeSet {
    p: usize,
    k: usize,
    codes: Vec<SparseCode>,
}

impl CodeSet {
    pub fn new(p: usize, k: usize, codes: Vec<SparseCode>) -> Result<Self> {
        for (i, c) in codes.iter().enumerate() {
            if c.len() != k {
                return Err(Error::Dimension(format!(
                    "code {i} has {} actives, expected {k}",
                    c.len()
                )));
            }
            if c.indices().last().is_some_and(|&m| m >= p) {
                return Err(Error::Dimension(format!(
                    "code {i} has a feature id outside [0, {p})"
                )));
            }
        }
        Ok(Self { p, k, codes })
    }

    /// Encodes every row of `set`.
    pub fn encode(sae: &SaeModel, set: &RepresentationSet) -> Result<Self> {
        let codes = set
            .rows()
            .map(|r| sae.encode(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sae.p(), sae.k_active(), codes)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[SparseCode] {
        &self.codes
    }
}

/// One row of a drift table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cka: f64,
    pub fvu: f64,
    pub overlap: f64,
    pub entropy: f64,
    pub fta: f64,
}

fn centered(set: &RepresentationSet) -> DMatrix<f64> {
    let mut m = linalg::to_dmatrix(set.n(), set.d(), set.data());
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    m
}

/// Linear CKA, evaluated in feature space:
/// `||Yc^T Xc||_F^2 / (||Xc^T Xc||_F ||Yc^T Yc||_F)` with column-centered inputs.
pub fn linear_cka(x: &RepresentationSet, y: &RepresentationSet) -> Result<f64> {
    check_dim("CKA sample count", x.n(), y.n())?;
    if x.n() < 2 {
        return Err(Error::Data("CKA needs at least two samples".into()));
    }
    let xc = centered(x);
    let yc = centered(y);
    let xx = xc.transpose() * &xc;
    let yy = yc.transpose() * &yc;
    let denom = xx.norm() * yy.norm();
    if denom == 0.0 {
        return Err(Error::Data(
            "CKA input has zero variance after centering".into(),
        ));
    }
    let cross = (yc.transpose() * &xc).norm_squared();
    let value = cross / denom;
    Ok(if value > 1.0 && value <= 1.0 + 1e-9 {
        1.0
    } else {
        value
    })
}

/// Fraction of variance unexplained:
/// `sum_i ||x_i - xhat_i||^2 / sum_i ||x_i - mean||^2`.
pub fn fvu(x: &RepresentationSet, xhat: &RepresentationSet) -> Result<f64> {
    check_dim("FVU sample count", x.n(), xhat.n())?;
    check_dim("FVU width", x.d(), xhat.d())?;
    let d = x.d();
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        linalg::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= x.n() as f64);

    let mut resid = 0.0;
    let mut total = 0.0;
    for (a, b) in x.rows().zip(xhat.rows()) {
        for j in 0..d {
            resid += (a[j] - b[j]).powi(2);
            total += (a[j] - mean[j]).powi(2);
        }
    }
    if total == 0.0 {
        return Err(Error::Data("FVU undefined for zero-variance data".into()));
    }
    Ok(resid / total)
}

/// Denominator of the per-sample overlap ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapNorm {
    /// Number of active features `K`.
    #[default]
    K,
    /// Size of the union of both supports.
    Union,
}

/// Mean over samples of `|supp(a_i) ∩ supp(b_i)| / K`.
pub fn feature_overlap(a: &CodeSet, b: &CodeSet) -> Result<f64> {
    feature_overlap_with(a, b, OverlapNorm::K)
}

pub fn feature_overlap_with(a: &CodeSet, b: &CodeSet, norm: OverlapNorm) -> Result<f64> {
    check_dim("overlap sample count", a.len(), b.len())?;
    check_dim("overlap dictionary size", a.p, b.p)?;
    check_dim("overlap active count", a.k, b.k)?;
    if a.is_empty() {
        return Err(Error::Data("feature overlap of empty code sets".into()));
    }
    let total: f64 = a
        .codes
        .iter()
        .zip(&b.codes)
        .map(|(ca, cb)| {
            let inter = ca.intersection_len(cb) as f64;
            match norm {
                OverlapNorm::K => inter / a.k as f64,
                OverlapNorm::Union => {
                    let union = ca.union_with(cb).count();
                    if union == 0 {
                        1.0
                    } else {
                        inter / union as f64
                    }
                }
            }
        })
        .sum();
    Ok(total / a.len() as f64)
}

/// Shannon entropy (nats) of the dataset-level activation-mass distribution
/// `q_k = sum_i s_ik / sum_ik s_ik`.
pub fn feature_entropy(codes: &CodeSet) -> Result<f64> {
    let mut mass = vec![0.0; codes.p];
    for (i, c) in codes.codes.iter().enumerate() {
        for (k, v) in c.iter() {
            if v < 0.0 {
                return Err(Error::Data(format!(
                    "negative activation {v} for feature {k} in sample {i}"
                )));
            }
            mass[k] += v;
        }
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Data("feature entropy of zero total mass".into()));
    }
    Ok(mass
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|&m| {
            let q = m / total;
            -q * q.ln()
        })
        .sum())
}

/// Feature-task alignment: per sample the activation-weighted mean cosine
/// between active decoder directions and the true class embedding, averaged
/// over samples.
pub fn fta(
    codes: &CodeSet,
    sae: &SaeModel,
    class_embs: &ClassEmbeddings,
    labels: &[usize],
) -> Result<f64> {
    check_dim("FTA label count", codes.len(), labels.len())?;
    check_dim("FTA embedding width", sae.d(), class_embs.d())?;
    check_dim("FTA dictionary size", sae.p(), codes.p)?;
    if codes.is_empty() {
        return Err(Error::Data("FTA of empty code set".into()));
    }
    let mut total = 0.0;
    for (i, (c, &y)) in codes.codes.iter().zip(labels).enumerate() {
        if y >= class_embs.n_classes() {
            return Err(Error::Data(format!(
                "label {y} of sample {i} has no class embedding"
            )));
        }
        let class_dir = class_embs.row(y);
        let mut num = 0.0;
        let mut den = 0.0;
        for (k, v) in c.iter() {
            num += v * linalg::cosine(sae.decoder_column(k), class_dir);
            den += v;
        }
        if den == 0.0 {
            return Err(Error::Data(format!("sample {i} has zero total activation")));
        }
        total += num / den;
    }
    Ok(total / codes.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> RepresentationSet {
        RepresentationSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
            .unwrap()
    }

    fn code(idx: &[usize], vals: &[f64]) -> SparseCode {
        SparseCode::new(idx.to_vec(), vals.to_vec()).unwrap()
    }

    #[test]
    fn cka_of_self_is_one() {
        let x = set(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.0], &[-2.0, 1.0]]);
        assert!((linear_cka(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cka_rejects_degenerate_inputs() {
        let one = set(&[&[1.0, 2.0]]);
        assert!(linear_cka(&one, &one).is_err());
        let constant = set(&[&[1.0], &[1.0], &[1.0]]);
        let other = set(&[&[1.0], &[2.0], &[4.0]]);
        assert!(linear_cka(&constant, &other).is_err());
    }

    #[test]
    fn fvu_landmarks() {
        let x = set(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 5.0]]);
        assert_eq!(fvu(&x, &x).unwrap(), 0.0);
        let mean = set(&[&[4.0 / 3.0, 2.0], &[4.0 / 3.0, 2.0], &[4.0 / 3.0, 2.0]]);
        assert!((fvu(&x, &mean).unwrap() - 1.0).abs() < 1e-15);
        let flat = set(&[&[1.0], &[1.0]]);
        assert!(fvu(&flat, &flat).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a = CodeSet::new(10, 4, vec![code(&[0, 1, 2, 3], &[1.0; 4])]).unwrap();
        let b = CodeSet::new(10, 4, vec![code(&[2, 3, 7, 8], &[1.0; 4])]).unwrap();
        let c = CodeSet::new(10, 4, vec![code(&[4, 5, 6, 9], &[1.0; 4])]).unwrap();
        assert_eq!(feature_overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(feature_overlap(&a, &b).unwrap(), 0.5);
        assert_eq!(feature_overlap(&b, &a).unwrap(), 0.5);
        assert_eq!(feature_overlap(&a, &c).unwrap(), 0.0);
        let u = feature_overlap_with(&a, &b, OverlapNorm::Union).unwrap();
        assert!((u - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn overlap_shape_mismatch() {
        let a = CodeSet::new(10, 1, vec![code(&[0], &[1.0])]).unwrap();
        let b = CodeSet::new(11, 1, vec![code(&[0], &[1.0])]).unwrap();
        assert!(feature_overlap(&a, &b).is_err());
    }

    #[test]
    fn entropy_examples() {
        let single = CodeSet::new(5, 1, vec![code(&[2], &[3.0]), code(&[2], &[1.0])]).unwrap();
        assert_eq!(feature_entropy(&single).unwrap(), 0.0);

        let uniform = CodeSet::new(
            5,
            1,
            vec![code(&[0], &[2.0]), code(&[1], &[2.0]), code(&[4], &[2.0])],
        )
        .unwrap();
        assert!((feature_entropy(&uniform).unwrap() - 3f64.ln()).abs() < 1e-15);

        // masses 2, 1, 1 -> q = (0.5, 0.25, 0.25)
        let hand = CodeSet::new(4, 2, vec![code(&[0, 1], &[1.0, 1.0]), code(&[0, 3], &[1.0, 1.0])])
            .unwrap();
        let h = feature_entropy(&hand).unwrap();
        assert!((h - 1.5 * 2f64.ln()).abs() < 1e-15);
        assert!((h - 1.0397).abs() < 1e-4);

        let neg = CodeSet::new(4, 1, vec![code(&[0], &[-1.0])]).unwrap();
        assert!(feature_entropy(&neg).is_err());
    }

    fn axis_sae() -> SaeModel {
        // columns: e0, e1, (e0+e1)/sqrt2 in d=2
        let s = 0.5f64.sqrt();
        let cols = vec![1.0, 0.0, 0.0, 1.0, s, s];
        SaeModel::new(2, 3, 2, cols.clone(), cols, None).unwrap()
    }

    #[test]
    fn fta_examples() {
        let sae = axis_sae();
        let emb = ClassEmbeddings::normalized(1, 2, vec![1.0, 0.0]).unwrap();
        let orth = CodeSet::new(3, 1, vec![code(&[1], &[2.0])]).unwrap();
        assert_eq!(fta(&orth, &sae, &emb, &[0]).unwrap(), 0.0);
        let aligned = CodeSet::new(3, 1, vec![code(&[0], &[0.7])]).unwrap();
        assert_eq!(fta(&aligned, &sae, &emb, &[0]).unwrap(), 1.0);
        let zero = CodeSet::new(3, 1, vec![code(&[0], &[0.0])]).unwrap();
        assert!(fta(&zero, &sae, &emb, &[0]).is_err());
    }

    #[test]
    fn fta_weighted_mean() {
        // decoder columns with cosines 0.2 and 0.6 to the class direction e0
        let c0 = [0.2, (1.0f64 - 0.04).sqrt()];
        let c1 = [0.6, 0.8];
        let dec = vec![c0[0], c0[1], c1[0], c1[1], 0.0, 1.0];
        let sae = SaeModel::new(2, 3, 2, dec.clone(), dec, None).unwrap();
        let emb = ClassEmbeddings::normalized(1, 2, vec![1.0, 0.0]).unwrap();
        let codes = CodeSet::new(3, 2, vec![code(&[0, 1], &[1.0, 3.0])]).unwrap();
        let v = fta(&codes, &sae, &emb, &[0]).unwrap();
        assert!((v - 0.5).abs() < 1e-15, "{v}");
    }
}
