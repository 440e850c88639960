use nalgebra::SymmetricEigen;

use super::{check_lambdas, sign, LossValue};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::repr::RepresentationSet;

/// Top principal directions of a representation set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    d: usize,
    k: usize,
    /// Component `c` occupies `components[c*d..(c+1)*d]`; these are the
    /// columns of `V_k`.
    components: Vec<f64>,
    mean: Vec<f64>,
    /// Variance along each component, non-increasing.
    explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c * self.d..(c + 1) * self.d]
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Latent coordinates `x V_k`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k).map(|c| linalg::dot(self.component(c), x)).collect()
    }

    /// `z V_k^T`.
    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (c, &zc) in z.iter().enumerate() {
            linalg::axpy(zc, self.component(c), &mut out);
        }
        out
    }
}

/// Fits the top `k` right singular vectors of the centered data through the
/// eigendecomposition of the `d x d` covariance. Each component's
/// largest-magnitude entry is made positive.
pub fn pca_fit(set: &RepresentationSet, k: usize) -> Result<PcaBasis> {
    let (n, d) = (set.n(), set.d());
    if k == 0 || k > n.min(d) {
        return Err(Error::Config(format!(
            "PCA component count {k} must lie in [1, min(n={n}, d={d})]"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in set.rows() {
        linalg::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centered = linalg::to_dmatrix(n, d, set.data());
    for mut row in centered.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.transpose() * &centered / denom;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.extend_from_slice(&v);
        explained_variance.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(PcaBasis {
        d,
        k,
        components,
        mean,
        explained_variance,
    })
}

/// `lambda_resid * ||Δr - Δs V_k^T||^2 + lambda_sparse * ||Δs||_1` with
/// `Δs = Δr V_k`.
pub fn pca_reg(
    r0: &[f64],
    rft: &[f64],
    basis: &PcaBasis,
    lambda_resid: f64,
    lambda_sparse: f64,
) -> Result<LossValue> {
    check_lambdas(&[("lambda_resid", lambda_resid), ("lambda_sparse", lambda_sparse)])?;
    check_dim("PCA zero-shot width", basis.d, r0.len())?;
    check_dim("PCA fine-tuned width", basis.d, rft.len())?;
    let delta_r: Vec<f64> = rft.iter().zip(r0).map(|(a, b)| a - b).collect();
    let delta_s = basis.project(&delta_r);
    let lifted = basis.lift(&delta_s);
    let u: Vec<f64> = delta_r.iter().zip(&lifted).map(|(a, b)| a - b).collect();
    let resid = linalg::dot(&u, &u);
    let sparse: f64 = delta_s.iter().map(|v| v.abs()).sum();

    // d/dΔr ||(I - V V^T) Δr||^2 = 2 (I - V V^T)^T u
    let mut grad: Vec<f64> = u.iter().map(|v| 2.0 * lambda_resid * v).collect();
    let back = basis.lift(&basis.project(&u));
    linalg::axpy(-2.0 * lambda_resid, &back, &mut grad);
    let signs: Vec<f64> = delta_s.iter().map(|&v| sign(v)).collect();
    linalg::axpy(lambda_sparse, &basis.lift(&signs), &mut grad);

    Ok(LossValue {
        value: lambda_resid * resid + lambda_sparse * sparse,
        grad_rft: grad,
        resid,
        kind_term: sparse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, d: usize, seed: u64) -> RepresentationSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        RepresentationSet::new(n, d, data).unwrap()
    }

    #[test]
    fn components_are_orthonormal() {
        let basis = pca_fit(&random_set(50, 6, 1), 4).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let g = linalg::dot(basis.component(a), basis.component(b));
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn planar_data_is_reconstructed_exactly() {
        // rows in span{(1,1,0), (0,1,-1)} plus a constant offset
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let (a, b): (f64, f64) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                vec![a + 0.5, a + b + 0.5, -b + 0.5]
            })
            .collect();
        let set = RepresentationSet::from_rows(&rows).unwrap();
        let basis = pca_fit(&set, 2).unwrap();
        for row in set.rows() {
            let c: Vec<f64> = row.iter().zip(basis.mean()).map(|(x, m)| x - m).collect();
            let rec = basis.lift(&basis.project(&c));
            for (a, b) in rec.iter().zip(&c) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sign_convention_and_ordering() {
        let basis = pca_fit(&random_set(40, 5, 9), 5).unwrap();
        for c in 0..5 {
            let comp = basis.component(c);
            let pivot = comp.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            assert!(pivot > 0.0);
        }
        let ev = basis.explained_variance();
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_basis_has_no_residual() {
        let basis = pca_fit(&random_set(40, 4, 2), 4).unwrap();
        let v = pca_reg(&[0.1, 0.2, 0.3, 0.4], &[1.0, -1.0, 0.5, 2.0], &basis, 1.0, 0.0).unwrap();
        assert!(v.resid < 1e-20);
        let z = pca_reg(&[0.1, 0.2, 0.3, 0.4], &[0.1, 0.2, 0.3, 0.4], &basis, 1.0, 1.0).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn too_many_components_rejected() {
        assert!(pca_fit(&random_set(3, 5, 0), 4).is_err());
        assert!(pca_fit(&random_set(10, 5, 0), 6).is_err());
    }
}
