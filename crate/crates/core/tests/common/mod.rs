//! Independent oracles shared by the integration suites.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use saeft_core::sae::{init_sae, SaeModel};
use saeft_core::RepresentationSet;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RepresentationSet {
    RepresentationSet::new(n, d, gaussian(rng, n * d)).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central-difference gradient of `f` at `x`.
///
/// Also reports whether the function looks smooth along every coordinate:
/// the forward and backward slopes must agree up to the curvature a smooth
/// function of this scale could produce. A kink between `x - h` and `x + h`
/// (a support switch, a ReLU crossing, a change of optimal basis) breaks
/// the agreement.
pub struct FdResult {
    pub grad: Vec<f64>,
    pub smooth: bool,
}

pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> FdResult {
    let f0 = f(x);
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let mut smooth = true;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        let central = (fp - fm) / (2.0 * h);
        let fwd = (fp - f0) / h;
        let bwd = (f0 - fm) / h;
        if (fwd - bwd).abs() > 1e-3 * (1.0 + central.abs()) {
            smooth = false;
        }
        grad.push(central);
    }
    FdResult { grad, smooth }
}

/// SAE with independent random encoder and decoder, optionally biased.
pub fn random_sae(d: usize, p: usize, k: usize, bias: bool, seed: u64) -> SaeModel {
    let mut r = rng(seed ^ 0x5ae);
    let base = init_sae(d, p, k, seed).unwrap();
    let encoder: Vec<f64> = base
        .encoder()
        .iter()
        .map(|w| w + 0.3 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let bias = bias.then(|| gaussian(&mut r, d).iter().map(|v| 0.1 * v).collect());
    SaeModel::new(d, p, k, encoder, base.decoder_columns().to_vec(), bias).unwrap()
}

/// Exact W1 between two small probability vectors by enumerating every
/// vertex of the transportation polytope.
///
/// A vertex is determined by a spanning tree of the bipartite row/column
/// graph with `m + n - 1` edges; flows on a tree are forced by peeling
/// leaves. Only nonnegative solutions are feasible.
pub fn w1_by_vertex_enumeration(a: &[f64], b: &[f64], cost: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(need);
    combos(&cells, need, 0, &mut chosen, &mut |subset| {
        if let Some(flow) = tree_flows(m, n, subset, a, b) {
            if flow.iter().all(|&q| q >= -1e-12) {
                let c: f64 = subset
                    .iter()
                    .zip(&flow)
                    .map(|(&(i, j), q)| q * cost[i * n + j])
                    .sum();
                best = best.min(c);
            }
        }
    });
    best
}

fn combos(
    cells: &[(usize, usize)],
    need: usize,
    start: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    for idx in start..cells.len() {
        if cells.len() - idx < need - chosen.len() {
            break;
        }
        chosen.push(cells[idx]);
        combos(cells, need, idx + 1, chosen, visit);
        chosen.pop();
    }
}

/// Flows on the tree `subset`, or `None` when it has a cycle.
fn tree_flows(m: usize, n: usize, subset: &[(usize, usize)], a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let nodes = m + n;
    let mut degree = vec![0usize; nodes];
    for &(i, j) in subset {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    let mut supply: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut flow = vec![f64::NAN; subset.len()];
    let mut used = vec![false; subset.len()];
    for _ in 0..subset.len() {
        // find a leaf edge
        let (e, leaf) = subset.iter().enumerate().find_map(|(e, &(i, j))| {
            if used[e] {
                return None;
            }
            if degree[i] == 1 {
                Some((e, i))
            } else if degree[m + j] == 1 {
                Some((e, m + j))
            } else {
                None
            }
        })?;
        let (i, j) = subset[e];
        let other = if leaf == i { m + j } else { i };
        let q = supply[leaf];
        flow[e] = q;
        used[e] = true;
        supply[leaf] = 0.0;
        supply[other] -= q;
        degree[i] -= 1;
        degree[m + j] -= 1;
    }
    if supply.iter().any(|s| s.abs() > 1e-9) {
        return None;
    }
    Some(flow)
}

/// Linear CKA through centered Gram matrices (HSIC form).
pub fn cka_gram(x: &RepresentationSet, y: &RepresentationSet) -> f64 {
    let n = x.n();
    let gram = |s: &RepresentationSet| {
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = s.row(i).iter().zip(s.row(j)).map(|(a, b)| a * b).sum();
            }
        }
        // H K H with H = I - 11^T / n
        let row_mean: Vec<f64> = (0..n).map(|i| k[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
        let total = row_mean.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] += total - row_mean[i] - row_mean[j];
            }
        }
        k
    };
    let kx = gram(x);
    let ky = gram(y);
    let hsic = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    hsic(&kx, &ky) / (hsic(&kx, &kx) * hsic(&ky, &ky)).sqrt()
}

/// Mean over true columns of the best cosine against any learned column.
pub fn mean_max_cosine(truth: &[Vec<f64>], sae: &SaeModel) -> f64 {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    truth
        .iter()
        .map(|t| {
            (0..sae.p())
                .map(|k| cos(t, sae.decoder_column(k)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / truth.len() as f64
}
