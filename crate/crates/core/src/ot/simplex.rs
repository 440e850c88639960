//! Transportation simplex: north-west-corner start, Bland's rule pivoting.

use std::collections::VecDeque;

use super::{check_problem, CostMatrix, DiscreteMeasure, TransportSolution, MAX_ATOMS};
use crate::error::{Error, Result};

const MAX_PIVOTS: usize = 1_000_000;

struct Basis {
    m: usize,
    n: usize,
    flow: Vec<f64>,
    basic: Vec<bool>,
    cells: Vec<(usize, usize)>,
}

impl Basis {
    fn north_west(a: &[f64], b: &[f64]) -> Self {
        let (m, n) = (a.len(), b.len());
        let mut flow = vec![0.0; m * n];
        let mut basic = vec![false; m * n];
        let mut cells = Vec::with_capacity(m + n - 1);
        let mut ra = a.to_vec();
        let mut rb = b.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let last = i == m - 1 && j == n - 1;
            let q = if last { ra[i] } else { ra[i].min(rb[j]) };
            flow[i * n + j] = q;
            basic[i * n + j] = true;
            cells.push((i, j));
            if last {
                break;
            }
            let row_done = ra[i] <= rb[j];
            ra[i] -= q;
            rb[j] -= q;
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || row_done {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(cells.len(), m + n - 1);
        Self {
            m,
            n,
            flow,
            basic,
            cells,
        }
    }

    /// Tree adjacency over nodes `0..m` (rows) and `m..m+n` (columns); edges
    /// carry the index into `cells`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (e, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, e));
            adj[self.m + j].push((i, e));
        }
        adj
    }

    /// Potentials with `u_0 = 0` and `u_i + v_j = C_ij` on basic cells.
    fn potentials(&self, cost: &CostMatrix, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        let mut queue = VecDeque::from([0usize]);
        pot[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &(next, e) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.cells[e];
                    pot[next] = cost.at(i, j) - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Tree path from column node `m + j` to row node `i`, as cell indices.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let nodes = self.m + self.n;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nodes];
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(node) = queue.pop_front() {
            for &(next, e) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, e));
                    queue.push_back(next);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = self.m + j;
        while node != i {
            let (p, e) = parent[node].expect("basis is a spanning tree");
            out.push(e);
            node = p;
        }
        out
    }
}

/// Exact optimal transport between `mu` and `nu` under `cost`.
pub fn exact_w1(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &CostMatrix,
) -> Result<TransportSolution> {
    check_problem(mu, nu, cost)?;
    if mu.len() > MAX_ATOMS || nu.len() > MAX_ATOMS {
        return Err(Error::Measure(format!(
            "supports of {} and {} atoms exceed the limit of {MAX_ATOMS}",
            mu.len(),
            nu.len()
        )));
    }
    let (m, n) = (mu.len(), nu.len());
    let scale = (0..m * n)
        .map(|c| cost.at(c / n, c % n).abs())
        .fold(1.0f64, f64::max);
    let tol = 1e-12 * scale;

    let mut basis = Basis::north_west(mu.weights(), nu.weights());
    for _ in 0..MAX_PIVOTS {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(cost, &adj);

        // Bland: first nonbasic cell (row-major) with negative reduced cost.
        let entering = (0..m * n).find(|&c| {
            let (i, j) = (c / n, c % n);
            !basis.basic[c] && cost.at(i, j) - u[i] - v[j] < -tol
        });
        let Some(cell) = entering else {
            let value = (0..m * n)
                .map(|c| basis.flow[c] * cost.at(c / n, c % n))
                .sum();
            return Ok(TransportSolution {
                rows: m,
                cols: n,
                plan: basis.flow,
                value,
                f: u,
                g: v,
            });
        };
        let (ie, je) = (cell / n, cell % n);

        // Cells on the cycle alternate -, +, -, ... starting next to the
        // entering cell.
        let path = basis.path(&adj, ie, je);
        let leaving_pos = path
            .iter()
            .enumerate()
            .filter(|(pos, _)| pos % 2 == 0)
            .map(|(pos, &e)| {
                let (i, j) = basis.cells[e];
                (pos, basis.flow[i * n + j], i * n + j)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
            .map(|(pos, _, _)| pos)
            .expect("cycle has a decreasing cell");
        let (li, lj) = basis.cells[path[leaving_pos]];
        let theta = basis.flow[li * n + lj];

        for (pos, &e) in path.iter().enumerate() {
            let (i, j) = basis.cells[e];
            let f = &mut basis.flow[i * n + j];
            if pos % 2 == 0 {
                *f = (*f - theta).max(0.0);
            } else {
                *f += theta;
            }
        }
        basis.flow[li * n + lj] = 0.0;
        basis.flow[cell] = theta;
        basis.basic[li * n + lj] = false;
        basis.basic[cell] = true;
        let e = path[leaving_pos];
        basis.cells[e] = (ie, je);
    }
    Err(Error::Numerical(format!(
        "transportation simplex did not converge within {MAX_PIVOTS} pivots"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measure(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_weights(w.to_vec()).unwrap()
    }

    #[test]
    fn identical_measures_zero_diagonal() {
        let mu = measure(&[0.2, 0.3, 0.5]);
        let c = CostMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 + i as f64 }).unwrap();
        let sol = exact_w1(&mu, &mu, &c).unwrap();
        assert!(sol.value.abs() < 1e-15);
    }

    #[test]
    fn point_masses() {
        let c = CostMatrix::new(1, 1, vec![0.37]).unwrap();
        let sol = exact_w1(&measure(&[1.0]), &measure(&[1.0]), &c).unwrap();
        assert_eq!(sol.value, 0.37);
    }

    #[test]
    fn two_by_two_diagonal_and_antidiagonal() {
        let half = measure(&[0.5, 0.5]);
        let diag = CostMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let anti = CostMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        // feasible plans: [[t, .5-t], [.5-t, t]], t in [0, .5]
        let brute = |c: &CostMatrix| {
            (0..=1000)
                .map(|s| {
                    let t = 0.5 * s as f64 / 1000.0;
                    t * c.at(0, 0) + (0.5 - t) * (c.at(0, 1) + c.at(1, 0)) + t * c.at(1, 1)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let s1 = exact_w1(&half, &half, &diag).unwrap();
        let s2 = exact_w1(&half, &half, &anti).unwrap();
        assert!((s1.value - brute(&diag)).abs() < 1e-12 && s1.value.abs() < 1e-15);
        assert!((s2.value - brute(&anti)).abs() < 1e-12 && s2.value.abs() < 1e-15);
        assert_eq!(s2.plan_at(0, 1), 0.5);
    }

    #[test]
    fn marginals_and_slackness() {
        let mu = measure(&[0.1, 0.4, 0.2, 0.3]);
        let nu = measure(&[0.25, 0.25, 0.5]);
        let c = CostMatrix::from_fn(4, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3).unwrap();
        let sol = exact_w1(&mu, &nu, &c).unwrap();
        for i in 0..4 {
            let row: f64 = (0..3).map(|j| sol.plan_at(i, j)).sum();
            assert!((row - mu.weights()[i]).abs() < 1e-10);
        }
        for j in 0..3 {
            let col: f64 = (0..4).map(|i| sol.plan_at(i, j)).sum();
            assert!((col - nu.weights()[j]).abs() < 1e-10);
        }
        for i in 0..4 {
            for j in 0..3 {
                assert!(c.at(i, j) - sol.f[i] - sol.g[j] > -1e-8);
                if sol.plan_at(i, j) > 0.0 {
                    assert!((c.at(i, j) - sol.f[i] - sol.g[j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let c = CostMatrix::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(exact_w1(&measure(&[1.0]), &measure(&[1.0]), &c).is_err());
    }
}
