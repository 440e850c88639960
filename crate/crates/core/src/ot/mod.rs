//! Discrete optimal transport on small supports.
//!
//! [`exact_w1`] solves the transportation problem exactly with the
//! transportation simplex and returns optimal dual potentials alongside the
//! plan. [`sinkhorn`] is the log-domain entropic approximation.

mod simplex;
mod sinkhorn;

use crate::error::{Error, Result};

pub use simplex::exact_w1;
pub use sinkhorn::{sinkhorn, SinkhornResult};

/// Largest support the exact solver accepts on either side.
pub const MAX_ATOMS: usize = 256;

/// Probability vector over a set of distinct atom ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<usize>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::Measure("measure has no atoms".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Measure(format!("weight {w} of atom {i} is not >= 0")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Measure(format!("weights sum to {sum}, not 1")));
        }
        let mut sorted = atoms.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Measure("duplicate atom ids".into()));
        }
        Ok(Self { atoms, weights })
    }

    /// Measure over atoms `0..weights.len()`.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::new((0..weights.len()).collect(), weights)
    }

    /// Normalizes nonnegative masses into a measure.
    pub fn from_masses(atoms: Vec<usize>, masses: &[f64]) -> Result<Self> {
        if let Some((i, m)) = masses.iter().enumerate().find(|(_, m)| !(**m >= 0.0)) {
            return Err(Error::Measure(format!(
                "mass {m} of atom {} is negative",
                atoms.get(i).copied().unwrap_or(i)
            )));
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Measure("measure has zero total mass".into()));
        }
        Self::new(atoms, masses.iter().map(|m| m / total).collect())
    }

    pub fn atoms(&self) -> &[usize] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Dense `rows x cols` ground cost, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "cost matrix has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        if !data.iter().all(|c| c.is_finite()) {
            return Err(Error::Data("non-finite transport cost".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i)).expect("finite costs")
    }
}

/// Optimal plan with its cost and dual potentials.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    rows: usize,
    cols: usize,
    /// Row-major `rows x cols` transport plan.
    pub plan: Vec<f64>,
    pub value: f64,
    /// Source potentials.
    pub f: Vec<f64>,
    /// Target potentials.
    pub g: Vec<f64>,
}

impl TransportSolution {
    pub fn plan_at(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.cols + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

fn check_problem(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    if cost.rows != mu.len() || cost.cols != nu.len() {
        return Err(Error::Dimension(format!(
            "cost is {}x{} but measures have {} and {} atoms",
            cost.rows,
            cost.cols,
            mu.len(),
            nu.len()
        )));
    }
    let (sa, sb): (f64, f64) = (mu.weights.iter().sum(), nu.weights.iter().sum());
    if (sa - sb).abs() > 1e-6 {
        return Err(Error::Measure(format!(
            "unbalanced measures: masses {sa} and {sb}"
        )));
    }
    Ok(())
}
