//! Representation datasets: storage, normalization, splitting and synthetic
//! generation.

mod format;
mod synth;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use format::{
    decode_representations, encode_representations, load_representations, save_representations,
};
pub use synth::{synth_superposition, SynthConfig, SynthOutput};

/// Meta key holding the number of classes of a labeled set.
pub const META_N_CLASSES: &str = "n_classes";
/// Meta key set to "true" once rows have been L2-normalized.
pub const META_NORMALIZED: &str = "normalized";

/// An `n x d` matrix of representation vectors, stored row-major, with
/// optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
    labels: Option<Vec<usize>>,
    meta: BTreeMap<String, String>,
}

impl RepresentationSet {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Data(format!(
                "representation set needs n >= 1 and d >= 1, got n={n}, d={d}"
            )));
        }
        if data.len() != n * d {
            return Err(Error::Dimension(format!(
                "representation data has {} values, expected n*d = {}",
                data.len(),
                n * d
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self {
            n,
            d,
            data,
            labels: None,
            meta: BTreeMap::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// Attaches labels; every label must be below `n_classes`.
    pub fn with_labels(mut self, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                self.n
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= n_classes) {
            return Err(Error::Data(format!(
                "label {l} at row {i} is not below n_classes={n_classes}"
            )));
        }
        self.labels = Some(labels);
        self.meta
            .insert(META_N_CLASSES.to_string(), n_classes.to_string());
        Ok(self)
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.meta.get(META_N_CLASSES).and_then(|v| v.parse().ok())
    }

    /// Labels, or a data error when the set is unlabeled.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels()
            .ok_or_else(|| Error::Data("representation set has no labels".into()))
    }

    /// New set made of the given rows (labels and meta carried over).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.n {
                return Err(Error::Dimension(format!(
                    "row index {i} out of range for n={}",
                    self.n
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        let mut out = Self::new(indices.len(), self.d, data)?;
        out.labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        out.meta = self.meta.clone();
        Ok(out)
    }

    /// Applies `f` to every row, producing a set of width `d_out` with the
    /// same labels and meta.
    pub fn map_rows<F>(&self, d_out: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut data = Vec::with_capacity(self.n * d_out);
        for row in self.rows() {
            let out = f(row)?;
            crate::error::check_dim("mapped row width", d_out, out.len())?;
            data.extend_from_slice(&out);
        }
        let mut out = Self::new(self.n, d_out, data)?;
        out.labels = self.labels.clone();
        out.meta = self.meta.clone();
        Ok(out)
    }
}

/// Class embedding matrix (`n_classes x d`, row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEmbeddings {
    n_classes: usize,
    d: usize,
    matrix: Vec<f64>,
    row_normalized: bool,
}

impl ClassEmbeddings {
    pub fn new(n_classes: usize, d: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n_classes * d {
            return Err(Error::Dimension(format!(
                "class embedding matrix has {} values, expected {}",
                matrix.len(),
                n_classes * d
            )));
        }
        if !linalg::all_finite(&matrix) {
            return Err(Error::Data("non-finite class embedding".into()));
        }
        Ok(Self {
            n_classes,
            d,
            matrix,
            row_normalized: false,
        })
    }

    /// Builds normalized class embeddings, rejecting zero rows.
    pub fn normalized(n_classes: usize, d: usize, matrix: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(n_classes, d, matrix)?;
        for (i, row) in out.matrix.chunks_exact_mut(d).enumerate() {
            let nrm = linalg::norm(row);
            if nrm == 0.0 {
                return Err(Error::Data(format!("class embedding {i} has zero norm")));
            }
            row.iter_mut().for_each(|v| *v /= nrm);
        }
        out.row_normalized = true;
        Ok(out)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.matrix[k * self.d..(k + 1) * self.d]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// Stores the embeddings as an unlabeled representation set.
    pub fn to_representation_set(&self) -> Result<RepresentationSet> {
        Ok(RepresentationSet::new(self.n_classes, self.d, self.matrix.clone())?
            .with_meta(META_NORMALIZED, self.row_normalized.to_string()))
    }
}

/// Scales every row to unit L2 norm.
pub fn row_normalize(set: &RepresentationSet) -> Result<RepresentationSet> {
    let mut data = set.data.clone();
    for (i, row) in data.chunks_exact_mut(set.d).enumerate() {
        let nrm = linalg::norm(row);
        if nrm == 0.0 {
            return Err(Error::Data(format!("row {i} has zero norm")));
        }
        row.iter_mut().for_each(|v| *v /= nrm);
    }
    let mut out = set.clone();
    out.data = data;
    out.meta
        .insert(META_NORMALIZED.to_string(), "true".to_string());
    Ok(out)
}

/// Deterministic shuffled split; the first part holds `round(fraction * n)` rows.
pub fn split(
    set: &RepresentationSet,
    fraction: f64,
    seed: u64,
) -> Result<(RepresentationSet, RepresentationSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_first = (fraction * set.n as f64).round() as usize;
    if n_first == 0 || n_first == set.n {
        return Err(Error::Config(format!(
            "split of {} rows at fraction {fraction} leaves an empty part",
            set.n
        )));
    }
    let mut order: Vec<usize> = (0..set.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = order.split_at(n_first);
    Ok((set.select(a)?, set.select(b)?))
}
