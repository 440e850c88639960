//! Top-K sparse autoencoder.
//!
//! The encoder computes `s = TopK(W_e (r - b))` and the decoder reconstructs
//! `r_hat = W_d s + b`, where the decoder bias `b` is optional and absent by
//! default. Gradients through Top-K treat the selected support as fixed.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub use checkpoint::{decode_sae, encode_sae, load_sae, save_sae};
pub use train::{train_sae, SaeTrainConfig, SaeTrainLog};

/// A sparse activation vector: strictly increasing feature ids with values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCode {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data(
                "sparse code indices must be strictly increasing".into(),
            ));
        }
        Ok(Self { indices, values })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// Activation of feature `k` (zero off the support).
    pub fn get(&self, k: usize) -> f64 {
        self.indices
            .binary_search(&k)
            .map_or(0.0, |pos| self.values[pos])
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    /// Dense length-`p` copy.
    pub fn densify(&self, p: usize) -> Vec<f64> {
        let mut out = vec![0.0; p];
        for (k, v) in self.iter() {
            out[k] = v;
        }
        out
    }

    /// Walks the union of two supports in increasing feature order, yielding
    /// `(feature, self value, other value)`.
    pub fn union_with<'a>(&'a self, other: &'a SparseCode) -> UnionIter<'a> {
        UnionIter {
            a: self,
            b: other,
            i: 0,
            j: 0,
        }
    }

    /// Number of features active in both codes.
    pub fn intersection_len(&self, other: &SparseCode) -> usize {
        self.union_with(other)
            .filter(|&(k, _, _)| self.contains(k) && other.contains(k))
            .count()
    }
}

pub struct UnionIter<'a> {
    a: &'a SparseCode,
    b: &'a SparseCode,
    i: usize,
    j: usize,
}

impl Iterator for UnionIter<'_> {
    type Item = (usize, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        let ai = self.a.indices.get(self.i).copied();
        let bj = self.b.indices.get(self.j).copied();
        match (ai, bj) {
            (None, None) => None,
            (Some(k), None) => {
                self.i += 1;
                Some((k, self.a.values[self.i - 1], 0.0))
            }
            (None, Some(k)) => {
                self.j += 1;
                Some((k, 0.0, self.b.values[self.j - 1]))
            }
            (Some(ka), Some(kb)) if ka < kb => {
                self.i += 1;
                Some((ka, self.a.values[self.i - 1], 0.0))
            }
            (Some(ka), Some(kb)) if kb < ka => {
                self.j += 1;
                Some((kb, 0.0, self.b.values[self.j - 1]))
            }
            (Some(k), Some(_)) => {
                self.i += 1;
                self.j += 1;
                Some((k, self.a.values[self.i - 1], self.b.values[self.j - 1]))
            }
        }
    }
}

/// Keeps the `k` largest entries of `v` (by value, ties to the lower index).
pub fn topk(v: &[f64], k: usize) -> Result<SparseCode> {
    if k > v.len() {
        return Err(Error::Config(format!(
            "top-k with k={k} exceeds vector length {}",
            v.len()
        )));
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    let by_rank = |a: &usize, b: &usize| v[*b].total_cmp(&v[*a]).then(a.cmp(b));
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by(k - 1, by_rank);
    }
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    let values = chosen.iter().map(|&i| v[i]).collect();
    SparseCode::new(chosen, values)
}

/// Top-K sparse autoencoder parameters.
///
/// `encoder` is `W_e` (`p x d`, row-major). `decoder` stores `W_d` column by
/// column, so feature `k`'s dictionary direction is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    d: usize,
    p: usize,
    k_active: usize,
    encoder: Vec<f64>,
    decoder: Vec<f64>,
    decoder_bias: Option<Vec<f64>>,
}

impl SaeModel {
    /// `encoder` is `W_e` row-major; `decoder_columns` holds `W_d` column-wise.
    pub fn new(
        d: usize,
        p: usize,
        k_active: usize,
        encoder: Vec<f64>,
        decoder_columns: Vec<f64>,
        decoder_bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        Self::new_unchecked_width(d, p, k_active, encoder, decoder_columns, decoder_bias)
            .and_then(|m| {
                if p <= d {
                    return Err(Error::Config(format!(
                        "dictionary size p={p} must exceed d={d}"
                    )));
                }
                Ok(m)
            })
    }

    /// Like [`SaeModel::new`] without the `p > d` requirement; used for
    /// square or undercomplete test fixtures.
    pub fn new_unchecked_width(
        d: usize,
        p: usize,
        k_active: usize,
        encoder: Vec<f64>,
        decoder_columns: Vec<f64>,
        decoder_bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Config("SAE needs d >= 1 and p >= 1".into()));
        }
        if k_active == 0 || k_active > p {
            return Err(Error::Config(format!(
                "k_active={k_active} must lie in [1, p={p}]"
            )));
        }
        check_dim("encoder size", p * d, encoder.len())?;
        check_dim("decoder size", p * d, decoder_columns.len())?;
        if let Some(b) = &decoder_bias {
            check_dim("decoder bias", d, b.len())?;
        }
        let finite = linalg::all_finite(&encoder)
            && linalg::all_finite(&decoder_columns)
            && decoder_bias.as_deref().is_none_or(linalg::all_finite);
        if !finite {
            return Err(Error::Data("non-finite SAE parameter".into()));
        }
        Ok(Self {
            d,
            p,
            k_active,
            encoder,
            decoder: decoder_columns,
            decoder_bias,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k_active(&self) -> usize {
        self.k_active
    }

    /// Row `k` of `W_e`.
    pub fn encoder_row(&self, k: usize) -> &[f64] {
        &self.encoder[k * self.d..(k + 1) * self.d]
    }

    /// Column `k` of `W_d`.
    pub fn decoder_column(&self, k: usize) -> &[f64] {
        &self.decoder[k * self.d..(k + 1) * self.d]
    }

    pub fn encoder(&self) -> &[f64] {
        &self.encoder
    }

    pub fn decoder_columns(&self) -> &[f64] {
        &self.decoder
    }

    pub fn decoder_bias(&self) -> Option<&[f64]> {
        self.decoder_bias.as_deref()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64], Option<&mut [f64]>) {
        (
            &mut self.encoder,
            &mut self.decoder,
            self.decoder_bias.as_deref_mut(),
        )
    }

    /// Rescales every decoder column to unit L2 norm (zero columns are left alone).
    pub fn normalize_decoder(&mut self) {
        for col in self.decoder.chunks_exact_mut(self.d) {
            let nrm = linalg::norm(col);
            if nrm > 0.0 {
                col.iter_mut().for_each(|v| *v /= nrm);
            }
        }
    }

    /// Dense encoder pre-activations `W_e (r - b)`.
    pub fn pre_activations(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_dim("representation length", self.d, r.len())?;
        let centered;
        let x = match &self.decoder_bias {
            Some(b) => {
                centered = r.iter().zip(b).map(|(a, b)| a - b).collect::<Vec<_>>();
                &centered[..]
            }
            None => r,
        };
        Ok(self
            .encoder
            .chunks_exact(self.d)
            .map(|row| linalg::dot(row, x))
            .collect())
    }

    pub fn encode(&self, r: &[f64]) -> Result<SparseCode> {
        topk(&self.pre_activations(r)?, self.k_active)
    }

    pub fn decode(&self, s: &SparseCode) -> Result<Vec<f64>> {
        let mut out = match &self.decoder_bias {
            Some(b) => b.clone(),
            None => vec![0.0; self.d],
        };
        for (k, v) in s.iter() {
            if k >= self.p {
                return Err(Error::Dimension(format!(
                    "feature index {k} out of range for p={}",
                    self.p
                )));
            }
            linalg::axpy(v, self.decoder_column(k), &mut out);
        }
        Ok(out)
    }

    /// `W_d * delta` for a sparse list of `(feature, coefficient)` pairs,
    /// without the decoder bias.
    pub fn decode_linear(&self, delta: impl IntoIterator<Item = (usize, f64)>) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (k, v) in delta {
            linalg::axpy(v, self.decoder_column(k), &mut out);
        }
        out
    }

    pub fn reconstruct(&self, r: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(r)?)
    }

    /// Pulls a gradient on the code values back to the representation:
    /// `sum_j grad_values[j] * W_e[code.indices[j], :]`, accumulated into `out`.
    pub fn encode_vjp(&self, code: &SparseCode, grad_values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(code.len(), grad_values.len());
        for (&k, &g) in code.indices().iter().zip(grad_values) {
            if g != 0.0 {
                linalg::axpy(g, self.encoder_row(k), out);
            }
        }
    }

    /// Directional derivative of the code values at a fixed support.
    pub fn encode_jvp(&self, code: &SparseCode, direction: &[f64]) -> Vec<f64> {
        code.indices()
            .iter()
            .map(|&k| linalg::dot(self.encoder_row(k), direction))
            .collect()
    }

    /// Gap between the K-th and (K+1)-th largest pre-activation; infinite
    /// when `K == p`.
    pub fn selection_margin(&self, r: &[f64]) -> Result<f64> {
        let mut pre = self.pre_activations(r)?;
        if self.k_active == self.p {
            return Ok(f64::INFINITY);
        }
        pre.sort_by(|a, b| b.total_cmp(a));
        Ok(pre[self.k_active - 1] - pre[self.k_active])
    }
}

/// Random unit decoder columns with the encoder tied to their transpose.
pub fn init_sae(d: usize, p: usize, k_active: usize, seed: u64) -> Result<SaeModel> {
    if p <= d {
        return Err(Error::Config(format!(
            "dictionary size p={p} must exceed d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decoder: Vec<f64> = (0..p * d).map(|_| rng.sample(StandardNormal)).collect();
    for col in decoder.chunks_exact_mut(d) {
        let nrm = linalg::norm(col);
        col.iter_mut().for_each(|v| *v /= nrm);
    }
    // W_e = W_d^T: row k of W_e is column k of W_d, which matches the storage.
    let encoder = decoder.clone();
    SaeModel::new(d, p, k_active, encoder, decoder, None)
}

/// Default dictionary size and sparsity for representation width `d`:
/// `p = 4d`, `K = d / 32`.
pub fn default_architecture(d: usize) -> Result<(usize, usize)> {
    if d < 32 {
        return Err(Error::Config(format!(
            "default K = d/32 needs d >= 32 (got d={d}); pass K explicitly"
        )));
    }
    if !d.is_multiple_of(32) {
        return Err(Error::Config(format!(
            "default K = d/32 needs d divisible by 32 (got d={d}); pass K explicitly"
        )));
    }
    Ok((4 * d, d / 32))
}
