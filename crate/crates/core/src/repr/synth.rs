//! Synthetic superposition data: sparse combinations of random unit
//! directions, with classes that own a handful of those directions.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ClassEmbeddings, RepresentationSet};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    /// Ground-truth dictionary size.
    pub p_true: usize,
    /// Active features per sample.
    pub k_true: usize,
    pub n_samples: usize,
    pub noise_sigma: f64,
    /// Zero produces an unlabeled set with uniformly drawn supports.
    pub n_classes: usize,
    pub features_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 16,
            p_true: 32,
            k_true: 4,
            n_samples: 2048,
            noise_sigma: 0.01,
            n_classes: 0,
            features_per_class: 1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.d == 0 || self.n_samples == 0 {
            return fail("d and n_samples must be positive".into());
        }
        if self.k_true == 0 || self.k_true > self.p_true {
            return fail(format!(
                "k_true={} must lie in [1, p_true={}]",
                self.k_true, self.p_true
            ));
        }
        if self.features_per_class == 0 {
            return fail("features_per_class must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma={} must be >= 0", self.noise_sigma));
        }
        let owned = self.n_classes * self.features_per_class;
        if owned > self.p_true {
            return fail(format!(
                "n_classes*features_per_class = {owned} exceeds p_true={}",
                self.p_true
            ));
        }
        if self.n_classes > 0 {
            // one owned feature plus k_true-1 drawn from the class's pool
            let pool = self.p_true - owned + self.features_per_class - 1;
            if pool < self.k_true - 1 {
                return fail(format!(
                    "only {pool} features available per class for k_true-1 = {} extra draws",
                    self.k_true - 1
                ));
            }
        }
        Ok(())
    }
}

/// Everything produced by [`synth_superposition`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub set: RepresentationSet,
    /// Ground-truth dictionary stored column-wise: entry `k` is the unit
    /// direction of feature `k` (length `d`).
    pub dictionary: Vec<Vec<f64>>,
    pub class_embeddings: ClassEmbeddings,
    /// Ground-truth sparse codes as sorted `(feature, amplitude)` pairs.
    pub codes: Vec<Vec<(usize, f64)>>,
}

impl SynthOutput {
    /// Feature ids owned by `class`.
    pub fn owned_features(cfg: &SynthConfig, class: usize) -> std::ops::Range<usize> {
        class * cfg.features_per_class..(class + 1) * cfg.features_per_class
    }

    /// `D * s` for a true code.
    pub fn reconstruct(&self, code: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; self.set.d()];
        for &(k, a) in code {
            linalg::axpy(a, &self.dictionary[k], &mut out);
        }
        out
    }
}

/// Generates `r = D s + noise` with `k_true`-sparse positive codes.
///
/// Labels are balanced (`i mod n_classes`). A sample of class `c` draws one
/// feature uniformly from the features `c` owns, then `k_true - 1` more
/// uniformly from the features no other class owns.
pub fn synth_superposition(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (d, p) = (cfg.d, cfg.p_true);

    let mut dictionary = Vec::with_capacity(p);
    for k in 0..p {
        let mut col: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = linalg::norm(&col);
        if nrm == 0.0 {
            return Err(Error::Numerical(format!("degenerate dictionary column {k}")));
        }
        col.iter_mut().for_each(|v| *v /= nrm);
        dictionary.push(col);
    }

    let fpc = cfg.features_per_class;
    let owned = cfg.n_classes * fpc;
    let unowned: Vec<usize> = (owned..p).collect();

    let mut data = Vec::with_capacity(cfg.n_samples * d);
    let mut codes = Vec::with_capacity(cfg.n_samples);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let mut support: Vec<usize> = if cfg.n_classes == 0 {
            index::sample(&mut rng, p, cfg.k_true).into_vec()
        } else {
            let class = i % cfg.n_classes;
            labels.push(class);
            let first = class * fpc + rng.random_range(0..fpc);
            let pool: Vec<usize> = (class * fpc..(class + 1) * fpc)
                .filter(|&k| k != first)
                .chain(unowned.iter().copied())
                .collect();
            let mut support = vec![first];
            support.extend(
                index::sample(&mut rng, pool.len(), cfg.k_true - 1)
                    .into_iter()
                    .map(|j| pool[j]),
            );
            support
        };
        support.sort_unstable();
        let code: Vec<(usize, f64)> = support
            .into_iter()
            .map(|k| (k, rng.random_range(0.5..1.5)))
            .collect();

        let mut row = vec![0.0; d];
        for &(k, a) in &code {
            linalg::axpy(a, &dictionary[k], &mut row);
        }
        for v in row.iter_mut() {
            let eps: f64 = rng.sample(StandardNormal);
            *v += cfg.noise_sigma * eps;
        }
        data.extend_from_slice(&row);
        codes.push(code);
    }

    let mut set = RepresentationSet::new(cfg.n_samples, d, data)?
        .with_meta("source", "synth_superposition")
        .with_meta("seed", cfg.seed.to_string());
    if cfg.n_classes > 0 {
        set = set.with_labels(labels, cfg.n_classes)?;
    }

    let mut emb = Vec::with_capacity(cfg.n_classes * d);
    for c in 0..cfg.n_classes {
        let mut row = vec![0.0; d];
        for atom in &dictionary[c * fpc..(c + 1) * fpc] {
            linalg::axpy(1.0, atom, &mut row);
        }
        emb.extend_from_slice(&row);
    }
    let class_embeddings = ClassEmbeddings::normalized(cfg.n_classes, d, emb)?;

    Ok(SynthOutput {
        set,
        dictionary,
        class_embeddings,
        codes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classed_cfg() -> SynthConfig {
        SynthConfig {
            d: 12,
            p_true: 40,
            k_true: 4,
            n_samples: 300,
            noise_sigma: 0.0,
            n_classes: 5,
            features_per_class: 2,
            seed: 3,
        }
    }

    #[test]
    fn noiseless_rows_are_exact_reconstructions() {
        let out = synth_superposition(&classed_cfg()).unwrap();
        for (i, code) in out.codes.iter().enumerate() {
            let rec = out.reconstruct(code);
            for (a, b) in rec.iter().zip(out.set.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_superposition(&classed_cfg()).unwrap();
        let b = synth_superposition(&classed_cfg()).unwrap();
        assert_eq!(a.set, b.set);
        assert_eq!(a.dictionary, b.dictionary);
        assert_eq!(a.class_embeddings, b.class_embeddings);
        let mut cfg = classed_cfg();
        cfg.seed = 4;
        assert_ne!(synth_superposition(&cfg).unwrap().set, a.set);
    }

    #[test]
    fn every_sample_has_k_true_actives_and_an_owned_feature() {
        let cfg = classed_cfg();
        let out = synth_superposition(&cfg).unwrap();
        let labels = out.set.labels().unwrap();
        for (code, &y) in out.codes.iter().zip(labels) {
            assert_eq!(code.len(), cfg.k_true);
            let owned = SynthOutput::owned_features(&cfg, y);
            assert!(code.iter().any(|(k, _)| owned.contains(k)));
            for &(k, a) in code {
                assert!((0.5..1.5).contains(&a));
                // never another class's feature
                if k < cfg.n_classes * cfg.features_per_class {
                    assert!(owned.contains(&k));
                }
            }
        }
    }

    #[test]
    fn dictionary_columns_unit_and_class_rows_normalized() {
        let out = synth_superposition(&classed_cfg()).unwrap();
        for col in &out.dictionary {
            assert!((linalg::norm(col) - 1.0).abs() < 1e-12);
        }
        assert!(out.class_embeddings.is_row_normalized());
    }

    #[test]
    fn rejects_overcommitted_ownership() {
        let cfg = SynthConfig {
            n_classes: 10,
            features_per_class: 4,
            p_true: 32,
            ..classed_cfg()
        };
        assert!(matches!(synth_superposition(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn unlabeled_when_no_classes() {
        let out = synth_superposition(&SynthConfig {
            n_samples: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(out.set.labels().is_none());
        assert_eq!(out.class_embeddings.n_classes(), 0);
    }
}
