use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SaeModel;
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::metrics;
use crate::optim::{adamw_step, AdamConfig, AdamState};
use crate::repr::RepresentationSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaeTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

/// Per-epoch training statistics, measured on the full set after each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeTrainLog {
    /// Mean over samples of `||r - r_hat||^2`.
    pub mse: Vec<f64>,
    pub fvu: Vec<f64>,
    /// Features never selected during the epoch.
    pub dead_features: Vec<usize>,
}

/// Trains `model` to minimize the batch-mean squared reconstruction error
/// with Adam, renormalizing decoder columns after every step.
pub fn train_sae(
    set: &RepresentationSet,
    cfg: &SaeTrainConfig,
    model: SaeModel,
) -> Result<(SaeModel, SaeTrainLog)> {
    check_dim("SAE input width", model.d(), set.d())?;
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be >= 1".into()));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::Config(format!(
            "learning_rate must be positive, got {}",
            cfg.learning_rate
        )));
    }

    let mut model = model;
    let (d, p) = (model.d(), model.p());
    let has_bias = model.decoder_bias().is_some();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..set.n()).collect();

    let mut enc_state = AdamState::new(p * d);
    let mut dec_state = AdamState::new(p * d);
    let mut bias_state = AdamState::new(d);
    let mut grad_enc = vec![0.0; p * d];
    let mut grad_dec = vec![0.0; p * d];
    let mut grad_bias = vec![0.0; d];

    let mut log = SaeTrainLog {
        mse: Vec::with_capacity(cfg.epochs),
        fvu: Vec::with_capacity(cfg.epochs),
        dead_features: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut selected = vec![false; p];
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad_enc.fill(0.0);
            grad_dec.fill(0.0);
            grad_bias.fill(0.0);
            let scale = 2.0 / batch.len() as f64;
            let mut loss = 0.0;

            for &i in batch {
                let r = set.row(i);
                let x: Vec<f64> = match model.decoder_bias() {
                    Some(b) => r.iter().zip(b).map(|(a, b)| a - b).collect(),
                    None => r.to_vec(),
                };
                let code = model.encode(r)?;
                let mut err = model.decode(&code)?;
                for (e, v) in err.iter_mut().zip(r) {
                    *e -= v;
                }
                loss += linalg::dot(&err, &err);

                for (k, s) in code.iter() {
                    selected[k] = true;
                    let g_s = scale * linalg::dot(model.decoder_column(k), &err);
                    linalg::axpy(scale * s, &err, &mut grad_dec[k * d..(k + 1) * d]);
                    linalg::axpy(g_s, &x, &mut grad_enc[k * d..(k + 1) * d]);
                    if has_bias {
                        linalg::axpy(-g_s, model.encoder_row(k), &mut grad_bias);
                    }
                }
                if has_bias {
                    linalg::axpy(scale, &err, &mut grad_bias);
                }
            }

            let loss = loss / batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite SAE loss at epoch {epoch}, batch {batch_idx}"
                )));
            }

            let (enc, dec, bias) = model.params_mut();
            adamw_step(enc, &grad_enc, &mut enc_state, cfg.learning_rate, &cfg.adam, 0.0)?;
            adamw_step(dec, &grad_dec, &mut dec_state, cfg.learning_rate, &cfg.adam, 0.0)?;
            if let Some(b) = bias {
                adamw_step(b, &grad_bias, &mut bias_state, cfg.learning_rate, &cfg.adam, 0.0)?;
            }
            model.normalize_decoder();
        }

        let recon = set.map_rows(d, |r| model.reconstruct(r))?;
        let mse = recon
            .rows()
            .zip(set.rows())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum::<f64>()
            / set.n() as f64;
        log.mse.push(mse);
        log.fvu.push(metrics::fvu(set, &recon)?);
        log.dead_features
            .push(selected.iter().filter(|&&s| !s).count());
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repr::{synth_superposition, SynthConfig};
    use crate::sae::init_sae;

    fn small_data() -> RepresentationSet {
        synth_superposition(&SynthConfig {
            d: 8,
            p_true: 12,
            k_true: 2,
            n_samples: 256,
            noise_sigma: 0.01,
            seed: 5,
            ..SynthConfig::default()
        })
        .unwrap()
        .set
    }

    fn quick_cfg() -> SaeTrainConfig {
        SaeTrainConfig {
            epochs: 15,
            batch_size: 32,
            learning_rate: 5e-3,
            seed: 1,
            ..SaeTrainConfig::default()
        }
    }

    #[test]
    fn fvu_decreases_and_log_lengths_match() {
        let set = small_data();
        let (_, log) = train_sae(&set, &quick_cfg(), init_sae(8, 24, 3, 2).unwrap()).unwrap();
        assert_eq!(log.fvu.len(), 15);
        assert_eq!(log.mse.len(), 15);
        assert_eq!(log.dead_features.len(), 15);
        assert!(log.fvu.last().unwrap() < log.fvu.first().unwrap());
    }

    #[test]
    fn decoder_columns_stay_unit_norm() {
        let set = small_data();
        let mut cfg = quick_cfg();
        for epochs in [1, 3] {
            cfg.epochs = epochs;
            let (m, _) = train_sae(&set, &cfg, init_sae(8, 24, 3, 2).unwrap()).unwrap();
            for k in 0..m.p() {
                assert!((linalg::norm(m.decoder_column(k)) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let set = small_data();
        let a = train_sae(&set, &quick_cfg(), init_sae(8, 24, 3, 2).unwrap()).unwrap();
        let b = train_sae(&set, &quick_cfg(), init_sae(8, 24, 3, 2).unwrap()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn decoder_bias_is_trained() {
        let set = small_data();
        let m = init_sae(8, 24, 3, 2).unwrap();
        let m = SaeModel::new(
            8,
            24,
            3,
            m.encoder().to_vec(),
            m.decoder_columns().to_vec(),
            Some(vec![0.0; 8]),
        )
        .unwrap();
        let (trained, log) = train_sae(&set, &quick_cfg(), m).unwrap();
        assert!(trained.decoder_bias().unwrap().iter().any(|&b| b != 0.0));
        assert!(log.fvu.last().unwrap() < log.fvu.first().unwrap());
    }

    #[test]
    fn width_mismatch_rejected() {
        let set = small_data();
        assert!(train_sae(&set, &quick_cfg(), init_sae(4, 24, 3, 2).unwrap()).is_err());
    }
}
