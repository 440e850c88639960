//! Regularized fine-tuning of a small encoder with a linear head.
//!
//! Per step: `r_ft = f(x)`, `r_0 = f_0(x)` from the frozen copy, loss is
//! batch-mean cross-entropy on `head(r_ft)` plus batch-mean regularizer on
//! `(r_0, r_ft)`. Encoder and head are updated with AdamW under a warmup +
//! cosine schedule. The frozen encoder and SAE are only borrowed.

mod checkpoint;
mod encoder;
mod head;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::optim::{adamw_step, AdamConfig, AdamState, WarmupCosine};
use crate::regularize::{PcaBasis, Regularizer, RegularizerSpec};
use crate::repr::RepresentationSet;
use crate::sae::SaeModel;

pub use checkpoint::{
    decode_encoder, decode_head, encode_encoder, encode_head, load_encoder, load_head,
    save_encoder, save_head,
};
pub use encoder::{wise_interpolate, EncoderGrads, ForwardCache, Layer, TinyEncoder};
pub use head::{cross_entropy, zero_shot_logits, LinearHead, DEFAULT_TAU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub adam: AdamConfig,
    pub reg: RegularizerSpec,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    /// Desk-scale schedule for the toy encoder.
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.1,
            warmup_steps: 50,
            adam: AdamConfig::default(),
            reg: RegularizerSpec::none(),
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    /// Schedule used for full-size vision encoders.
    pub fn full_scale() -> Self {
        Self {
            learning_rate: 1e-5,
            warmup_steps: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    /// Per optimizer step.
    pub loss: Vec<f64>,
    pub ce: Vec<f64>,
    pub reg: Vec<f64>,
    pub lr: Vec<f64>,
    /// Per epoch, measured after the epoch's last step.
    pub train_acc: Vec<f64>,
    /// Empty when no evaluation set is supplied.
    pub eval_acc: Vec<f64>,
}

/// Training and optional held-out data for [`finetune`].
#[derive(Debug, Clone, Copy)]
pub struct FinetuneData<'a> {
    pub train: &'a RepresentationSet,
    pub eval: Option<&'a RepresentationSet>,
}

/// Frozen artifacts the regularizer may need.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenModels<'a> {
    pub sae: Option<&'a SaeModel>,
    pub pca: Option<&'a PcaBasis>,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutput {
    pub encoder: TinyEncoder,
    pub head: LinearHead,
    pub log: RunLog,
}

/// Value and full gradient of the batch objective.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub ce: f64,
    pub reg: f64,
    pub encoder_grads: EncoderGrads,
    pub head_grad: Vec<f64>,
}

/// `mean_i CE(head(f(x_i)), y_i) + mean_i reg(r0_i, f(x_i))` and its gradient
/// with respect to every encoder and head parameter.
pub fn batch_objective(
    enc: &TinyEncoder,
    head: &LinearHead,
    reg: &Regularizer<'_>,
    inputs: &[&[f64]],
    r0: &[&[f64]],
    labels: &[usize],
) -> Result<Objective> {
    let b = inputs.len();
    if b == 0 || r0.len() != b || labels.len() != b {
        return Err(Error::Dimension(format!(
            "batch of {b} inputs, {} zero-shot rows, {} labels",
            r0.len(),
            labels.len()
        )));
    }
    let inv_b = 1.0 / b as f64;
    let mut encoder_grads = EncoderGrads::zeros_like(enc);
    let mut head_grad = vec![0.0; head.weight().len()];
    let (mut ce_sum, mut reg_sum) = (0.0, 0.0);
    for ((x, r0), &y) in inputs.iter().zip(r0).zip(labels) {
        let (rft, cache) = enc.forward_cached(x)?;
        let logits = zero_shot_logits(head, &rft)?;
        let (ce, g_logits) = cross_entropy(&logits, y)?;
        let (g_w, mut g_r) = head.backward(&rft, &g_logits)?;
        let penalty = reg.eval(r0, &rft)?;
        linalg::axpy(1.0, &penalty.grad_rft, &mut g_r);
        g_r.iter_mut().for_each(|g| *g *= inv_b);
        let (grads, _) = enc.backward(&cache, &g_r)?;
        encoder_grads.add_assign(&grads);
        linalg::axpy(inv_b, &g_w, &mut head_grad);
        ce_sum += ce;
        reg_sum += penalty.value;
    }
    let (ce, reg) = (ce_sum * inv_b, reg_sum * inv_b);
    Ok(Objective {
        loss: ce + reg,
        ce,
        reg,
        encoder_grads,
        head_grad,
    })
}

/// Applies `enc` to every row, keeping labels and metadata.
pub fn represent(enc: &TinyEncoder, set: &RepresentationSet) -> Result<RepresentationSet> {
    check_dim("encoder input width", enc.d_in(), set.d())?;
    let mut out = set.map_rows(enc.d_out(), |x| enc.forward(x))?;
    if let (Some(labels), Some(k)) = (set.labels(), set.n_classes()) {
        out = out.with_labels(labels.to_vec(), k)?;
    }
    Ok(out)
}

/// Fraction of rows whose predicted class matches the label.
pub fn evaluate(enc: &TinyEncoder, head: &LinearHead, set: &RepresentationSet) -> Result<f64> {
    let labels = set.require_labels()?;
    if set.n() == 0 {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    check_dim("head width", head.d(), enc.d_out())?;
    let mut correct = 0usize;
    for (x, &y) in set.rows().zip(labels) {
        if head.predict(&enc.forward(x)?)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / set.n() as f64)
}

/// Fine-tunes a copy of `enc0` and `head` on `data.train`.
pub fn finetune(
    enc0: &TinyEncoder,
    frozen: FrozenModels<'_>,
    head: &LinearHead,
    data: FinetuneData<'_>,
    cfg: &FinetuneConfig,
) -> Result<FinetuneOutput> {
    cfg.validate()?;
    let train = data.train;
    let labels = train.require_labels()?;
    check_dim("encoder input width", enc0.d_in(), train.d())?;
    check_dim("head width", enc0.d_out(), head.d())?;
    if let Some(&bad) = labels.iter().find(|&&y| y >= head.n_classes()) {
        return Err(Error::Data(format!(
            "label {bad} out of range for a {}-class head",
            head.n_classes()
        )));
    }
    let reg = Regularizer::new(cfg.reg, frozen.sae, frozen.pca)?;

    // f_0 is frozen, so r_0 is computed once.
    let r0: Vec<Vec<f64>> = train
        .rows()
        .map(|x| enc0.forward(x))
        .collect::<Result<_>>()?;

    let mut enc = enc0.clone();
    let mut head = head.clone();
    let mut enc_state: Vec<AdamState> = enc.params().iter().map(|p| AdamState::new(p.len())).collect();
    let mut head_state = AdamState::new(head.weight().len());

    let steps_per_epoch = cfg.steps_per_epoch(train.n());
    let schedule = WarmupCosine {
        peak: cfg.learning_rate,
        warmup_steps: cfg.warmup_steps,
        total_steps: (cfg.epochs * steps_per_epoch) as u64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.n()).collect();
    let mut log = RunLog::default();
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train.row(i)).collect();
            let r0s: Vec<&[f64]> = batch.iter().map(|&i| r0[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let obj = batch_objective(&enc, &head, &reg, &xs, &r0s, &ys)?;
            if !obj.loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, step {step}"
                )));
            }
            let lr = schedule.lr_at(step);
            let grads = obj
                .encoder_grads
                .weights
                .iter()
                .zip(&obj.encoder_grads.biases)
                .flat_map(|(w, b)| [w, b]);
            for ((param, g), state) in enc.params_mut().into_iter().zip(grads).zip(&mut enc_state) {
                adamw_step(param, g, state, lr, &cfg.adam, cfg.weight_decay)?;
            }
            adamw_step(
                head.weight_mut(),
                &obj.head_grad,
                &mut head_state,
                lr,
                &cfg.adam,
                cfg.weight_decay,
            )?;
            log.loss.push(obj.loss);
            log.ce.push(obj.ce);
            log.reg.push(obj.reg);
            log.lr.push(lr);
            step += 1;
        }
        log.train_acc.push(evaluate(&enc, &head, train)?);
        if let Some(eval) = data.eval {
            log.eval_acc.push(evaluate(&enc, &head, eval)?);
        }
    }
    Ok(FinetuneOutput {
        encoder: enc,
        head,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularize::RegKind;
    use crate::repr::{synth_superposition, SynthConfig};

    fn toy() -> (RepresentationSet, LinearHead) {
        let cfg = SynthConfig {
            d: 8,
            p_true: 16,
            k_true: 2,
            n_samples: 96,
            n_classes: 3,
            features_per_class: 2,
            seed: 5,
            ..SynthConfig::default()
        };
        let out = synth_superposition(&cfg).unwrap();
        let head = LinearHead::from_class_embeddings(&out.class_embeddings, 10.0).unwrap();
        (out.set, head)
    }

    #[test]
    fn no_regularizer_loss_is_cross_entropy() {
        let (set, head) = toy();
        let enc0 = TinyEncoder::identity_mlp(8).unwrap();
        let cfg = FinetuneConfig {
            epochs: 2,
            batch_size: 16,
            ..FinetuneConfig::default()
        };
        let data = FinetuneData { train: &set, eval: None };
        let out = finetune(&enc0, FrozenModels::default(), &head, data, &cfg).unwrap();
        assert_eq!(out.log.loss, out.log.ce);
        assert!(out.log.reg.iter().all(|&r| r == 0.0));
        assert_eq!(out.log.loss.len(), 2 * 6);
        assert_eq!(out.log.train_acc.len(), 2);
        assert!(out.log.eval_acc.is_empty());
    }

    #[test]
    fn repeat_runs_are_identical() {
        let (set, head) = toy();
        let enc0 = TinyEncoder::identity_mlp(8).unwrap();
        let cfg = FinetuneConfig {
            epochs: 2,
            reg: RegularizerSpec::new(RegKind::L2, 0.0, 1.0, 1.0),
            ..FinetuneConfig::default()
        };
        let data = FinetuneData { train: &set, eval: Some(&set) };
        let a = finetune(&enc0, FrozenModels::default(), &head, data, &cfg).unwrap();
        let b = finetune(&enc0, FrozenModels::default(), &head, data, &cfg).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.head, b.head);
        assert_eq!(a.log, b.log);
        assert_ne!(a.encoder, enc0);
    }

    #[test]
    fn sae_kind_without_sae_is_config_error() {
        let (set, head) = toy();
        let enc0 = TinyEncoder::identity_mlp(8).unwrap();
        let cfg = FinetuneConfig {
            reg: RegularizerSpec::new(RegKind::SaeAdd, 1.0, 1.0, 70.0),
            ..FinetuneConfig::default()
        };
        let data = FinetuneData { train: &set, eval: None };
        let err = finetune(&enc0, FrozenModels::default(), &head, data, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn one_hot_head_is_perfect() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| {
            let mut r = vec![0.0; 3];
            r[i % 3] = 1.0 + i as f64;
            r
        }).collect();
        let set = RepresentationSet::from_rows(&rows)
            .unwrap()
            .with_labels((0..6).map(|i| i % 3).collect(), 3)
            .unwrap();
        let head = LinearHead::new(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.], 1.0).unwrap();
        let enc = TinyEncoder::identity_mlp(3).unwrap();
        assert_eq!(evaluate(&enc, &head, &set).unwrap(), 1.0);
    }
}
