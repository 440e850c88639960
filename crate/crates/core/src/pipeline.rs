//! End-to-end toy experiment: synthetic data, SAE on zero-shot
//! representations, one fine-tune per regularizer, drift report.

use serde::{Deserialize, Serialize};

use crate::analysis::{drift_report, AnalysisContext, DriftReport};
use crate::error::{Error, Result};
use crate::finetune::{
    finetune, represent, FinetuneConfig, FinetuneData, FinetuneOutput, FrozenModels, LinearHead,
    TinyEncoder,
};
use crate::metrics::OverlapNorm;
use crate::regularize::{pca_fit, PcaBasis, RegKind, RegularizerSpec};
use crate::repr::{split, synth_superposition, ClassEmbeddings, RepresentationSet, SynthConfig};
use crate::sae::{init_sae, train_sae, SaeModel, SaeTrainConfig, SaeTrainLog};

/// Row name of the unmodified encoder in pipeline reports.
pub const ZERO_SHOT: &str = "zero-shot";

/// Logit scale of the toy head. The default of 100 saturates the softmax on
/// this task and fine-tuning then barely moves the encoder.
pub const TOY_TAU: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub reg: RegularizerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub data: SynthConfig,
    /// Fraction of samples used for fine-tuning; the rest is held out.
    pub train_fraction: f64,
    pub split_seed: u64,
    pub sae_width: usize,
    pub sae_k: usize,
    pub sae_init_seed: u64,
    pub sae_train: SaeTrainConfig,
    /// Components kept by the PCA baseline (only fitted when a run uses it).
    pub pca_components: usize,
    pub tau: f64,
    pub finetune: FinetuneConfig,
    pub runs: Vec<RunSpec>,
    pub overlap_norm: OverlapNorm,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data: SynthConfig {
                d: 32,
                p_true: 64,
                k_true: 4,
                n_samples: 8192,
                noise_sigma: 0.05,
                n_classes: 10,
                features_per_class: 1,
                seed: 0,
            },
            train_fraction: 0.75,
            split_seed: 1,
            sae_width: 128,
            sae_k: 4,
            sae_init_seed: 2,
            sae_train: SaeTrainConfig {
                batch_size: 64,
                ..SaeTrainConfig::default()
            },
            pca_components: 16,
            tau: TOY_TAU,
            finetune: FinetuneConfig::default(),
            runs: vec![
                RunSpec {
                    name: "none".into(),
                    reg: RegularizerSpec::none(),
                },
                RunSpec {
                    name: "l2".into(),
                    reg: RegularizerSpec::new(RegKind::L2, 0.0, 1.0, 0.5),
                },
                RunSpec {
                    name: "sae-add".into(),
                    reg: RegularizerSpec::new(RegKind::SaeAdd, 1.0, 30.0, 1.0),
                },
            ],
            overlap_norm: OverlapNorm::K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    pub output: FinetuneOutput,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub train: RepresentationSet,
    pub eval: RepresentationSet,
    pub class_embeddings: ClassEmbeddings,
    pub encoder0: TinyEncoder,
    pub head0: LinearHead,
    pub sae: SaeModel,
    pub sae_log: SaeTrainLog,
    pub pca: Option<PcaBasis>,
    pub runs: Vec<NamedRun>,
    /// Zero-shot row first, then one row per run.
    pub report: DriftReport,
}

/// Synthesizes labeled data, splits it and builds the identity zero-shot
/// encoder and embedding-initialized head.
pub fn prepare_task(
    cfg: &PipelineConfig,
) -> Result<(RepresentationSet, RepresentationSet, ClassEmbeddings, TinyEncoder, LinearHead)> {
    if cfg.data.n_classes == 0 {
        return Err(Error::Config("pipeline needs a labeled task (n_classes >= 1)".into()));
    }
    let synth = synth_superposition(&cfg.data)?;
    let (train, eval) = split(&synth.set, cfg.train_fraction, cfg.split_seed)?;
    let encoder0 = TinyEncoder::identity_mlp(cfg.data.d)?;
    let head0 = LinearHead::from_class_embeddings(&synth.class_embeddings, cfg.tau)?;
    Ok((train, eval, synth.class_embeddings, encoder0, head0))
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let (train, eval, class_embeddings, encoder0, head0) = prepare_task(cfg)?;

    let reps0 = represent(&encoder0, &train)?;
    let sae = init_sae(cfg.data.d, cfg.sae_width, cfg.sae_k, cfg.sae_init_seed)?;
    let (sae, sae_log) = train_sae(&reps0, &cfg.sae_train, sae)?;
    let pca = if cfg.runs.iter().any(|r| r.reg.kind == RegKind::Pca) {
        Some(pca_fit(&reps0, cfg.pca_components)?)
    } else {
        None
    };

    let frozen = FrozenModels {
        sae: Some(&sae),
        pca: pca.as_ref(),
    };
    let data = FinetuneData {
        train: &train,
        eval: Some(&eval),
    };
    let runs = cfg
        .runs
        .iter()
        .map(|spec| {
            let ft_cfg = FinetuneConfig {
                reg: spec.reg,
                ..cfg.finetune.clone()
            };
            let output = finetune(&encoder0, frozen, &head0, data, &ft_cfg)?;
            Ok(NamedRun {
                name: spec.name.clone(),
                output,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ctx = AnalysisContext {
        enc0: &encoder0,
        sae: &sae,
        class_embeddings: &class_embeddings,
        eval: &eval,
        train: &train,
        overlap_norm: cfg.overlap_norm,
    };
    let mut models = vec![(ZERO_SHOT, &encoder0, &head0)];
    models.extend(
        runs.iter()
            .map(|r| (r.name.as_str(), &r.output.encoder, &r.output.head)),
    );
    let report = drift_report(&ctx, &models)?;

    Ok(PipelineOutput {
        train,
        eval,
        class_embeddings,
        encoder0,
        head0,
        sae,
        sae_log,
        pca,
        runs,
        report,
    })
}
