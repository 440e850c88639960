use std::fs;
use std::path::Path;

use serde::Serialize;

use saeft_core::analysis::{drift_report, sample_feature_diff, AnalysisContext, FeatureDiffEntry};
use saeft_core::finetune::{
    self, load_encoder, load_head, represent, save_encoder, save_head, FinetuneData, FrozenModels,
};
use saeft_core::metrics::OverlapNorm;
use saeft_core::pipeline::{run_pipeline, PipelineConfig, ZERO_SHOT};
use saeft_core::regularize::pca_fit;
use saeft_core::repr::{load_representations, save_representations, split, synth_superposition, SynthConfig};
use saeft_core::sae::{self, default_architecture, init_sae, load_sae, save_sae, SaeTrainConfig};
use saeft_core::{FinetuneConfig, LinearHead, RegKind, RegularizerSpec, TinyEncoder};

use crate::error::{CliError, CliResult};
use crate::io::{
    ensure_dir, load_class_embeddings, read_config, save_class_embeddings, write_json, write_report,
};
use crate::{AnalyzeArgs, DiffArgs, FinetuneArgs, InitEncoderArgs, PipelineArgs, SynthArgs, TrainSaeArgs};

pub const TRAIN_FILE: &str = "train.rds";
pub const EVAL_FILE: &str = "eval.rds";
pub const CLASS_EMBEDDINGS_FILE: &str = "class_embeddings.json";

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let cfg: SynthConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => PipelineConfig::default().data,
    };
    let out = synth_superposition(&cfg)?;
    let (train, eval) = split(&out.set, a.train_fraction, a.split_seed)?;
    ensure_dir(&a.out_dir)?;
    save_representations(&train, a.out_dir.join(TRAIN_FILE))?;
    save_representations(&eval, a.out_dir.join(EVAL_FILE))?;
    save_class_embeddings(&a.out_dir.join(CLASS_EMBEDDINGS_FILE), &out.class_embeddings)
}

pub fn init_encoder(a: &InitEncoderArgs) -> CliResult<()> {
    let enc = if a.hidden.is_empty() {
        TinyEncoder::identity_mlp(a.d)?
    } else {
        let mut dims = vec![a.d];
        dims.extend(&a.hidden);
        dims.push(a.d);
        TinyEncoder::random(&dims, a.seed)?
    };
    save_encoder(&enc, &a.out)?;
    Ok(())
}

pub fn train_sae(a: &TrainSaeArgs) -> CliResult<()> {
    let set = load_representations(&a.data)?;
    let d = set.d();
    let (p, k) = match (a.p, a.k) {
        (Some(p), Some(k)) => (p, k),
        (p, k) => {
            let (dp, dk) = default_architecture(d)?;
            (p.unwrap_or(dp), k.unwrap_or(dk))
        }
    };
    if k == 0 || k > p {
        return Err(CliError::usage(format!("K={k} must lie in [1, p={p}]")));
    }
    let mut cfg: SaeTrainConfig = match &a.config {
        Some(path) => read_config(path)?,
        None => SaeTrainConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    let model = init_sae(d, p, k, a.init_seed)?;
    let (model, log) = sae::train_sae(&set, &cfg, model)?;
    save_sae(&model, &a.out)?;
    write_json(&a.log, &log)
}

fn head_for(a: &FinetuneArgs, d: usize) -> CliResult<LinearHead> {
    match (&a.head, &a.class_embeddings) {
        (Some(p), _) => Ok(load_head(p)?),
        (None, Some(p)) => {
            let emb = load_class_embeddings(p)?;
            if emb.d() != d {
                return Err(CliError::usage(format!(
                    "class embeddings have width {}, encoder outputs {d}",
                    emb.d()
                )));
            }
            Ok(LinearHead::from_class_embeddings(&emb, a.tau)?)
        }
        (None, None) => Err(CliError::usage("finetune needs --head or --class-embeddings")),
    }
}

pub fn finetune(a: &FinetuneArgs) -> CliResult<()> {
    let train = load_representations(&a.train)?;
    let eval = a.eval.as_deref().map(load_representations).transpose()?;
    let enc0 = load_encoder(&a.encoder)?;
    let head = head_for(a, enc0.d_out())?;

    let mut cfg: FinetuneConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => FinetuneConfig::default(),
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.learning_rate = lr;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.reg = if a.reg == RegKind::None {
        RegularizerSpec::none()
    } else {
        RegularizerSpec::new(a.reg, a.lambda_resid, a.lambda_kind, a.lambda)
    };

    if a.reg.needs_sae() && a.sae.is_none() {
        return Err(CliError::usage(format!("--reg {} requires --sae", a.reg)));
    }
    let sae = a.sae.as_deref().map(load_sae).transpose()?;
    let pca = if a.reg == RegKind::Pca {
        Some(pca_fit(&represent(&enc0, &train)?, a.pca_components)?)
    } else {
        None
    };
    let out = finetune::finetune(
        &enc0,
        FrozenModels {
            sae: sae.as_ref(),
            pca: pca.as_ref(),
        },
        &head,
        FinetuneData {
            train: &train,
            eval: eval.as_ref(),
        },
        &cfg,
    )?;

    ensure_dir(&a.out_dir)?;
    save_encoder(&enc0, a.out_dir.join("zero_shot.enc"))?;
    save_encoder(&out.encoder, a.out_dir.join("finetuned.enc"))?;
    save_head(&out.head, a.out_dir.join("head.hed"))?;
    write_json(&a.out_dir.join("run_log.json"), &out.log)
}

fn parse_model(spec: &str) -> CliResult<(String, String, String)> {
    let bad = || CliError::usage(format!("--model expects NAME=ENCODER,HEAD, got `{spec}`"));
    let (name, rest) = spec.split_once('=').ok_or_else(bad)?;
    let (enc, head) = rest.split_once(',').ok_or_else(bad)?;
    if name.is_empty() {
        return Err(bad());
    }
    Ok((name.to_string(), enc.to_string(), head.to_string()))
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<()> {
    let overlap_norm = match a.overlap_norm.as_str() {
        "k" => OverlapNorm::K,
        "union" => OverlapNorm::Union,
        other => return Err(CliError::usage(format!("unknown overlap norm `{other}`"))),
    };
    let enc0 = load_encoder(&a.zero_shot)?;
    let sae = load_sae(&a.sae)?;
    let eval = load_representations(&a.eval)?;
    let train = match &a.train {
        Some(p) => load_representations(p)?,
        None => eval.clone(),
    };
    let emb = load_class_embeddings(&a.class_embeddings)?;
    let head0 = LinearHead::from_class_embeddings(&emb, a.tau)?;

    let mut loaded = Vec::new();
    for spec in &a.models {
        let (name, enc, head) = parse_model(spec)?;
        loaded.push((name, load_encoder(enc)?, load_head(head)?));
    }
    let mut models = vec![(ZERO_SHOT, &enc0, &head0)];
    models.extend(loaded.iter().map(|(n, e, h)| (n.as_str(), e, h)));

    let ctx = AnalysisContext {
        enc0: &enc0,
        sae: &sae,
        class_embeddings: &emb,
        eval: &eval,
        train: &train,
        overlap_norm,
    };
    let report = drift_report(&ctx, &models)?;
    write_report(&report, &a.out_json, &a.out_csv)
}

#[derive(Serialize)]
struct DiffOutput {
    sample: usize,
    entries: Vec<FeatureDiffEntry>,
}

pub fn diff(a: &DiffArgs) -> CliResult<()> {
    let enc0 = load_encoder(&a.zero_shot)?;
    let enc_ft = load_encoder(&a.finetuned)?;
    let sae = load_sae(&a.sae)?;
    let set = load_representations(&a.data)?;
    let entries = sample_feature_diff(&enc0, &enc_ft, &sae, &set, a.sample, a.top)?;
    let out = DiffOutput {
        sample: a.sample,
        entries,
    };
    match &a.out {
        Some(p) => write_json(p, &out),
        None => {
            println!("{}", serde_json::to_string_pretty(&out).expect("diff serializes"));
            Ok(())
        }
    }
}

pub fn pipeline(a: &PipelineArgs) -> CliResult<()> {
    let cfg: PipelineConfig = match &a.config {
        Some(p) => read_config(p)?,
        None => PipelineConfig::default(),
    };
    let out = run_pipeline(&cfg)?;
    let dir = &a.out_dir;
    ensure_dir(dir)?;
    save_representations(&out.train, dir.join(TRAIN_FILE))?;
    save_representations(&out.eval, dir.join(EVAL_FILE))?;
    save_class_embeddings(&dir.join(CLASS_EMBEDDINGS_FILE), &out.class_embeddings)?;
    save_sae(&out.sae, dir.join("sae.sae"))?;
    write_json(&dir.join("sae_log.json"), &out.sae_log)?;
    save_encoder(&out.encoder0, dir.join("zero_shot.enc"))?;
    save_head(&out.head0, dir.join("zero_shot.hed"))?;
    for run in &out.runs {
        let run_dir = dir.join("runs").join(&run.name);
        ensure_dir(&run_dir)?;
        save_encoder(&run.output.encoder, run_dir.join("finetuned.enc"))?;
        save_head(&run.output.head, run_dir.join("head.hed"))?;
        write_json(&run_dir.join("run_log.json"), &run.output.log)?;
    }
    write_json(&dir.join("config.json"), &cfg)?;
    write_report(&out.report, &dir.join("report.json"), &dir.join("report.csv"))?;
    print_summary(&out.report, dir)
}

fn print_summary(report: &saeft_core::analysis::DriftReport, dir: &Path) -> CliResult<()> {
    for r in &report.rows {
        println!(
            "{:<12} cka {:.3} fvu {:.3} overlap {:.3} entropy {:.3} fta {:.3} eval_acc {:.3}",
            r.name, r.cka_with_zeroshot, r.fvu, r.feature_overlap, r.feature_entropy, r.fta, r.eval_acc
        );
    }
    let shown = fs::canonicalize(dir).unwrap_or_else(|_| dir.to_path_buf());
    println!("artifacts written to {}", shown.display());
    Ok(())
}
