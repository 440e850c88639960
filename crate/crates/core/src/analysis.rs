//! Drift reports across fine-tuned models and per-sample feature diffs.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::finetune::{evaluate, represent, LinearHead, TinyEncoder};
use crate::metrics::{self, CodeSet, MetricReport, OverlapNorm};
use crate::repr::{ClassEmbeddings, RepresentationSet};
use crate::sae::{SaeModel, SparseCode};

/// CSV header of [`DriftReport::to_csv`].
pub const DRIFT_CSV_HEADER: [&str; 8] = [
    "name",
    "cka_with_zeroshot",
    "fvu",
    "feature_overlap",
    "feature_entropy",
    "fta",
    "train_acc",
    "eval_acc",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub name: String,
    pub cka_with_zeroshot: f64,
    pub fvu: f64,
    pub feature_overlap: f64,
    pub feature_entropy: f64,
    pub fta: f64,
    pub train_acc: f64,
    pub eval_acc: f64,
}

impl DriftRow {
    pub fn metrics(&self) -> MetricReport {
        MetricReport {
            cka: self.cka_with_zeroshot,
            fvu: self.fvu,
            overlap: self.feature_overlap,
            entropy: self.feature_entropy,
            fta: self.fta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn row(&self, name: &str) -> Option<&DriftRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    /// Rows as CSV records in [`DRIFT_CSV_HEADER`] order; floats use Rust's
    /// shortest round-trip formatting.
    pub fn csv_records(&self) -> Vec<[String; 8]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.name.clone(),
                    r.cka_with_zeroshot.to_string(),
                    r.fvu.to_string(),
                    r.feature_overlap.to_string(),
                    r.feature_entropy.to_string(),
                    r.fta.to_string(),
                    r.train_acc.to_string(),
                    r.eval_acc.to_string(),
                ]
            })
            .collect()
    }
}

/// Everything shared by the rows of one report.
#[derive(Debug, Clone, Copy)]
pub struct AnalysisContext<'a> {
    pub enc0: &'a TinyEncoder,
    pub sae: &'a SaeModel,
    pub class_embeddings: &'a ClassEmbeddings,
    /// Labeled inputs to compare models on.
    pub eval: &'a RepresentationSet,
    /// Labeled training inputs, for the train accuracy column.
    pub train: &'a RepresentationSet,
    pub overlap_norm: OverlapNorm,
}

/// Zero-shot reference quantities computed once per report.
struct Reference {
    reps: RepresentationSet,
    codes: CodeSet,
}

fn reference(ctx: &AnalysisContext<'_>) -> Result<Reference> {
    check_dim("SAE width", ctx.sae.d(), ctx.enc0.d_out())?;
    check_dim("class embedding width", ctx.sae.d(), ctx.class_embeddings.d())?;
    let reps = represent(ctx.enc0, ctx.eval)?;
    let codes = CodeSet::encode(ctx.sae, &reps)?;
    Ok(Reference { reps, codes })
}

fn row(
    ctx: &AnalysisContext<'_>,
    reference: &Reference,
    name: &str,
    enc: &TinyEncoder,
    head: &LinearHead,
) -> Result<DriftRow> {
    if !enc.same_architecture(ctx.enc0) {
        return Err(Error::Dimension(format!(
            "model `{name}` does not share the zero-shot architecture"
        )));
    }
    let labels = ctx.eval.require_labels()?;
    let reps = represent(enc, ctx.eval)?;
    let codes = CodeSet::encode(ctx.sae, &reps)?;
    let recon = reps.map_rows(reps.d(), |r| ctx.sae.reconstruct(r))?;
    Ok(DriftRow {
        name: name.to_string(),
        cka_with_zeroshot: metrics::linear_cka(&reference.reps, &reps)?,
        fvu: metrics::fvu(&reps, &recon)?,
        feature_overlap: metrics::feature_overlap_with(&reference.codes, &codes, ctx.overlap_norm)?,
        feature_entropy: metrics::feature_entropy(&codes)?,
        fta: metrics::fta(&codes, ctx.sae, ctx.class_embeddings, labels)?,
        train_acc: evaluate(enc, head, ctx.train)?,
        eval_acc: evaluate(enc, head, ctx.eval)?,
    })
}

/// One row per `(name, encoder, head)`, each compared with `ctx.enc0`.
pub fn drift_report(
    ctx: &AnalysisContext<'_>,
    models: &[(&str, &TinyEncoder, &LinearHead)],
) -> Result<DriftReport> {
    let reference = reference(ctx)?;
    let rows = models
        .iter()
        .map(|(name, enc, head)| row(ctx, &reference, name, enc, head))
        .collect::<Result<Vec<_>>>()?;
    Ok(DriftReport { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureChange {
    /// Active only in the fine-tuned code.
    Added,
    /// Active only in the zero-shot code.
    Removed,
    /// Active in both.
    Reweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiffEntry {
    pub feature: usize,
    pub s0: f64,
    pub sft: f64,
    pub delta: f64,
    /// 1-based rank by value within the zero-shot code.
    pub rank_s0: Option<usize>,
    pub rank_sft: Option<usize>,
    pub change: FeatureChange,
}

fn ranks(code: &SparseCode) -> Vec<(usize, usize)> {
    let mut by_value: Vec<(usize, f64)> = code.iter().collect();
    by_value.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    by_value
        .into_iter()
        .enumerate()
        .map(|(r, (k, _))| (k, r + 1))
        .collect()
}

/// Union-support entries sorted by `|delta|` descending (ties by feature id),
/// truncated to `top` entries.
pub fn feature_diff(s0: &SparseCode, sft: &SparseCode, top: usize) -> Vec<FeatureDiffEntry> {
    let r0 = ranks(s0);
    let rft = ranks(sft);
    let rank_of = |table: &[(usize, usize)], k: usize| {
        table.iter().find(|&&(f, _)| f == k).map(|&(_, r)| r)
    };
    let mut entries: Vec<FeatureDiffEntry> = sft
        .union_with(s0)
        .map(|(k, ft, zs)| {
            let (in0, inft) = (s0.contains(k), sft.contains(k));
            let change = match (in0, inft) {
                (true, true) => FeatureChange::Reweighted,
                (false, _) => FeatureChange::Added,
                (true, false) => FeatureChange::Removed,
            };
            FeatureDiffEntry {
                feature: k,
                s0: zs,
                sft: ft,
                delta: ft - zs,
                rank_s0: rank_of(&r0, k),
                rank_sft: rank_of(&rft, k),
                change,
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.delta
            .abs()
            .total_cmp(&a.delta.abs())
            .then(a.feature.cmp(&b.feature))
    });
    entries.truncate(top);
    entries
}

/// Feature diff of one sample between the zero-shot and fine-tuned encoders.
pub fn sample_feature_diff(
    enc0: &TinyEncoder,
    enc_ft: &TinyEncoder,
    sae: &SaeModel,
    set: &RepresentationSet,
    sample: usize,
    top: usize,
) -> Result<Vec<FeatureDiffEntry>> {
    if sample >= set.n() {
        return Err(Error::Config(format!(
            "sample index {sample} out of range for {} rows",
            set.n()
        )));
    }
    let x = set.row(sample);
    let s0 = sae.encode(&enc0.forward(x)?)?;
    let sft = sae.encode(&enc_ft.forward(x)?)?;
    Ok(feature_diff(&s0, &sft, top))
}
