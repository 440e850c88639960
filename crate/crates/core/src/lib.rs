//! SAE-regularized fine-tuning and representation-drift analysis.
//!
//! The crate covers the full toy pipeline: synthetic representation data,
//! Top-K sparse autoencoders, drift regularizers, exact and entropic optimal
//! transport, similarity and feature metrics, and a small fine-tuning loop.

// `!(x > 0.0)` is used on purpose so NaN falls into the rejection branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod binio;
pub mod analysis;
pub mod error;
pub mod finetune;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod ot;
pub mod pipeline;
pub mod regularize;
pub mod repr;
pub mod sae;

pub use error::{Error, Result};
pub use finetune::{FinetuneConfig, LinearHead, RunLog, TinyEncoder};
pub use metrics::{CodeSet, MetricReport};
pub use regularize::{RegKind, RegularizerSpec};
pub use repr::{ClassEmbeddings, RepresentationSet};
pub use sae::{SaeModel, SparseCode};
