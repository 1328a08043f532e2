//! Meta-evaluation of automated attribution (AutoAIS) factuality evaluators.
//!
//! Given a labeled claim/document corpus and one or more evaluator score files, the
//! crate computes:
//!
//! * per-slice TPR/TNR/FPR/FNR and balanced accuracy ([`metrics`]),
//! * pairwise evaluator agreement as IoU of predicted-label sets ([`consistency`]),
//! * system-level error-rate bias, headroom and bias-correcting calibration ([`quantify`]),
//! * significance-tested system rankings and rank correlations ([`rank`]),
//! * ROUGE-2 precision binning of error rates ([`overlap`]),
//! * document chunking, chunk-max aggregation and R2-diff flip analysis ([`chunking`]).
//!
//! [`report`] ties these together into the `audit` command-line tool.

pub mod chunking;
pub mod consistency;
pub mod corpus;
pub mod metrics;
pub mod overlap;
pub mod quantify;
pub mod rank;
pub mod report;

pub use corpus::{ClaimRecord, Corpus, PredictionSet, TaskGroup};
pub use metrics::{binarize, Label, RateBreakdown};

/// Order-preserving map, parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}
