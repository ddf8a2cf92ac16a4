//! Debiased generative image-text retrieval scoring.
//!
//! Per-token log-probabilities from an image-conditioned language model are
//! aggregated into match scores ([`scoring`]), divided by a Monte-Carlo
//! estimate of the language prior raised to `alpha` ([`prior`], [`debias`]),
//! and evaluated under retrieval protocols ([`retrieval_eval`]). `alpha` is
//! tuned by grid search ([`alpha_tuner`]). [`synthworld`] provides exactly
//! enumerable worlds to check all of it against Bayes-optimal answers.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`, which is what the wire formats carry.

pub mod alpha_tuner;
pub mod debias;
pub mod error;
pub mod prior;
pub mod retrieval_eval;
pub mod scalar;
pub mod scorebank;
pub mod scoring;
pub mod synthworld;

pub use alpha_tuner::{cross_validate, grid_search, TuneResult};
pub use debias::{debias_log, effective_alpha, pmi_k_log, pmi_log, Alpha, BetaBias};
pub use error::{Error, Result};
pub use prior::{estimate_prior, prior_from_null, prior_from_testset, PriorSource, PriorTable};
pub use retrieval_eval::{eval_i2t, eval_paired, eval_recall_at_k, eval_t2i, EvalReport, Protocol};
pub use scalar::{log_mean_exp, logsumexp, Scalar};
pub use scorebank::{
    load_bank, matrix_for_task, Direction, Manifest, PairedTask, RetrievalTask, ScoreBank,
    ScoreRecord,
};
pub use scoring::{sequence_logprob, visual_gpt_score_log, AggregationMode};

pub type ScoreBank64 = ScoreBank<f64>;
pub type ScoreBank32 = ScoreBank<f32>;
pub type ScoreRecord64 = ScoreRecord<f64>;
pub type PriorTable64 = PriorTable<f64>;
pub type PriorTable32 = PriorTable<f32>;
