//! Sequence-level aggregation of per-token log-probabilities.
//!
//! Everything stays in the log domain. [`visual_gpt_score_log`] is the
//! length-normalized match score (the log of the geometric mean of the token
//! probabilities); [`sequence_logprob`] is the raw autoregressive log-likelihood.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How token log-probabilities are reduced to one sequence score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Mean of the token log-probabilities.
    #[default]
    MeanTokenLog,
    /// Sum of the token log-probabilities, `log P(t | i)`.
    SumLog,
}

impl AggregationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::MeanTokenLog => "mean_token_log",
            AggregationMode::SumLog => "sum_log",
        }
    }

    pub fn aggregate<F: Scalar>(self, token_logprobs: &[F]) -> Result<F> {
        match self {
            AggregationMode::MeanTokenLog => visual_gpt_score_log(token_logprobs),
            AggregationMode::SumLog => sequence_logprob(token_logprobs),
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean_token_log" | "mean" => Ok(AggregationMode::MeanTokenLog),
            "sum_log" | "sum" => Ok(AggregationMode::SumLog),
            other => Err(format!("unknown aggregation mode {other:?}")),
        }
    }
}

/// Mean per-token log-probability. `exp` of the result is the match score.
pub fn visual_gpt_score_log<F: Scalar>(token_logprobs: &[F]) -> Result<F> {
    let total = sequence_logprob(token_logprobs)?;
    Ok(total / F::of(token_logprobs.len() as f64))
}

/// Sum of per-token log-probabilities.
pub fn sequence_logprob<F: Scalar>(token_logprobs: &[F]) -> Result<F> {
    if token_logprobs.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(token_logprobs.iter().copied().sum())
}
