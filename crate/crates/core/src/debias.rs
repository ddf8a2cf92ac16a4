//! Language-prior debiasing and PMI scores, all in log form.
//!
//! With `cond = log P(t|i)` and `prior = log P(t)`:
//!
//! * `debias_log  = cond - alpha * prior`
//! * `pmi_log     = cond - prior`
//! * `pmi_k_log   = k * (cond + image) - image - prior`, where `image = log P(i)`
//!
//! For a fixed image, ranking texts by `pmi_k_log` with `k = 1 / alpha` is the
//! same as ranking by `debias_log` with `alpha`, because
//! `pmi_k_log = debias_log / alpha + (1 / alpha - 1) * image`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Debiasing strength in `[0, 1]`. `0` keeps the prior, `1` removes it.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub const ZERO: Alpha = Alpha(0.0);
    pub const ONE: Alpha = Alpha(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Alpha(value))
        } else {
            Err(Error::InvalidAlpha(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Alpha::new(value)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exponent by which a scorer over-weights the language prior:
/// `score(t|i) = P(t|i) * P(t)^beta`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BetaBias(f64);

impl BetaBias {
    pub const NONE: BetaBias = BetaBias(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(BetaBias(value))
        } else {
            Err(Error::InvalidBeta(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BetaBias {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        BetaBias::new(value)
    }
}

impl From<BetaBias> for f64 {
    fn from(b: BetaBias) -> f64 {
        b.0
    }
}

fn finite<F: Scalar>(name: &str, x: F) -> Result<F> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFiniteInput(format!("{name} = {x}")))
    }
}

/// `cond_log - alpha * prior_log`.
pub fn debias_log<F: Scalar>(cond_log: F, prior_log: F, alpha: Alpha) -> Result<F> {
    let cond = finite("cond_log", cond_log)?;
    let prior = finite("prior_log", prior_log)?;
    Ok(cond - F::of(alpha.value()) * prior)
}

/// Pointwise mutual information, `cond_log - prior_log`.
pub fn pmi_log<F: Scalar>(cond_log: F, prior_log: F) -> Result<F> {
    debias_log(cond_log, prior_log, Alpha::ONE)
}

/// `log PMI^k = k * log P(t, i) - log P(i) - log P(t)`.
pub fn pmi_k_log<F: Scalar>(cond_log: F, prior_log: F, image_log: F, k: F) -> Result<F> {
    if !(k >= F::one()) || !k.is_finite() {
        return Err(Error::InvalidExponent(k.as_f64()));
    }
    let cond = finite("cond_log", cond_log)?;
    let prior = finite("prior_log", prior_log)?;
    let image = finite("image_log", image_log)?;
    Ok(k * (cond + image) - image - prior)
}

/// Debiasing strength that is optimal for a scorer with bias `beta` when the
/// unbiased optimum is `alpha_hat`: `(alpha_hat + beta) / (1 + beta)`.
pub fn effective_alpha(beta: BetaBias, alpha_hat: f64) -> Result<Alpha> {
    let alpha_hat = Alpha::new(alpha_hat)?;
    let b = beta.value();
    Alpha::new(((alpha_hat.value() + b) / (1.0 + b)).clamp(0.0, 1.0))
}

/// Inverse of [`effective_alpha`] at `alpha_hat = 0`: the bias `beta` that makes
/// `alpha` optimal when train and test priors match. `None` for `alpha = 1`.
pub fn implied_beta(alpha: Alpha) -> Option<BetaBias> {
    let a = alpha.value();
    if a >= 1.0 {
        None
    } else {
        BetaBias::new(a / (1.0 - a)).ok()
    }
}
