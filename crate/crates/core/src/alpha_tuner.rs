//! Grid search for the debiasing strength and repeated random-split
//! cross-validation of it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::Alpha;
use crate::error::{Error, Result};

/// Default grid resolution.
pub const DEFAULT_STEP: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub n_tune: usize,
    pub n_eval: usize,
    pub alpha_star: f64,
    pub tune_objective: f64,
    pub heldout_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    /// Smallest grid alpha attaining the maximum of `curve`.
    pub alpha_star: Alpha,
    pub objective_at_star: f64,
    pub step: f64,
    pub curve: Vec<CurvePoint>,
    /// Number of random splits; 0 for a plain grid search.
    pub splits: usize,
    /// Mean held-out objective across splits (the plain objective at `alpha_star` if `splits == 0`).
    pub mean: f64,
    /// Population standard deviation of the held-out objective.
    pub std: f64,
    pub alpha_mean: f64,
    /// Population standard deviation of the per-split `alpha_star`.
    pub alpha_std: f64,
    pub std_kind: String,
    pub seed: Option<u64>,
    pub per_split: Vec<SplitResult>,
}

/// Grid `{0, step, 2*step, ..., 1}`, always containing both endpoints.
pub fn alpha_grid(step: f64) -> Result<Vec<Alpha>> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidStep(step));
    }
    let inv = 1.0 / step;
    let n = inv.round();
    let mut grid: Vec<f64> = if (inv - n).abs() < 1e-9 {
        // exact divisor: i / n avoids accumulated drift (500 * 0.001 is 0.5)
        let n = n as usize;
        (0..=n).map(|i| i as f64 / n as f64).collect()
    } else {
        let n = inv.floor() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    };
    if *grid.last().unwrap() < 1.0 {
        grid.push(1.0);
    }
    grid.into_iter().map(Alpha::new).collect()
}

fn checked(alpha: Alpha, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteInput(format!("objective at alpha {alpha} = {v}")))
    }
}

fn argmax_first(curve: &[CurvePoint]) -> usize {
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.objective > curve[best].objective {
            best = i;
        }
    }
    best
}

fn search_curve<E>(evaluate: &E, step: f64) -> Result<(Vec<CurvePoint>, usize)>
where
    E: Fn(Alpha) -> Result<f64> + Sync,
{
    let grid = alpha_grid(step)?;
    let curve = grid
        .par_iter()
        .map(|&a| {
            Ok(CurvePoint {
                alpha: a.value(),
                objective: checked(a, evaluate(a)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmax_first(&curve);
    Ok((curve, best))
}

/// Evaluates `evaluate` on the full grid and returns the first maximizer.
pub fn grid_search<E>(evaluate: E, step: f64) -> Result<TuneResult>
where
    E: Fn(Alpha) -> Result<f64> + Sync,
{
    let (curve, best) = search_curve(&evaluate, step)?;
    let star = curve[best];
    Ok(TuneResult {
        alpha_star: Alpha::new(star.alpha)?,
        objective_at_star: star.objective,
        step,
        curve,
        splits: 0,
        mean: star.objective,
        std: 0.0,
        alpha_mean: star.alpha,
        alpha_std: 0.0,
        std_kind: "population".into(),
        seed: None,
        per_split: Vec::new(),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

/// Indices `(tune, eval)` for one split: `floor(n * fraction)` items drawn
/// uniformly without replacement go to the tuning half. Each split has its
/// own ChaCha stream so results do not depend on evaluation order.
pub fn split_indices(n: usize, fraction: f64, seed: u64, split: usize) -> (Vec<usize>, Vec<usize>) {
    let n_tune = (n as f64 * fraction).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut tune = idx[..n_tune].to_vec();
    let mut eval = idx[n_tune..].to_vec();
    tune.sort_unstable();
    eval.sort_unstable();
    (tune, eval)
}

/// Repeated random-split tuning. For each split, alpha is grid-searched on the
/// tuning subset and the objective is measured on the complement at that alpha.
///
/// `objective(subset, alpha)` receives sorted item indices. The returned
/// `curve`/`alpha_star` come from a grid search over the whole dataset; `mean`
/// and `std` summarize the held-out objectives.
pub fn cross_validate<O>(
    n_items: usize,
    splits: usize,
    fraction: f64,
    seed: u64,
    step: f64,
    objective: O,
) -> Result<TuneResult>
where
    O: Fn(&[usize], Alpha) -> Result<f64> + Sync,
{
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::DatasetTooSmall(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n_tune = (n_items as f64 * fraction).floor() as usize;
    if n_items < 2 || n_tune == 0 || n_tune == n_items {
        return Err(Error::DatasetTooSmall(format!(
            "{n_items} items cannot be split with fraction {fraction}"
        )));
    }
    if splits == 0 {
        return Err(Error::DatasetTooSmall("at least one split is required".into()));
    }
    alpha_grid(step)?;

    let all: Vec<usize> = (0..n_items).collect();
    let (curve, best) = search_curve(&|a| objective(&all, a), step)?;
    let star = curve[best];

    let per_split = (0..splits)
        .map(|s| {
            let (tune, eval) = split_indices(n_items, fraction, seed, s);
            let (tune_curve, tune_best) = search_curve(&|a| objective(&tune, a), step)?;
            let alpha = Alpha::new(tune_curve[tune_best].alpha)?;
            let heldout = checked(alpha, objective(&eval, alpha)?)?;
            Ok(SplitResult {
                split: s,
                n_tune: tune.len(),
                n_eval: eval.len(),
                alpha_star: alpha.value(),
                tune_objective: tune_curve[tune_best].objective,
                heldout_objective: heldout,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let heldout: Vec<f64> = per_split.iter().map(|s| s.heldout_objective).collect();
    let alphas: Vec<f64> = per_split.iter().map(|s| s.alpha_star).collect();
    let (mean, std) = mean_std(&heldout);
    let (alpha_mean, alpha_std) = mean_std(&alphas);
    Ok(TuneResult {
        alpha_star: Alpha::new(star.alpha)?,
        objective_at_star: star.objective,
        step,
        curve,
        splits,
        mean,
        std,
        alpha_mean,
        alpha_std,
        std_kind: "population".into(),
        seed: Some(seed),
        per_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_contains_endpoints() {
        let g = alpha_grid(0.001).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(g[0].value(), 0.0);
        assert_eq!(g[500].value(), 0.5);
        assert_eq!(g[1000].value(), 1.0);
        let g = alpha_grid(0.3).unwrap();
        let v: Vec<f64> = g.iter().map(|a| a.value()).collect();
        assert_eq!(v.len(), 5);
        assert_eq!(*v.last().unwrap(), 1.0);
        assert!((v[3] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn invalid_steps() {
        for s in [0.0, -0.1, 0.51, f64::NAN] {
            assert!(matches!(alpha_grid(s), Err(Error::InvalidStep(_))), "{s}");
        }
        assert!(alpha_grid(0.5).is_ok());
    }

    #[test]
    fn constant_objective_picks_zero() {
        let r = grid_search(|_| Ok(1.0), DEFAULT_STEP).unwrap();
        assert_eq!(r.alpha_star, Alpha::ZERO);
        assert_eq!(r.curve.len(), 1001);
    }

    #[test]
    fn unimodal_objective() {
        let r = grid_search(|a| Ok(-(a.value() - 0.5).powi(2)), DEFAULT_STEP).unwrap();
        assert!((r.alpha_star.value() - 0.5).abs() <= DEFAULT_STEP);
        let r = grid_search(|a| Ok(-(a.value() - 0.3141).powi(2)), 0.01).unwrap();
        assert!((r.alpha_star.value() - 0.31).abs() < 1e-12);
    }

    #[test]
    fn curve_endpoints_match_direct_calls() {
        let f = |a: Alpha| Ok((3.0 * a.value()).sin());
        let r = grid_search(f, 0.001).unwrap();
        assert_eq!(r.curve[0].objective, f(Alpha::ZERO).unwrap());
        assert_eq!(r.curve.last().unwrap().objective, f(Alpha::ONE).unwrap());
    }

    #[test]
    fn non_finite_objective_fails() {
        assert!(matches!(
            grid_search(|a| Ok(if a.value() > 0.5 { f64::NAN } else { 0.0 }), 0.1),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn two_items_one_split() {
        let r = cross_validate(2, 1, 0.5, 3, 0.1, |idx, a| Ok(idx[0] as f64 + a.value())).unwrap();
        assert_eq!(r.per_split.len(), 1);
        assert_eq!(r.per_split[0].n_tune, 1);
        assert_eq!(r.per_split[0].n_eval, 1);
        assert_eq!(r.std, 0.0);
        assert_eq!(r.alpha_std, 0.0);
        assert_eq!(r.per_split[0].alpha_star, 1.0);
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let obj = |idx: &[usize], a: Alpha| {
            Ok(idx.iter().map(|&i| -((i as f64 / 20.0) - a.value()).abs()).sum::<f64>() / idx.len() as f64)
        };
        let a = cross_validate(20, 10, 0.5, 42, 0.01, obj).unwrap();
        let b = cross_validate(20, 10, 0.5, 42, 0.01, obj).unwrap();
        assert_eq!(a, b);
        let c = cross_validate(20, 10, 0.5, 43, 0.01, obj).unwrap();
        assert_ne!(a.per_split, c.per_split);
        assert!(a.std >= 0.0);
    }

    #[test]
    fn splits_partition_items() {
        let (tune, eval) = split_indices(11, 0.5, 9, 4);
        assert_eq!(tune.len(), 5);
        assert_eq!(eval.len(), 6);
        let mut all: Vec<usize> = tune.iter().chain(&eval).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
    }

    #[test]
    fn too_small_datasets() {
        let obj = |_: &[usize], _: Alpha| Ok(0.0);
        assert!(matches!(cross_validate(1, 1, 0.5, 0, 0.1, obj), Err(Error::DatasetTooSmall(_))));
        assert!(matches!(cross_validate(3, 1, 0.1, 0, 0.1, obj), Err(Error::DatasetTooSmall(_))));
        assert!(matches!(cross_validate(3, 1, 1.0, 0, 0.1, obj), Err(Error::DatasetTooSmall(_))));
        assert!(matches!(cross_validate(3, 0, 0.5, 0, 0.1, obj), Err(Error::DatasetTooSmall(_))));
    }
}
