//! Retrieval protocols: image-to-text accuracy, Recall@K, text-to-image
//! ranking, and the paired text/image/group scores.
//!
//! All comparisons are strict. A positive that ties with any negative loses
//! that comparison, which makes every metric invariant to candidate order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::{debias_log, Alpha};
use crate::error::{Error, Result};
use crate::prior::{PriorSource, PriorTable};
use crate::scalar::Scalar;
use crate::scorebank::{Direction, PairedTask, RetrievalTask, ScoreBank};
use crate::scoring::AggregationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    I2tAccuracy,
    RecallAtK,
    Paired,
    T2iRecall,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::I2tAccuracy => "i2t_accuracy",
            Protocol::RecallAtK => "recall_at_k",
            Protocol::Paired => "paired",
            Protocol::T2iRecall => "t2i_recall",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "i2t_accuracy" | "i2t" => Ok(Protocol::I2tAccuracy),
            "recall_at_k" | "recall" => Ok(Protocol::RecallAtK),
            "paired" => Ok(Protocol::Paired),
            "t2i_recall" | "t2i" => Ok(Protocol::T2iRecall),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// Metrics are percentages in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub metrics: BTreeMap<String, f64>,
    pub alpha: Alpha,
    pub aggregation: AggregationMode,
    pub prior_source: Option<PriorSource>,
    pub n_tasks: usize,
    pub seed: Option<u64>,
}

impl EvalReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

pub const METRIC_ACCURACY: &str = "accuracy";
pub const METRIC_TEXT: &str = "text";
pub const METRIC_IMAGE: &str = "image";
pub const METRIC_GROUP: &str = "group";

pub fn recall_metric_name(k: usize) -> String {
    format!("R@{k}")
}

/// 1-based rank of the positive, counting every candidate scoring at least as
/// high as it (ties count against the positive).
pub fn positive_rank<F: Scalar>(scores: &[F], positive: usize) -> usize {
    let p = scores[positive];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| j != positive && !(s < p))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairedOutcome {
    pub text: bool,
    pub image: bool,
    pub group: bool,
}

/// `m[x][y]` is the score of text `y` given image `x`; text `j` is the positive
/// for image `j`.
pub fn paired_outcome<F: Scalar>(m: [[F; 2]; 2]) -> PairedOutcome {
    let text = m[0][0] > m[0][1] && m[1][1] > m[1][0];
    let image = m[0][0] > m[1][0] && m[1][1] > m[0][1];
    PairedOutcome {
        text,
        image,
        group: text && image,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskOutcome {
    pub task_id: String,
    pub rank: usize,
    pub n_candidates: usize,
}

/// Debiased score of `text` given `image`, as a closure over a bank and prior.
pub fn debiased_scorer<'a, F: Scalar>(
    bank: &'a ScoreBank<F>,
    prior: &'a PriorTable<F>,
    alpha: Alpha,
    aggregation: AggregationMode,
) -> impl Fn(&str, &str) -> Result<F> + Sync + 'a {
    move |image, text| {
        let cond = bank.score(image, text, aggregation)?;
        let prior = prior.get(text)?;
        debias_log(cond, prior, alpha)
    }
}

/// Undebiased conditional score.
pub fn conditional_scorer<'a, F: Scalar>(
    bank: &'a ScoreBank<F>,
    aggregation: AggregationMode,
) -> impl Fn(&str, &str) -> Result<F> + Sync + 'a {
    move |image, text| bank.score(image, text, aggregation)
}

fn check_direction(tasks: &[RetrievalTask], expected: Direction) -> Result<()> {
    match tasks.iter().find(|t| t.direction != expected) {
        Some(t) => Err(Error::WrongDirection {
            task_id: t.task_id.clone(),
            expected: expected.as_str(),
            found: t.direction.as_str(),
        }),
        None => Ok(()),
    }
}

/// Scores every candidate of every task with `scorer(image, text)` and
/// returns the rank of each positive, in task order.
pub fn rank_tasks<F, S>(tasks: &[RetrievalTask], scorer: &S) -> Result<Vec<TaskOutcome>>
where
    F: Scalar,
    S: Fn(&str, &str) -> Result<F> + Sync,
{
    tasks
        .par_iter()
        .map(|task| {
            let scores = (0..task.candidate_ids.len())
                .map(|idx| {
                    let (image, text) = task.pair(idx);
                    scorer(image, text)
                })
                .collect::<Result<Vec<F>>>()?;
            Ok(TaskOutcome {
                task_id: task.task_id.clone(),
                rank: positive_rank(&scores, task.positive_index),
                n_candidates: scores.len(),
            })
        })
        .collect()
}

pub fn paired_outcomes<F, S>(pairs: &[PairedTask], scorer: &S) -> Result<Vec<PairedOutcome>>
where
    F: Scalar,
    S: Fn(&str, &str) -> Result<F> + Sync,
{
    pairs
        .par_iter()
        .map(|pair| {
            let s = |x: usize, y: usize| scorer(&pair.image_ids[x], &pair.text_ids[y]);
            Ok(paired_outcome([[s(0, 0)?, s(0, 1)?], [s(1, 0)?, s(1, 1)?]]))
        })
        .collect()
}

/// Conditional and prior log scores of every candidate of every task, looked
/// up once so that sweeping alpha costs only arithmetic.
#[derive(Debug, Clone)]
pub struct PreparedTasks<F> {
    tasks: Vec<PreparedTask<F>>,
}

#[derive(Debug, Clone)]
struct PreparedTask<F> {
    task_id: String,
    cond: Vec<F>,
    prior: Vec<F>,
    positive: usize,
}

impl<F: Scalar> PreparedTasks<F> {
    /// Image-to-text tasks with per-candidate priors.
    pub fn new(
        bank: &ScoreBank<F>,
        tasks: &[RetrievalTask],
        prior: &PriorTable<F>,
        aggregation: AggregationMode,
    ) -> Result<Self> {
        check_direction(tasks, Direction::ImageToText)?;
        Self::build(bank, tasks, aggregation, |text| prior.get(text))
    }

    /// Tasks scored by the conditional alone (the prior term is zero).
    pub fn conditional(
        bank: &ScoreBank<F>,
        tasks: &[RetrievalTask],
        aggregation: AggregationMode,
    ) -> Result<Self> {
        Self::build(bank, tasks, aggregation, |_| Ok(F::zero()))
    }

    fn build<P>(
        bank: &ScoreBank<F>,
        tasks: &[RetrievalTask],
        aggregation: AggregationMode,
        prior_of: P,
    ) -> Result<Self>
    where
        P: Fn(&str) -> Result<F>,
    {
        let tasks = tasks
            .iter()
            .map(|task| {
                let mut cond = Vec::with_capacity(task.candidate_ids.len());
                let mut prior = Vec::with_capacity(task.candidate_ids.len());
                for idx in 0..task.candidate_ids.len() {
                    let (image, text) = task.pair(idx);
                    let c = bank.score(image, text, aggregation)?;
                    let p = prior_of(text)?;
                    // validates finiteness once, up front
                    debias_log(c, p, Alpha::ONE)?;
                    cond.push(c);
                    prior.push(p);
                }
                Ok(PreparedTask {
                    task_id: task.task_id.clone(),
                    cond,
                    prior,
                    positive: task.positive_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedTasks { tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn min_candidates(&self) -> usize {
        self.tasks.iter().map(|t| t.cond.len()).min().unwrap_or(0)
    }

    fn rank_of(task: &PreparedTask<F>, alpha: Alpha) -> Result<usize> {
        let score = |j: usize| debias_log(task.cond[j], task.prior[j], alpha);
        let p = score(task.positive)?;
        let mut rank = 1;
        for j in 0..task.cond.len() {
            if j != task.positive && !(score(j)? < p) {
                rank += 1;
            }
        }
        Ok(rank)
    }

    /// Per-task outcomes in task order.
    pub fn outcomes(&self, alpha: Alpha) -> Result<Vec<TaskOutcome>> {
        self.tasks
            .par_iter()
            .map(|t| {
                Ok(TaskOutcome {
                    task_id: t.task_id.clone(),
                    rank: Self::rank_of(t, alpha)?,
                    n_candidates: t.cond.len(),
                })
            })
            .collect()
    }

    /// Percent of tasks in `subset` whose positive ranks within the top `k`.
    pub fn recall_on(&self, subset: &[usize], alpha: Alpha, k: usize) -> Result<f64> {
        nonempty(subset.len())?;
        let hits = subset
            .par_iter()
            .map(|&i| Self::rank_of(&self.tasks[i], alpha).map(|r| usize::from(r <= k)))
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        Ok(percent(hits, subset.len()))
    }

    pub fn recall(&self, alpha: Alpha, k: usize) -> Result<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.recall_on(&all, alpha, k)
    }

    pub fn accuracy(&self, alpha: Alpha) -> Result<f64> {
        self.recall(alpha, 1)
    }
}

/// Paired-task analogue of [`PreparedTasks`].
#[derive(Debug, Clone)]
pub struct PreparedPairs<F> {
    pairs: Vec<([[F; 2]; 2], [F; 2])>,
}

impl<F: Scalar> PreparedPairs<F> {
    pub fn new(
        bank: &ScoreBank<F>,
        pairs: &[PairedTask],
        prior: &PriorTable<F>,
        aggregation: AggregationMode,
    ) -> Result<Self> {
        let pairs = pairs
            .iter()
            .map(|pair| {
                let s = |x: usize, y: usize| bank.score(&pair.image_ids[x], &pair.text_ids[y], aggregation);
                let cond = [[s(0, 0)?, s(0, 1)?], [s(1, 0)?, s(1, 1)?]];
                let pri = [prior.get(&pair.text_ids[0])?, prior.get(&pair.text_ids[1])?];
                for row in &cond {
                    for (c, p) in row.iter().zip(&pri) {
                        debias_log(*c, *p, Alpha::ONE)?;
                    }
                }
                Ok((cond, pri))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedPairs { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn outcome(&self, idx: usize, alpha: Alpha) -> Result<PairedOutcome> {
        let (cond, pri) = &self.pairs[idx];
        let d = |x: usize, y: usize| debias_log(cond[x][y], pri[y], alpha);
        Ok(paired_outcome([[d(0, 0)?, d(0, 1)?], [d(1, 0)?, d(1, 1)?]]))
    }

    pub fn outcomes(&self, alpha: Alpha) -> Result<Vec<PairedOutcome>> {
        (0..self.len()).into_par_iter().map(|i| self.outcome(i, alpha)).collect()
    }

    /// `[text, image, group]` percentages over `subset`.
    pub fn scores_on(&self, subset: &[usize], alpha: Alpha) -> Result<[f64; 3]> {
        nonempty(subset.len())?;
        let counts = subset
            .par_iter()
            .map(|&i| {
                self.outcome(i, alpha)
                    .map(|o| [usize::from(o.text), usize::from(o.image), usize::from(o.group)])
            })
            .try_reduce(|| [0; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))?;
        let n = subset.len();
        Ok([percent(counts[0], n), percent(counts[1], n), percent(counts[2], n)])
    }

    pub fn scores(&self, alpha: Alpha) -> Result<[f64; 3]> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.scores_on(&all, alpha)
    }
}

fn percent(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total as f64
}

fn nonempty(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::DatasetTooSmall("no tasks to evaluate".into()))
    } else {
        Ok(())
    }
}

/// Top-1 accuracy of `scorer` on image-to-text tasks.
pub fn i2t_accuracy_with<F, S>(tasks: &[RetrievalTask], scorer: &S) -> Result<f64>
where
    F: Scalar,
    S: Fn(&str, &str) -> Result<F> + Sync,
{
    nonempty(tasks.len())?;
    let outcomes = rank_tasks(tasks, scorer)?;
    Ok(percent(outcomes.iter().filter(|o| o.rank == 1).count(), tasks.len()))
}

/// Text/image/group scores of `scorer` on paired tasks.
pub fn paired_scores_with<F, S>(pairs: &[PairedTask], scorer: &S) -> Result<[f64; 3]>
where
    F: Scalar,
    S: Fn(&str, &str) -> Result<F> + Sync,
{
    nonempty(pairs.len())?;
    let outcomes = paired_outcomes(pairs, scorer)?;
    let count = |f: fn(&PairedOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count();
    let n = pairs.len();
    Ok([
        percent(count(|o| o.text), n),
        percent(count(|o| o.image), n),
        percent(count(|o| o.group), n),
    ])
}

pub fn eval_i2t<F: Scalar>(
    bank: &ScoreBank<F>,
    tasks: &[RetrievalTask],
    prior: &PriorTable<F>,
    alpha: Alpha,
    aggregation: AggregationMode,
) -> Result<EvalReport> {
    let prepared = PreparedTasks::new(bank, tasks, prior, aggregation)?;
    let acc = prepared.accuracy(alpha)?;
    Ok(EvalReport {
        protocol: Protocol::I2tAccuracy,
        metrics: BTreeMap::from([(METRIC_ACCURACY.to_owned(), acc)]),
        alpha,
        aggregation,
        prior_source: Some(prior.source),
        n_tasks: tasks.len(),
        seed: None,
    })
}

pub fn eval_recall_at_k<F: Scalar>(
    bank: &ScoreBank<F>,
    tasks: &[RetrievalTask],
    prior: &PriorTable<F>,
    alpha: Alpha,
    k_values: &[usize],
    aggregation: AggregationMode,
) -> Result<EvalReport> {
    check_direction(tasks, Direction::ImageToText)?;
    check_k(tasks, k_values)?;
    nonempty(tasks.len())?;
    let outcomes = PreparedTasks::new(bank, tasks, prior, aggregation)?.outcomes(alpha)?;
    Ok(EvalReport {
        protocol: Protocol::RecallAtK,
        metrics: recall_metrics(&outcomes, k_values),
        alpha,
        aggregation,
        prior_source: Some(prior.source),
        n_tasks: tasks.len(),
        seed: None,
    })
}

fn check_k(tasks: &[RetrievalTask], k_values: &[usize]) -> Result<()> {
    for &k in k_values {
        if let Some(t) = tasks.iter().find(|t| k == 0 || k > t.candidate_ids.len()) {
            return Err(Error::InvalidK {
                k,
                task_id: t.task_id.clone(),
                n_candidates: t.candidate_ids.len(),
            });
        }
    }
    if k_values.is_empty() {
        return Err(Error::InvalidK {
            k: 0,
            task_id: String::new(),
            n_candidates: 0,
        });
    }
    Ok(())
}

fn recall_metrics(outcomes: &[TaskOutcome], k_values: &[usize]) -> BTreeMap<String, f64> {
    k_values
        .iter()
        .map(|&k| {
            let hits = outcomes.iter().filter(|o| o.rank <= k).count();
            (recall_metric_name(k), percent(hits, outcomes.len()))
        })
        .collect()
}

pub fn eval_paired<F: Scalar>(
    bank: &ScoreBank<F>,
    pairs: &[PairedTask],
    prior: &PriorTable<F>,
    alpha: Alpha,
    aggregation: AggregationMode,
) -> Result<EvalReport> {
    let [text, image, group] = PreparedPairs::new(bank, pairs, prior, aggregation)?.scores(alpha)?;
    Ok(EvalReport {
        protocol: Protocol::Paired,
        metrics: BTreeMap::from([
            (METRIC_TEXT.to_owned(), text),
            (METRIC_IMAGE.to_owned(), image),
            (METRIC_GROUP.to_owned(), group),
        ]),
        alpha,
        aggregation,
        prior_source: Some(prior.source),
        n_tasks: pairs.len(),
        seed: None,
    })
}

/// Text-to-image retrieval ranks images by the raw conditional score; the
/// image prior is taken as uniform so no division is applied.
pub fn eval_t2i<F: Scalar>(
    bank: &ScoreBank<F>,
    tasks: &[RetrievalTask],
    aggregation: AggregationMode,
) -> Result<EvalReport> {
    eval_t2i_at_k(bank, tasks, &[1], aggregation)
}

pub fn eval_t2i_at_k<F: Scalar>(
    bank: &ScoreBank<F>,
    tasks: &[RetrievalTask],
    k_values: &[usize],
    aggregation: AggregationMode,
) -> Result<EvalReport> {
    check_direction(tasks, Direction::TextToImage)?;
    check_k(tasks, k_values)?;
    nonempty(tasks.len())?;
    let outcomes = PreparedTasks::conditional(bank, tasks, aggregation)?.outcomes(Alpha::ZERO)?;
    Ok(EvalReport {
        protocol: Protocol::T2iRecall,
        metrics: recall_metrics(&outcomes, k_values),
        alpha: Alpha::ZERO,
        aggregation,
        prior_source: None,
        n_tasks: tasks.len(),
        seed: None,
    })
}
