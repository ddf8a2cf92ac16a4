//! Exactly enumerable synthetic image-text worlds.
//!
//! A [`World`] fixes an image likelihood `P(i|t)` shared by train and test, a
//! train language prior `P_train(t)` and a test prior `P_test(t)`. Everything a
//! generative scorer would report is derived from these by Bayes' rule, so
//! every debiasing claim can be checked against exact posteriors.
//!
//! The simulated scorer reports `log P_train(t|i) + beta * log P_train(t)`,
//! split into per-token conditionals by prefix marginalization over the caption
//! set. Null contexts carry the exact marginal of that score under the train
//! image distribution.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::debias::{debias_log, Alpha, BetaBias};
use crate::error::{Error, Result};
use crate::prior::{PriorSource, PriorTable};
use crate::scalar::logsumexp;
use crate::scorebank::{Direction, Manifest, PairedTask, RetrievalTask, ScoreBank, ScoreRecord};
use crate::scoring::AggregationMode;

pub const MAX_IMAGES: usize = 64;
pub const MAX_CAPTIONS: usize = 256;
const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Test prior equals the train prior.
    Matched,
    /// Test prior is uniform over captions.
    UniformTest,
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "matched" => Ok(Scenario::Matched),
            "uniform_test" | "uniform" => Ok(Scenario::UniformTest),
            other => Err(format!("unknown scenario {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub n_images: usize,
    pub n_captions: usize,
    pub caption_len: usize,
    pub vocab_size: usize,
    /// Log-normal spread of the train prior; 0 gives a uniform prior.
    pub skew: f64,
    /// Symmetric Dirichlet concentration of each likelihood column.
    pub likelihood_concentration: f64,
    /// Captions of length 1..=caption_len, each terminated by an end token.
    pub variable_length: bool,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            n_images: 8,
            n_captions: 16,
            caption_len: 3,
            vocab_size: 4,
            skew: 1.0,
            likelihood_concentration: 1.0,
            variable_length: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub images: Vec<String>,
    pub caption_ids: Vec<String>,
    /// Token sequences, without the end token.
    pub captions: Vec<Vec<u32>>,
    pub vocab_size: usize,
    /// Appended to every caption when lengths vary, so no caption is a prefix of another.
    pub end_token: Option<u32>,
    /// `likelihood[i][t] = P(i | t)`; every column sums to 1.
    pub likelihood: Vec<Vec<f64>>,
    pub train_prior: Vec<f64>,
    pub test_prior: Vec<f64>,
    /// Image marginal induced by the train joint.
    pub image_prior: Vec<f64>,
    pub beta: BetaBias,
    pub seed: u64,
}

fn check_stochastic(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidWorld(format!("{name} has negative or non-finite entries")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidWorld(format!("{name} sums to {s}")));
    }
    Ok(())
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

fn induced_image_prior(likelihood: &[Vec<f64>], train_prior: &[f64]) -> Vec<f64> {
    likelihood
        .iter()
        .map(|row| row.iter().zip(train_prior).map(|(l, p)| l * p).sum())
        .collect()
}

impl World {
    /// Builds a world from explicit parts with matched test prior and no bias.
    pub fn new(
        captions: Vec<Vec<u32>>,
        vocab_size: usize,
        likelihood: Vec<Vec<f64>>,
        train_prior: Vec<f64>,
    ) -> Result<World> {
        let k = likelihood.len();
        let n = captions.len();
        let image_prior = induced_image_prior(&likelihood, &train_prior);
        let world = World {
            images: (0..k).map(image_id).collect(),
            caption_ids: (0..n).map(caption_id).collect(),
            captions,
            vocab_size,
            end_token: None,
            likelihood,
            test_prior: train_prior.clone(),
            train_prior,
            image_prior,
            beta: BetaBias::NONE,
            seed: 0,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn n_images(&self) -> usize {
        self.images.len()
    }

    pub fn n_captions(&self) -> usize {
        self.captions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (k, n) = (self.n_images(), self.n_captions());
        if k == 0 || n == 0 || k > MAX_IMAGES || n > MAX_CAPTIONS {
            return Err(Error::InvalidWorld(format!(
                "{k} images x {n} captions outside 1..={MAX_IMAGES} x 1..={MAX_CAPTIONS}"
            )));
        }
        if self.likelihood.len() != k || self.likelihood.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidWorld("likelihood must be images x captions".into()));
        }
        if self.train_prior.len() != n || self.test_prior.len() != n || self.image_prior.len() != k {
            return Err(Error::InvalidWorld("prior lengths do not match".into()));
        }
        if self.caption_ids.len() != n {
            return Err(Error::InvalidWorld("caption ids do not match captions".into()));
        }
        for t in 0..n {
            let col: Vec<f64> = self.likelihood.iter().map(|r| r[t]).collect();
            check_stochastic(&format!("likelihood column {t}"), &col)?;
        }
        check_stochastic("train_prior", &self.train_prior)?;
        check_stochastic("test_prior", &self.test_prior)?;
        check_stochastic("image_prior", &self.image_prior)?;
        let mut seen = HashSet::new();
        for c in &self.captions {
            if c.is_empty() {
                return Err(Error::InvalidWorld("empty caption".into()));
            }
            if c.iter().any(|&tok| tok as usize >= self.vocab_size) {
                return Err(Error::InvalidWorld("token outside vocabulary".into()));
            }
            if !seen.insert(c) {
                return Err(Error::InvalidWorld("captions are not distinct".into()));
            }
        }
        let lengths: HashSet<usize> = self.captions.iter().map(Vec::len).collect();
        if lengths.len() > 1 && self.end_token.is_none() {
            return Err(Error::InvalidWorld(
                "captions of different lengths need an end token".into(),
            ));
        }
        Ok(())
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> World {
        self.test_prior = match scenario {
            Scenario::Matched => self.train_prior.clone(),
            Scenario::UniformTest => vec![1.0 / self.n_captions() as f64; self.n_captions()],
        };
        self
    }

    pub fn with_beta(mut self, beta: BetaBias) -> World {
        self.beta = beta;
        self
    }

    /// Rebalances the joint by Sinkhorn scaling so the induced train image
    /// marginal is uniform while `P_train(t)` is kept.
    pub fn with_uniform_image_prior(mut self) -> Result<World> {
        let (k, n) = (self.n_images(), self.n_captions());
        let target = 1.0 / k as f64;
        let mut joint: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..n).map(|t| self.likelihood[i][t] * self.train_prior[t]).collect())
            .collect();
        let mut converged = false;
        for _ in 0..100_000 {
            for row in joint.iter_mut() {
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|x| *x *= target / s);
                }
            }
            for t in 0..n {
                let s: f64 = joint.iter().map(|r| r[t]).sum();
                if s > 0.0 {
                    joint.iter_mut().for_each(|r| r[t] *= self.train_prior[t] / s);
                }
            }
            let worst = joint
                .iter()
                .map(|r| (r.iter().sum::<f64>() - target).abs())
                .fold(0.0, f64::max);
            if worst < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::InvalidWorld("image prior balancing did not converge".into()));
        }
        for t in 0..n {
            let mut col: Vec<f64> = joint.iter().map(|r| r[t]).collect();
            normalize(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                self.likelihood[i][t] = v;
            }
        }
        self.image_prior = induced_image_prior(&self.likelihood, &self.train_prior);
        self.validate()?;
        Ok(self)
    }

    /// Token sequences as scored, including the end token when present.
    pub fn scored_sequences(&self) -> Vec<Vec<u32>> {
        self.captions
            .iter()
            .map(|c| {
                let mut s = c.clone();
                if let Some(end) = self.end_token {
                    s.push(end);
                }
                s
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<World> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let world: World = serde_json::from_str(&text)?;
        world.validate()?;
        Ok(world)
    }
}

pub fn image_id(i: usize) -> String {
    format!("img{i:02}")
}

pub fn caption_id(t: usize) -> String {
    format!("cap{t:03}")
}

fn sequence_count(vocab: usize, len: usize, variable: bool) -> u128 {
    let v = vocab as u128;
    let lens = if variable { 1..=len } else { len..=len };
    lens.map(|l| v.checked_pow(l as u32).unwrap_or(u128::MAX))
        .fold(0u128, |a, b| a.saturating_add(b))
}

fn decode_sequence(mut index: u128, vocab: usize, len: usize, variable: bool) -> Vec<u32> {
    let v = vocab as u128;
    let mut l = if variable { 1 } else { len };
    if variable {
        loop {
            let block = v.pow(l as u32);
            if index < block {
                break;
            }
            index -= block;
            l += 1;
        }
    }
    let mut seq = vec![0u32; l];
    for slot in seq.iter_mut().rev() {
        *slot = (index % v) as u32;
        index /= v;
    }
    seq
}

/// Draws a seeded world. Captions are distinct token sequences chosen
/// uniformly; each likelihood column is a symmetric Dirichlet draw; the train
/// prior is `softmax(skew * z)` with standard normal `z`. The test prior is set
/// equal to the train prior; see [`World::with_scenario`].
pub fn generate_world(params: &WorldParams) -> Result<World> {
    let (k, n, l, v) = (
        params.n_images,
        params.n_captions,
        params.caption_len,
        params.vocab_size,
    );
    if k == 0 || n == 0 || l == 0 || v == 0 {
        return Err(Error::InvalidWorld("sizes must be positive".into()));
    }
    if k > MAX_IMAGES || n > MAX_CAPTIONS {
        return Err(Error::InvalidWorld(format!(
            "at most {MAX_IMAGES} images and {MAX_CAPTIONS} captions"
        )));
    }
    if !(params.skew >= 0.0 && params.skew.is_finite()) {
        return Err(Error::InvalidWorld(format!("skew must be >= 0, got {}", params.skew)));
    }
    if !(params.likelihood_concentration > 0.0 && params.likelihood_concentration.is_finite()) {
        return Err(Error::InvalidWorld("likelihood concentration must be > 0".into()));
    }
    let available = sequence_count(v, l, params.variable_length);
    if (n as u128) > available {
        return Err(Error::TooManyCaptions {
            captions: n,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut chosen: HashSet<u128> = HashSet::with_capacity(n);
    let mut indices = Vec::with_capacity(n);
    if available <= 4 * n as u128 {
        // dense: shuffle the full index space
        let mut all: Vec<u128> = (0..available).collect();
        rand::seq::SliceRandom::shuffle(all.as_mut_slice(), &mut rng);
        indices.extend_from_slice(&all[..n]);
    } else {
        while indices.len() < n {
            let x = rng.random_range(0..available);
            if chosen.insert(x) {
                indices.push(x);
            }
        }
    }
    let mut captions: Vec<Vec<u32>> = indices
        .into_iter()
        .map(|x| decode_sequence(x, v, l, params.variable_length))
        .collect();
    captions.sort();

    let gamma = Gamma::new(params.likelihood_concentration, 1.0)
        .map_err(|e| Error::InvalidWorld(e.to_string()))?;
    let mut likelihood = vec![vec![0.0; n]; k];
    for t in 0..n {
        let mut col: Vec<f64> = (0..k)
            .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE))
            .collect();
        normalize(&mut col);
        for (i, x) in col.into_iter().enumerate() {
            likelihood[i][t] = x;
        }
    }

    let logits: Vec<f64> = (0..n)
        .map(|_| params.skew * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lse = logsumexp(&logits);
    let mut train_prior: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    normalize(&mut train_prior);

    let image_prior = induced_image_prior(&likelihood, &train_prior);
    let world = World {
        images: (0..k).map(image_id).collect(),
        caption_ids: (0..n).map(caption_id).collect(),
        captions,
        vocab_size: if params.variable_length { v + 1 } else { v },
        end_token: params.variable_length.then_some(v as u32),
        likelihood,
        test_prior: train_prior.clone(),
        train_prior,
        image_prior,
        beta: BetaBias::NONE,
        seed: params.seed,
    };
    world.validate()?;
    Ok(world)
}

/// Log posterior `log P(t|i)` under the chosen language prior, rows normalized
/// over captions.
pub fn exact_posterior(world: &World, which: PriorKind) -> Vec<Vec<f64>> {
    let prior = match which {
        PriorKind::Train => &world.train_prior,
        PriorKind::Test => &world.test_prior,
    };
    world
        .likelihood
        .iter()
        .map(|row| {
            let joint: Vec<f64> = row.iter().zip(prior).map(|(l, p)| l.ln() + p.ln()).collect();
            let z = logsumexp(&joint);
            joint.into_iter().map(|x| x - z).collect()
        })
        .collect()
}

/// `log P_train(t|i)`, the quantity an unbiased generative scorer estimates.
pub fn exact_conditional(world: &World) -> Vec<Vec<f64>> {
    exact_posterior(world, PriorKind::Train)
}

pub fn exact_prior(world: &World, which: PriorKind) -> Vec<f64> {
    let prior = match which {
        PriorKind::Train => &world.train_prior,
        PriorKind::Test => &world.test_prior,
    };
    prior.iter().map(|p| p.ln()).collect()
}

/// Exact prior as a [`PriorTable`] keyed by caption id.
pub fn exact_prior_table(world: &World, which: PriorKind, aggregation: AggregationMode) -> PriorTable<f64> {
    let logs = exact_prior(world, which);
    let seqs = world.scored_sequences();
    let entries = world
        .caption_ids
        .iter()
        .zip(logs)
        .zip(&seqs)
        .map(|((id, lp), seq)| {
            let v = match aggregation {
                AggregationMode::SumLog => lp,
                AggregationMode::MeanTokenLog => lp / seq.len() as f64,
            };
            (id.clone(), v)
        })
        .collect();
    PriorTable {
        entries,
        source: PriorSource::Exact,
        n_contexts: world.n_images(),
        aggregation,
    }
}

/// Per-token conditionals `log P(t_k | t_<k, i)` for every caption, obtained by
/// marginalizing the exact caption posterior of image `image` over prefixes.
pub fn factorize_tokens(world: &World, image: usize) -> Vec<Vec<f64>> {
    let cond = &exact_conditional(world)[image];
    let seqs = world.scored_sequences();
    let mut buckets: HashMap<&[u32], Vec<f64>> = HashMap::new();
    for (seq, &lp) in seqs.iter().zip(cond) {
        for len in 0..=seq.len() {
            buckets.entry(&seq[..len]).or_default().push(lp);
        }
    }
    let mass: HashMap<&[u32], f64> = buckets
        .into_iter()
        .map(|(prefix, v)| (prefix, logsumexp(&v)))
        .collect();
    seqs.iter()
        .map(|seq| {
            (0..seq.len())
                .map(|k| (mass[&seq[..k + 1]] - mass[&seq[..k]]).min(0.0))
                .collect()
        })
        .collect()
}

/// Adds `beta * log P_train(t)` to every column of a conditional log matrix.
pub fn inject_beta(world: &World, scores: &[Vec<f64>], beta: BetaBias) -> Vec<Vec<f64>> {
    let b = beta.value();
    if b == 0.0 {
        return scores.to_vec();
    }
    let log_prior = exact_prior(world, PriorKind::Train);
    scores
        .iter()
        .map(|row| row.iter().zip(&log_prior).map(|(s, p)| s + b * p).collect())
        .collect()
}

/// Sequence-level log scores the simulated model reports, including its bias.
pub fn model_scores(world: &World) -> Vec<Vec<f64>> {
    inject_beta(world, &exact_conditional(world), world.beta)
}

/// `log sum_i P_train(i) * exp(model_scores[i][t])`, the model's exact
/// language-prior readout. Equals `(1 + beta) * log P_train(t)`.
pub fn model_marginal(world: &World) -> Vec<f64> {
    let scores = model_scores(world);
    (0..world.n_captions())
        .map(|t| {
            let terms: Vec<f64> = scores
                .iter()
                .zip(&world.image_prior)
                .map(|(row, p)| row[t] + p.ln())
                .collect();
            logsumexp(&terms)
        })
        .collect()
}

/// Per-token log-probabilities the simulated model emits for `image`.
pub fn model_token_logprobs(world: &World, image: usize) -> Vec<Vec<f64>> {
    let tokens = factorize_tokens(world, image);
    let b = world.beta.value();
    if b == 0.0 {
        return tokens;
    }
    tokens
        .into_iter()
        .zip(&world.train_prior)
        .map(|(toks, p)| {
            let share = b * p.ln() / toks.len() as f64;
            toks.into_iter().map(|x| x + share).collect()
        })
        .collect()
}

/// Caption the Bayes-optimal rule picks for each image under the test prior
/// (first maximizer).
pub fn bayes_predictions(world: &World) -> Vec<usize> {
    exact_posterior(world, PriorKind::Test)
        .iter()
        .map(|row| {
            let mut best = 0;
            for (t, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = t;
                }
            }
            best
        })
        .collect()
}

/// Test image marginal `P_test(i) = sum_t P(i|t) P_test(t)`.
pub fn test_image_prior(world: &World) -> Vec<f64> {
    induced_image_prior(&world.likelihood, &world.test_prior)
}

/// Exact expected top-1 accuracy (percent) of a rule that picks caption
/// `predictions[i]` for image `i`, when tasks are drawn as `t ~ P_test`,
/// `i ~ P(i|t)`.
pub fn expected_accuracy(world: &World, predictions: &[usize]) -> f64 {
    let p_img = test_image_prior(world);
    let post = exact_posterior(world, PriorKind::Test);
    100.0
        * predictions
            .iter()
            .enumerate()
            .map(|(i, &t)| p_img[i] * post[i][t].exp())
            .sum::<f64>()
}

/// Exact expected image-to-text accuracy of debiased bank scores on a world.
///
/// Instead of averaging over sampled tasks, each image's top-1 choice under
/// `debias_log` is weighted by the test joint `P_test(i, t)`; a choice that is
/// not a strict maximum earns nothing. This removes task-sampling noise from
/// alpha tuning on synthetic worlds.
#[derive(Debug, Clone)]
pub struct ExactI2tObjective {
    cond: Vec<Vec<f64>>,
    prior: Vec<f64>,
    joint: Vec<Vec<f64>>,
}

impl ExactI2tObjective {
    pub fn new(
        world: &World,
        bank: &ScoreBank<f64>,
        prior: &PriorTable<f64>,
        aggregation: AggregationMode,
    ) -> Result<Self> {
        let cond = world
            .images
            .iter()
            .map(|img| {
                world
                    .caption_ids
                    .iter()
                    .map(|cap| bank.score(img, cap, aggregation))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let prior = world
            .caption_ids
            .iter()
            .map(|cap| prior.get(cap))
            .collect::<Result<Vec<_>>>()?;
        let joint = world
            .likelihood
            .iter()
            .map(|row| row.iter().zip(&world.test_prior).map(|(l, p)| l * p).collect())
            .collect();
        Ok(ExactI2tObjective { cond, prior, joint })
    }

    /// Caption chosen for each image, `None` when the maximum is tied.
    pub fn predictions(&self, alpha: Alpha) -> Result<Vec<Option<usize>>> {
        self.cond
            .iter()
            .map(|row| {
                let scores = row
                    .iter()
                    .zip(&self.prior)
                    .map(|(&c, &p)| debias_log(c, p, alpha))
                    .collect::<Result<Vec<_>>>()?;
                let mut best = 0;
                for (t, &v) in scores.iter().enumerate() {
                    if v > scores[best] {
                        best = t;
                    }
                }
                let unique = scores
                    .iter()
                    .enumerate()
                    .all(|(t, &v)| t == best || v < scores[best]);
                Ok(unique.then_some(best))
            })
            .collect()
    }

    /// Expected accuracy in percent.
    pub fn accuracy(&self, alpha: Alpha) -> Result<f64> {
        let preds = self.predictions(alpha)?;
        Ok(100.0
            * preds
                .iter()
                .zip(&self.joint)
                .filter_map(|(p, row)| p.map(|t| row[t]))
                .sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportOptions {
    pub scenario: Scenario,
    pub n_null_contexts: usize,
    /// Image-to-text tasks; each also yields a text-to-image task when
    /// `include_t2i` is set.
    pub n_tasks: usize,
    pub n_paired: usize,
    pub include_t2i: bool,
    pub seed: u64,
}

impl ExportOptions {
    /// One task per image, three null contexts, no paired tasks.
    pub fn for_world(world: &World, scenario: Scenario, seed: u64) -> Self {
        ExportOptions {
            scenario,
            n_null_contexts: 3,
            n_tasks: world.n_images(),
            n_paired: 0,
            include_t2i: false,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExportedBank {
    pub bank: ScoreBank<f64>,
    /// The world with the scenario's test prior applied.
    pub world: World,
    /// Caption index of each image-to-text task's positive, in task order.
    pub positives: Vec<usize>,
    /// Image index of each image-to-text task's query, in task order.
    pub queries: Vec<usize>,
}

impl ExportedBank {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.bank
            .save(&dir.join("scores.jsonl"), &dir.join("manifest.json"))?;
        self.world.save(&dir.join("world.json"))
    }

    pub fn i2t_tasks(&self) -> Vec<RetrievalTask> {
        self.bank.tasks_with_direction(Direction::ImageToText)
    }
}

pub fn null_context_id(k: usize) -> String {
    format!("null{k:02}")
}

/// Materializes a world as a score bank: every image-caption record, null
/// context records carrying the exact model marginal, and tasks whose positive
/// caption is drawn from the scenario's test prior and whose query image is
/// drawn from `P(i | t)`. Every caption is a candidate of every task.
pub fn export_bank(world: &World, options: &ExportOptions) -> Result<ExportedBank> {
    let world = world.clone().with_scenario(options.scenario);
    world.validate()?;
    let (k, n) = (world.n_images(), world.n_captions());
    if n < 2 {
        return Err(Error::InvalidWorld("retrieval tasks need at least 2 captions".into()));
    }

    let mut records = Vec::with_capacity((k + options.n_null_contexts) * n);
    for i in 0..k {
        for (t, toks) in model_token_logprobs(&world, i).into_iter().enumerate() {
            records.push(ScoreRecord {
                context_id: world.images[i].clone(),
                text_id: world.caption_ids[t].clone(),
                token_logprobs: toks,
                is_null_context: false,
            });
        }
    }
    let marginal = model_marginal(&world);
    let seqs = world.scored_sequences();
    for z in 0..options.n_null_contexts {
        for t in 0..n {
            let len = seqs[t].len();
            let share = (marginal[t] / len as f64).min(0.0);
            records.push(ScoreRecord {
                context_id: null_context_id(z),
                text_id: world.caption_ids[t].clone(),
                token_logprobs: vec![share; len],
                is_null_context: true,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let caption_dist = WeightedIndex::new(&world.test_prior)
        .map_err(|e| Error::InvalidWorld(format!("test prior: {e}")))?;
    let image_dists = (0..n)
        .map(|t| {
            WeightedIndex::new(world.likelihood.iter().map(|r| r[t]))
                .map_err(|e| Error::InvalidWorld(format!("likelihood column {t}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let draw = |rng: &mut ChaCha8Rng| {
        let t = caption_dist.sample(rng);
        (image_dists[t].sample(rng), t)
    };

    let mut tasks = Vec::new();
    let mut positives = Vec::with_capacity(options.n_tasks);
    let mut queries = Vec::with_capacity(options.n_tasks);
    let mut t2i = Vec::new();
    for q in 0..options.n_tasks {
        let (i, t) = draw(&mut rng);
        positives.push(t);
        queries.push(i);
        tasks.push(RetrievalTask {
            task_id: format!("i2t{q:05}"),
            query_id: world.images[i].clone(),
            candidate_ids: world.caption_ids.clone(),
            positive_index: t,
            direction: Direction::ImageToText,
        });
        if options.include_t2i && k >= 2 {
            t2i.push(RetrievalTask {
                task_id: format!("t2i{q:05}"),
                query_id: world.caption_ids[t].clone(),
                candidate_ids: world.images.clone(),
                positive_index: i,
                direction: Direction::TextToImage,
            });
        }
    }
    tasks.extend(t2i);

    let mut paired_tasks = Vec::with_capacity(options.n_paired);
    if options.n_paired > 0 && k < 2 {
        return Err(Error::InvalidWorld("paired tasks need at least 2 images".into()));
    }
    for p in 0..options.n_paired {
        let mut found = None;
        for _ in 0..10_000 {
            let (i0, t0) = draw(&mut rng);
            let (i1, t1) = draw(&mut rng);
            if i0 != i1 && t0 != t1 {
                found = Some(((i0, t0), (i1, t1)));
                break;
            }
        }
        let ((i0, t0), (i1, t1)) = found.ok_or_else(|| {
            Error::InvalidWorld("could not draw a pair with distinct images and captions".into())
        })?;
        paired_tasks.push(PairedTask {
            pair_id: format!("pair{p:05}"),
            image_ids: [world.images[i0].clone(), world.images[i1].clone()],
            text_ids: [world.caption_ids[t0].clone(), world.caption_ids[t1].clone()],
        });
    }

    let bank = ScoreBank::new(records, Manifest { tasks, paired_tasks })?;
    Ok(ExportedBank {
        bank,
        world,
        positives,
        queries,
    })
}
