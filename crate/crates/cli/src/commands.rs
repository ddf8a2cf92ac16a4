use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use vlscore::alpha_tuner::{self, TuneResult};
use vlscore::prior::{estimate_prior, prior_from_null, prior_from_paired_testset, prior_from_testset};
use vlscore::retrieval_eval::{
    self, recall_metric_name, PreparedPairs, PreparedTasks, METRIC_ACCURACY, METRIC_GROUP,
    METRIC_IMAGE, METRIC_TEXT,
};
use vlscore::scorebank::{load_bank, load_scores_only};
use vlscore::synthworld::{self, ExactI2tObjective, ExportOptions, Scenario, World, WorldParams};
use vlscore::{
    debias_log, AggregationMode, Alpha, BetaBias, Direction, EvalReport, PriorTable64, Protocol,
    ScoreBank64,
};

use crate::config::{merge, run_json_path, write_run_json, write_text};
use crate::render;
use crate::CliError;

pub struct Context {
    pub config: Option<Value>,
    pub threads: Option<usize>,
}

fn require<T: Clone>(value: &Option<T>, name: &str) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (flag or config)")))
}

fn load(scores: &Path, manifest: Option<&Path>) -> Result<ScoreBank64, CliError> {
    Ok(match manifest {
        Some(m) => load_bank(scores, m)?,
        None => load_scores_only(scores)?,
    })
}

fn to_json_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

// ---------------------------------------------------------------------------
// score

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub aggregation: Option<AggregationMode>,
}

pub fn score(ctx: &Context, args: &ScoreArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "score")?;
    let scores = require(&args.scores, "scores")?;
    let out = require(&args.out, "out")?;
    let aggregation = args.aggregation.unwrap_or_default();
    let bank = load(&scores, args.manifest.as_deref())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["context_id", "text_id", "n_tokens", "is_null_context", "score_log"])?;
    for rec in bank.records() {
        let s = aggregation.aggregate(&rec.token_logprobs)?;
        w.write_record([
            rec.context_id.as_str(),
            rec.text_id.as_str(),
            &rec.token_logprobs.len().to_string(),
            &rec.is_null_context.to_string(),
            &s.to_string(),
        ])?;
    }
    write_csv(&out, w)?;
    args.aggregation = Some(aggregation);
    write_run_json(&run_json_path(&out), "score", &args, ctx.threads)
}

fn write_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<(), CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    write_text(path, &String::from_utf8(bytes).expect("csv output is utf-8"))
}

// ---------------------------------------------------------------------------
// prior

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    /// Null contexts when the bank has any, testset images otherwise.
    Auto,
    Null,
    Testset,
    /// Explicit context ids (`--contexts`).
    Contexts,
    /// A previously written prior table (`--prior-file`).
    File,
}

impl FromStr for PriorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(PriorChoice::Auto),
            "null" => Ok(PriorChoice::Null),
            "testset" => Ok(PriorChoice::Testset),
            "contexts" => Ok(PriorChoice::Contexts),
            "file" => Ok(PriorChoice::File),
            other => Err(format!("unknown prior source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PriorOpts {
    /// auto | null | testset | contexts | file
    #[arg(long)]
    pub prior_source: Option<PriorChoice>,
    #[arg(long)]
    pub prior_file: Option<PathBuf>,
    /// Comma-separated context ids for `--prior-source contexts` (repeats allowed).
    #[arg(long, value_delimiter = ',')]
    pub contexts: Option<Vec<String>>,
}

/// Texts referenced by tasks of the bank, or every non-null text if there are none.
fn bank_texts(bank: &ScoreBank64, paired: bool) -> Vec<String> {
    let mut texts: Vec<String> = Vec::new();
    if paired {
        for p in bank.paired_tasks() {
            texts.extend(p.text_ids.iter().cloned());
        }
    } else {
        for t in bank.tasks() {
            texts.extend(t.text_ids().into_iter().map(str::to_owned));
        }
    }
    if texts.is_empty() {
        texts = bank
            .records()
            .iter()
            .filter(|r| !r.is_null_context)
            .map(|r| r.text_id.clone())
            .collect();
    }
    texts.sort();
    texts.dedup();
    texts
}

fn build_prior(
    bank: &ScoreBank64,
    opts: &PriorOpts,
    aggregation: AggregationMode,
    paired: bool,
) -> Result<(PriorTable64, PriorChoice), CliError> {
    let choice = match opts.prior_source.unwrap_or(PriorChoice::Auto) {
        PriorChoice::Auto if !bank.null_context_ids().is_empty() => PriorChoice::Null,
        PriorChoice::Auto => PriorChoice::Testset,
        other => other,
    };
    let texts = bank_texts(bank, paired);
    let prior = match choice {
        PriorChoice::Null => prior_from_null(bank, texts.iter().map(String::as_str), aggregation)?,
        PriorChoice::Testset if paired => prior_from_paired_testset(bank, bank.paired_tasks(), aggregation)?,
        PriorChoice::Testset => {
            let tasks = bank.tasks_with_direction(Direction::ImageToText);
            prior_from_testset(bank, &tasks, aggregation)?
        }
        PriorChoice::Contexts => {
            let ctxs = require(&opts.contexts, "contexts")?;
            estimate_prior(bank, texts.iter().map(String::as_str), &ctxs, aggregation)?
        }
        PriorChoice::File => {
            let p = PriorTable64::load(&require(&opts.prior_file, "prior-file")?)?;
            if p.aggregation != aggregation {
                return Err(CliError::Usage(format!(
                    "prior file was built with {} but scoring uses {}",
                    p.aggregation, aggregation
                )));
            }
            p
        }
        PriorChoice::Auto => unreachable!(),
    };
    Ok((prior, choice))
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PriorArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub aggregation: Option<AggregationMode>,
    /// Build the prior for the texts of paired tasks.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub paired: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorOpts,
}

pub fn prior(ctx: &Context, args: &PriorArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "prior")?;
    let scores = require(&args.scores, "scores")?;
    let out = require(&args.out, "out")?;
    let aggregation = args.aggregation.unwrap_or_default();
    let bank = load(&scores, args.manifest.as_deref())?;
    let (table, table_choice) = build_prior(&bank, &args.prior, aggregation, args.paired.unwrap_or(false))?;
    write_text(&out, &to_json_text(&table.to_json()?)?)?;
    args.aggregation = Some(aggregation);
    args.prior.prior_source = Some(table_choice);
    write_run_json(&run_json_path(&out), "prior", &args, ctx.threads)
}

// ---------------------------------------------------------------------------
// debias

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DebiasArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub aggregation: Option<AggregationMode>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorOpts,
}

pub fn debias(ctx: &Context, args: &DebiasArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "debias")?;
    let scores = require(&args.scores, "scores")?;
    let out = require(&args.out, "out")?;
    let aggregation = args.aggregation.unwrap_or_default();
    let alpha = Alpha::new(args.alpha.unwrap_or(1.0))?;
    let bank = load(&scores, args.manifest.as_deref())?;
    let (prior, prior_choice) = build_prior(&bank, &args.prior, aggregation, false)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["context_id", "text_id", "cond_log", "prior_log", "debiased_log"])?;
    for rec in bank.records().iter().filter(|r| !r.is_null_context) {
        let Ok(p) = prior.get(&rec.text_id) else { continue };
        let c = aggregation.aggregate(&rec.token_logprobs)?;
        let d = debias_log(c, p, alpha)?;
        w.write_record([
            rec.context_id.as_str(),
            rec.text_id.as_str(),
            &c.to_string(),
            &p.to_string(),
            &d.to_string(),
        ])?;
    }
    write_csv(&out, w)?;
    args.aggregation = Some(aggregation);
    args.alpha = Some(alpha.value());
    args.prior.prior_source = Some(prior_choice);
    write_run_json(&run_json_path(&out), "debias", &args, ctx.threads)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// i2t_accuracy | recall_at_k | paired | t2i_recall
    #[arg(long)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Cutoffs for recall protocols, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub aggregation: Option<AggregationMode>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the report as a CSV row.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Per-task outcomes as CSV, sorted by task id.
    #[arg(long)]
    pub per_task: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorOpts,
}

pub fn eval(ctx: &Context, args: &EvalArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "eval")?;
    let scores = require(&args.scores, "scores")?;
    let manifest = require(&args.manifest, "manifest")?;
    let out = require(&args.out, "out")?;
    let protocol = args.protocol.unwrap_or(Protocol::I2tAccuracy);
    let aggregation = args.aggregation.unwrap_or_default();
    let alpha = Alpha::new(args.alpha.unwrap_or(1.0))?;
    let bank = load(&scores, Some(&manifest))?;

    let mut per_task: Vec<(String, String)> = Vec::new();
    let report = match protocol {
        Protocol::I2tAccuracy | Protocol::RecallAtK => {
            let tasks = bank.tasks_with_direction(Direction::ImageToText);
            let (prior, choice) = build_prior(&bank, &args.prior, aggregation, false)?;
            args.prior.prior_source = Some(choice);
            let report = if protocol == Protocol::I2tAccuracy {
                retrieval_eval::eval_i2t(&bank, &tasks, &prior, alpha, aggregation)?
            } else {
                let ks = args.k.clone().unwrap_or_else(|| vec![1, 5]);
                retrieval_eval::eval_recall_at_k(&bank, &tasks, &prior, alpha, &ks, aggregation)?
            };
            if args.per_task.is_some() {
                let prepared = PreparedTasks::new(&bank, &tasks, &prior, aggregation)?;
                per_task = prepared
                    .outcomes(alpha)?
                    .into_iter()
                    .map(|o| (o.task_id, o.rank.to_string()))
                    .collect();
            }
            report
        }
        Protocol::Paired => {
            let (prior, choice) = build_prior(&bank, &args.prior, aggregation, true)?;
            args.prior.prior_source = Some(choice);
            let report = retrieval_eval::eval_paired(&bank, bank.paired_tasks(), &prior, alpha, aggregation)?;
            if args.per_task.is_some() {
                let outcomes = PreparedPairs::new(&bank, bank.paired_tasks(), &prior, aggregation)?.outcomes(alpha)?;
                per_task = bank
                    .paired_tasks()
                    .iter()
                    .zip(outcomes)
                    .map(|(p, o)| {
                        (p.pair_id.clone(), format!("{}/{}/{}", u8::from(o.text), u8::from(o.image), u8::from(o.group)))
                    })
                    .collect();
            }
            report
        }
        Protocol::T2iRecall => {
            let tasks = bank.tasks_with_direction(Direction::TextToImage);
            let ks = args.k.clone().unwrap_or_else(|| vec![1]);
            let report = retrieval_eval::eval_t2i_at_k(&bank, &tasks, &ks, aggregation)?;
            if args.per_task.is_some() {
                per_task = PreparedTasks::conditional(&bank, &tasks, aggregation)?
                    .outcomes(Alpha::ZERO)?
                    .into_iter()
                    .map(|o| (o.task_id, o.rank.to_string()))
                    .collect();
            }
            report
        }
    };

    write_text(&out, &to_json_text(&report)?)?;
    if let Some(path) = &args.csv {
        write_text(path, &render::reports_csv(std::slice::from_ref(&report), &[out.display().to_string()])?)?;
    }
    if let Some(path) = &args.per_task {
        per_task.sort();
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = if protocol == Protocol::Paired { "text/image/group" } else { "rank" };
        w.write_record(["task_id", header])?;
        for (id, v) in &per_task {
            w.write_record([id, v])?;
        }
        write_csv(path, w)?;
    }
    print!("{}", render::report_table(&report));
    args.aggregation = Some(aggregation);
    args.alpha = Some(report.alpha.value());
    args.protocol = Some(protocol);
    write_run_json(&run_json_path(&out), "eval", &args, ctx.threads)
}

// ---------------------------------------------------------------------------
// tune

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// i2t_accuracy | recall_at_k | paired
    #[arg(long)]
    pub protocol: Option<Protocol>,
    /// Metric to maximize: accuracy, R@k, text, image or group.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Random splits; 0 runs a single grid search on all tasks.
    #[arg(long)]
    pub splits: Option<usize>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub aggregation: Option<AggregationMode>,
    /// Tune on the exact expected accuracy of this synthetic world instead of sampled tasks.
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// TuneResult JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Alpha/objective curve CSV (default: next to --out).
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub prior: PriorOpts,
}

enum Objective {
    Tasks(PreparedTasks<f64>, usize),
    Pairs(PreparedPairs<f64>, usize),
}

impl Objective {
    fn n_items(&self) -> usize {
        match self {
            Objective::Tasks(t, _) => t.len(),
            Objective::Pairs(p, _) => p.len(),
        }
    }

    fn eval_on(&self, subset: &[usize], alpha: Alpha) -> vlscore::Result<f64> {
        match self {
            Objective::Tasks(t, k) => t.recall_on(subset, alpha, *k),
            Objective::Pairs(p, which) => Ok(p.scores_on(subset, alpha)?[*which]),
        }
    }
}

fn parse_recall_k(metric: &str) -> Option<usize> {
    metric.strip_prefix("R@").and_then(|k| k.parse().ok())
}

pub fn tune(ctx: &Context, args: &TuneArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "tune")?;
    let scores = require(&args.scores, "scores")?;
    let manifest = require(&args.manifest, "manifest")?;
    let out = require(&args.out, "out")?;
    let protocol = args.protocol.unwrap_or(Protocol::I2tAccuracy);
    let aggregation = args.aggregation.unwrap_or_default();
    let step = args.step.unwrap_or(alpha_tuner::DEFAULT_STEP);
    let splits = args.splits.unwrap_or(10);
    let fraction = args.fraction.unwrap_or(0.5);
    let seed = args.seed.unwrap_or(0);
    let bank = load(&scores, Some(&manifest))?;

    let paired = protocol == Protocol::Paired;
    let (prior, prior_choice) = build_prior(&bank, &args.prior, aggregation, paired)?;
    args.prior.prior_source = Some(prior_choice);

    let mut result: TuneResult = if let Some(world_path) = &args.world {
        if protocol != Protocol::I2tAccuracy {
            return Err(CliError::Usage("--world tuning supports i2t_accuracy only".into()));
        }
        let world = World::load(world_path)?;
        let objective = ExactI2tObjective::new(&world, &bank, &prior, aggregation)?;
        alpha_tuner::grid_search(|a| objective.accuracy(a), step)?
    } else {
        let objective = match protocol {
            Protocol::Paired => {
                let metric = args.metric.as_deref().unwrap_or(METRIC_TEXT);
                let which = match metric {
                    m if m == METRIC_TEXT => 0,
                    m if m == METRIC_IMAGE => 1,
                    m if m == METRIC_GROUP => 2,
                    other => return Err(CliError::Usage(format!("unknown paired metric {other:?}"))),
                };
                Objective::Pairs(PreparedPairs::new(&bank, bank.paired_tasks(), &prior, aggregation)?, which)
            }
            Protocol::I2tAccuracy | Protocol::RecallAtK => {
                let metric = args.metric.clone().unwrap_or_else(|| {
                    if protocol == Protocol::RecallAtK { recall_metric_name(1) } else { METRIC_ACCURACY.to_owned() }
                });
                let k = if metric == METRIC_ACCURACY {
                    1
                } else {
                    parse_recall_k(&metric)
                        .ok_or_else(|| CliError::Usage(format!("unknown metric {metric:?}")))?
                };
                let tasks = bank.tasks_with_direction(Direction::ImageToText);
                let prepared = PreparedTasks::new(&bank, &tasks, &prior, aggregation)?;
                if k == 0 || k > prepared.min_candidates() {
                    return Err(vlscore::Error::InvalidK {
                        k,
                        task_id: String::new(),
                        n_candidates: prepared.min_candidates(),
                    }
                    .into());
                }
                Objective::Tasks(prepared, k)
            }
            Protocol::T2iRecall => {
                return Err(CliError::Usage("t2i_recall has no alpha to tune".into()));
            }
        };
        if splits == 0 {
            let all: Vec<usize> = (0..objective.n_items()).collect();
            alpha_tuner::grid_search(|a| objective.eval_on(&all, a), step)?
        } else {
            alpha_tuner::cross_validate(objective.n_items(), splits, fraction, seed, step, |s, a| {
                objective.eval_on(s, a)
            })?
        }
    };
    result.seed = Some(seed);

    write_text(&out, &to_json_text(&result)?)?;
    let curve_path = args.curve.clone().unwrap_or_else(|| {
        let mut name = out.file_stem().unwrap_or_default().to_os_string();
        name.push(".curve.csv");
        out.with_file_name(name)
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alpha", "objective"])?;
    for p in &result.curve {
        w.write_record([p.alpha.to_string(), p.objective.to_string()])?;
    }
    write_csv(&curve_path, w)?;
    print!("{}", render::tune_summary(&result));
    args.aggregation = Some(aggregation);
    args.protocol = Some(protocol);
    args.step = Some(step);
    args.splits = Some(splits);
    args.fraction = Some(fraction);
    args.seed = Some(seed);
    args.curve = Some(curve_path);
    write_run_json(&run_json_path(&out), "tune", &args, ctx.threads)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long = "k")]
    pub k: Option<usize>,
    /// Number of captions.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Caption length (maximum length with --variable-length).
    #[arg(long = "l")]
    pub l: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub concentration: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub variable_length: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub uniform_images: Option<bool>,
    /// matched | uniform_test
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_null: Option<usize>,
    #[arg(long)]
    pub n_tasks: Option<usize>,
    #[arg(long)]
    pub n_paired: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub t2i: Option<bool>,
    #[arg(long)]
    pub outdir: Option<PathBuf>,
}

pub fn synth(ctx: &Context, args: &SynthArgs) -> Result<(), CliError> {
    let mut args = merge(args, ctx.config.as_ref(), "synth")?;
    let outdir = require(&args.outdir, "outdir")?;
    let defaults = WorldParams::default();
    let seed = args.seed.unwrap_or(0);
    let params = WorldParams {
        n_images: args.k.unwrap_or(defaults.n_images),
        n_captions: args.n.unwrap_or(defaults.n_captions),
        caption_len: args.l.unwrap_or(defaults.caption_len),
        vocab_size: args.vocab.unwrap_or(defaults.vocab_size),
        skew: args.skew.unwrap_or(defaults.skew),
        likelihood_concentration: args.concentration.unwrap_or(defaults.likelihood_concentration),
        variable_length: args.variable_length.unwrap_or(false),
        seed,
    };
    let mut world = synthworld::generate_world(&params)?
        .with_beta(BetaBias::new(args.beta.unwrap_or(0.0))?);
    if args.uniform_images.unwrap_or(false) {
        world = world.with_uniform_image_prior()?;
    }
    let scenario = args.scenario.unwrap_or(Scenario::Matched);
    let options = ExportOptions {
        scenario,
        n_null_contexts: args.n_null.unwrap_or(3),
        n_tasks: args.n_tasks.unwrap_or(world.n_images()),
        n_paired: args.n_paired.unwrap_or(0),
        include_t2i: args.t2i.unwrap_or(false),
        seed,
    };
    let exported = synthworld::export_bank(&world, &options)?;
    exported.write(&outdir)?;
    println!(
        "wrote {} records, {} tasks, {} paired tasks to {}",
        exported.bank.records().len(),
        exported.bank.tasks().len(),
        exported.bank.paired_tasks().len(),
        outdir.display()
    );
    args.k = Some(params.n_images);
    args.n = Some(params.n_captions);
    args.l = Some(params.caption_len);
    args.vocab = Some(params.vocab_size);
    args.skew = Some(params.skew);
    args.concentration = Some(params.likelihood_concentration);
    args.variable_length = Some(params.variable_length);
    args.uniform_images = Some(args.uniform_images.unwrap_or(false));
    args.scenario = Some(scenario);
    args.beta = Some(world.beta.value());
    args.seed = Some(seed);
    args.n_null = Some(options.n_null_contexts);
    args.n_tasks = Some(options.n_tasks);
    args.n_paired = Some(options.n_paired);
    args.t2i = Some(options.include_t2i);
    write_run_json(&outdir.join("run.json"), "synth", &args, ctx.threads)
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// EvalReport and TuneResult JSON files.
    #[arg(long, num_args = 1..)]
    pub inputs: Option<Vec<PathBuf>>,
    /// Merged CSV table; a plain-text rendering is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn report(ctx: &Context, args: &ReportArgs) -> Result<(), CliError> {
    let args = merge(args, ctx.config.as_ref(), "report")?;
    let inputs = require(&args.inputs, "inputs")?;
    let out = require(&args.out, "out")?;
    let mut reports = Vec::new();
    let mut report_names = Vec::new();
    let mut tunes = Vec::new();
    for path in &inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)?;
        let name = path.display().to_string();
        if value.get("protocol").is_some() {
            reports.push(serde_json::from_value::<EvalReport>(value)?);
            report_names.push(name);
        } else if value.get("curve").is_some() {
            tunes.push((name, serde_json::from_value::<TuneResult>(value)?));
        } else {
            return Err(CliError::Usage(format!("{name} is neither an eval report nor a tune result")));
        }
    }
    write_text(&out, &render::reports_csv(&reports, &report_names)?)?;
    let text = render::reports_text(&reports, &report_names, &tunes);
    let mut txt_name = out.file_name().unwrap_or_default().to_os_string();
    txt_name.push(".txt");
    write_text(&out.with_file_name(txt_name), &text)?;
    if !tunes.is_empty() {
        let mut name = out.file_stem().unwrap_or_default().to_os_string();
        name.push(".curves.csv");
        write_text(&out.with_file_name(name), &render::curves_csv(&tunes)?)?;
    }
    print!("{text}");
    write_run_json(&run_json_path(&out), "report", &args, ctx.threads)
}
