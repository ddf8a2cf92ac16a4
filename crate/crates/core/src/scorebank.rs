//! Score records, task manifests, and the validated [`ScoreBank`].
//!
//! Wire formats:
//!
//! * scores: JSON lines, one object per record with `context_id`, `text_id`,
//!   `token_logprobs` (natural log) and optional `is_null_context`.
//! * manifest: one JSON object with `tasks` and `paired_tasks` arrays.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scoring::AggregationMode;

/// Log-probabilities above this are rejected; entries in `(0, LOGPROB_SLACK]`
/// are clamped to zero on load.
pub const LOGPROB_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord<F> {
    pub context_id: String,
    pub text_id: String,
    pub token_logprobs: Vec<F>,
    pub is_null_context: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    context_id: String,
    text_id: String,
    token_logprobs: Vec<f64>,
    #[serde(default)]
    is_null_context: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "i2t")]
    ImageToText,
    #[serde(rename = "t2i")]
    TextToImage,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ImageToText => "i2t",
            Direction::TextToImage => "t2i",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One query with a single positive among ordered candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalTask {
    pub task_id: String,
    pub query_id: String,
    pub candidate_ids: Vec<String>,
    pub positive_index: usize,
    pub direction: Direction,
}

impl RetrievalTask {
    pub fn positive_id(&self) -> &str {
        &self.candidate_ids[self.positive_index]
    }

    /// `(context, text)` for the candidate at `idx`.
    pub fn pair(&self, idx: usize) -> (&str, &str) {
        let cand = self.candidate_ids[idx].as_str();
        match self.direction {
            Direction::ImageToText => (self.query_id.as_str(), cand),
            Direction::TextToImage => (cand, self.query_id.as_str()),
        }
    }

    pub fn image_ids(&self) -> Vec<&str> {
        match self.direction {
            Direction::ImageToText => vec![self.query_id.as_str()],
            Direction::TextToImage => self.candidate_ids.iter().map(String::as_str).collect(),
        }
    }

    pub fn text_ids(&self) -> Vec<&str> {
        match self.direction {
            Direction::ImageToText => self.candidate_ids.iter().map(String::as_str).collect(),
            Direction::TextToImage => vec![self.query_id.as_str()],
        }
    }

    fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::InvalidTask {
            task_id: self.task_id.clone(),
            message,
        };
        if self.candidate_ids.len() < 2 {
            return Err(invalid(format!(
                "needs at least 2 candidates, has {}",
                self.candidate_ids.len()
            )));
        }
        if self.positive_index >= self.candidate_ids.len() {
            return Err(invalid(format!(
                "positive_index {} out of range for {} candidates",
                self.positive_index,
                self.candidate_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.candidate_ids {
            if !seen.insert(c.as_str()) {
                return Err(invalid(format!("duplicate candidate {c}")));
            }
        }
        Ok(())
    }
}

/// Two images and two texts; `text_ids[j]` is the positive for `image_ids[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedTask {
    pub pair_id: String,
    pub image_ids: [String; 2],
    pub text_ids: [String; 2],
}

impl PairedTask {
    fn validate(&self) -> Result<()> {
        if self.image_ids[0] == self.image_ids[1] || self.text_ids[0] == self.text_ids[1] {
            return Err(Error::InvalidTask {
                task_id: self.pair_id.clone(),
                message: "paired task needs two distinct images and two distinct texts".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default)]
    pub tasks: Vec<RetrievalTask>,
    #[serde(default)]
    pub paired_tasks: Vec<PairedTask>,
}

/// Validated, indexed, immutable collection of score records and tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBank<F> {
    records: Vec<ScoreRecord<F>>,
    index: HashMap<String, HashMap<String, usize>>,
    tasks: Vec<RetrievalTask>,
    paired_tasks: Vec<PairedTask>,
    null_context_ids: BTreeSet<String>,
}

impl<F: Scalar> ScoreBank<F> {
    /// Validates records and manifest together. Records are clamped and checked
    /// exactly as on load; `line` in errors is the 1-based record position.
    pub fn new(records: Vec<ScoreRecord<F>>, manifest: Manifest) -> Result<Self> {
        let mut index: HashMap<String, HashMap<String, usize>> = HashMap::new();
        let mut null_flags: HashMap<&str, bool> = HashMap::new();
        let mut clean = Vec::with_capacity(records.len());
        for (pos, mut rec) in records.into_iter().enumerate() {
            let line = pos + 1;
            check_logprobs(&mut rec.token_logprobs, line)?;
            clean.push(rec);
        }
        for (pos, rec) in clean.iter().enumerate() {
            match null_flags.get(rec.context_id.as_str()) {
                Some(&flag) if flag != rec.is_null_context => {
                    return Err(Error::MalformedRow {
                        line: pos + 1,
                        message: format!(
                            "context {} is marked both as null and non-null",
                            rec.context_id
                        ),
                    })
                }
                _ => {
                    null_flags.insert(rec.context_id.as_str(), rec.is_null_context);
                }
            }
            let by_text = index.entry(rec.context_id.clone()).or_default();
            if by_text.insert(rec.text_id.clone(), pos).is_some() {
                return Err(Error::DuplicateRecord {
                    context_id: rec.context_id.clone(),
                    text_id: rec.text_id.clone(),
                });
            }
        }
        let null_context_ids: BTreeSet<String> = null_flags
            .into_iter()
            .filter(|(_, is_null)| *is_null)
            .map(|(id, _)| id.to_owned())
            .collect();

        let bank = ScoreBank {
            records: clean,
            index,
            tasks: manifest.tasks,
            paired_tasks: manifest.paired_tasks,
            null_context_ids,
        };
        bank.validate_manifest()?;
        Ok(bank)
    }

    fn validate_manifest(&self) -> Result<()> {
        let mut task_ids = HashSet::new();
        for task in &self.tasks {
            task.validate()?;
            if !task_ids.insert(task.task_id.as_str()) {
                return Err(Error::InvalidTask {
                    task_id: task.task_id.clone(),
                    message: "duplicate task_id".into(),
                });
            }
            for idx in 0..task.candidate_ids.len() {
                let (ctx, text) = task.pair(idx);
                self.record(ctx, text)?;
            }
            for image in task.image_ids() {
                self.check_not_null(image, &task.task_id)?;
            }
        }
        let mut pair_ids = HashSet::new();
        for pair in &self.paired_tasks {
            pair.validate()?;
            if !pair_ids.insert(pair.pair_id.as_str()) {
                return Err(Error::InvalidTask {
                    task_id: pair.pair_id.clone(),
                    message: "duplicate pair_id".into(),
                });
            }
            for image in &pair.image_ids {
                self.check_not_null(image, &pair.pair_id)?;
                for text in &pair.text_ids {
                    self.record(image, text)?;
                }
            }
        }
        Ok(())
    }

    fn check_not_null(&self, image: &str, task_id: &str) -> Result<()> {
        if self.null_context_ids.contains(image) {
            return Err(Error::InvalidTask {
                task_id: task_id.to_owned(),
                message: format!("null context {image} used as a task image"),
            });
        }
        Ok(())
    }

    pub fn records(&self) -> &[ScoreRecord<F>] {
        &self.records
    }

    pub fn tasks(&self) -> &[RetrievalTask] {
        &self.tasks
    }

    pub fn tasks_with_direction(&self, direction: Direction) -> Vec<RetrievalTask> {
        self.tasks
            .iter()
            .filter(|t| t.direction == direction)
            .cloned()
            .collect()
    }

    pub fn paired_tasks(&self) -> &[PairedTask] {
        &self.paired_tasks
    }

    pub fn null_context_ids(&self) -> &BTreeSet<String> {
        &self.null_context_ids
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            tasks: self.tasks.clone(),
            paired_tasks: self.paired_tasks.clone(),
        }
    }

    pub fn record(&self, context_id: &str, text_id: &str) -> Result<&ScoreRecord<F>> {
        self.index
            .get(context_id)
            .and_then(|by_text| by_text.get(text_id))
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::missing(context_id, text_id))
    }

    /// Aggregated log score of `text_id` given `context_id`.
    pub fn score(&self, context_id: &str, text_id: &str, mode: AggregationMode) -> Result<F> {
        mode.aggregate(&self.record(context_id, text_id)?.token_logprobs)
    }

    /// Writes the bank back out in the wire formats.
    pub fn save(&self, scores_path: &Path, manifest_path: &Path) -> Result<()> {
        let file = fs::File::create(scores_path).map_err(|e| Error::io(scores_path, e))?;
        let mut out = BufWriter::new(file);
        for rec in &self.records {
            let wire = WireRecord {
                context_id: rec.context_id.clone(),
                text_id: rec.text_id.clone(),
                token_logprobs: rec.token_logprobs.iter().map(|x| x.as_f64()).collect(),
                is_null_context: rec.is_null_context,
            };
            serde_json::to_writer(&mut out, &wire)?;
            out.write_all(b"\n").map_err(|e| Error::io(scores_path, e))?;
        }
        out.flush().map_err(|e| Error::io(scores_path, e))?;
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        fs::write(manifest_path, manifest + "\n").map_err(|e| Error::io(manifest_path, e))?;
        Ok(())
    }
}

fn check_logprobs<F: Scalar>(values: &mut [F], line: usize) -> Result<()> {
    if values.is_empty() {
        return Err(Error::MalformedRow {
            line,
            message: "token_logprobs is empty".into(),
        });
    }
    let slack = F::of(LOGPROB_SLACK);
    for v in values.iter_mut() {
        if !v.is_finite() {
            return Err(Error::MalformedRow {
                line,
                message: format!("non-finite token log-probability {v}"),
            });
        }
        if *v > slack {
            return Err(Error::PositiveLogProb {
                line,
                value: v.as_f64(),
            });
        }
        if *v > F::zero() {
            *v = F::zero();
        }
    }
    Ok(())
}

/// Parses JSON-lines score records. Blank lines are skipped.
pub fn parse_scores<F: Scalar>(text: &str) -> Result<Vec<ScoreRecord<F>>> {
    let mut records = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(raw).map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;
        let mut token_logprobs: Vec<F> = wire.token_logprobs.iter().map(|&x| F::of(x)).collect();
        check_logprobs(&mut token_logprobs, line)?;
        records.push(ScoreRecord {
            context_id: wire.context_id,
            text_id: wire.text_id,
            token_logprobs,
            is_null_context: wire.is_null_context,
        });
    }
    Ok(records)
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    serde_json::from_str(text).map_err(|e| Error::MalformedManifest(e.to_string()))
}

/// Loads and validates a bank from a scores file and a manifest file.
pub fn load_bank<F: Scalar>(scores_path: &Path, manifest_path: &Path) -> Result<ScoreBank<F>> {
    let scores = fs::read_to_string(scores_path).map_err(|e| Error::io(scores_path, e))?;
    let manifest = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let records = parse_scores(&scores)?;
    ScoreBank::new(records, parse_manifest(&manifest)?)
}

/// Loads a scores file without any tasks.
pub fn load_scores_only<F: Scalar>(scores_path: &Path) -> Result<ScoreBank<F>> {
    let scores = fs::read_to_string(scores_path).map_err(|e| Error::io(scores_path, e))?;
    ScoreBank::new(parse_scores(&scores)?, Manifest::default())
}

/// Applies `scorer` to each `(query, candidate)` record of `task`, in candidate order.
pub fn matrix_for_task<F, S>(bank: &ScoreBank<F>, task: &RetrievalTask, scorer: S) -> Result<Vec<F>>
where
    F: Scalar,
    S: Fn(&[F]) -> Result<F>,
{
    (0..task.candidate_ids.len())
        .map(|idx| {
            let (ctx, text) = task.pair(idx);
            scorer(&bank.record(ctx, text)?.token_logprobs)
        })
        .collect()
}
