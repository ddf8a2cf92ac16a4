//! Monte-Carlo estimation of the language prior `P(t)`.
//!
//! The prior of a text is the probability-domain mean of its conditional score
//! over a set of contexts, `log((1/n) * sum_k exp(score(t | i_k)))`. The same
//! aggregation mode as the conditional score being debiased must be used.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::{log_mean_exp, Scalar};
use crate::scorebank::{PairedTask, RetrievalTask, ScoreBank};
use crate::scoring::AggregationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    NullContexts,
    TrainSamples,
    TestsetImages,
    Exact,
}

impl PriorSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorSource::NullContexts => "null_contexts",
            PriorSource::TrainSamples => "train_samples",
            PriorSource::TestsetImages => "testset_images",
            PriorSource::Exact => "exact",
        }
    }
}

impl fmt::Display for PriorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "null_contexts" => Ok(PriorSource::NullContexts),
            "train_samples" => Ok(PriorSource::TrainSamples),
            "testset_images" => Ok(PriorSource::TestsetImages),
            "exact" => Ok(PriorSource::Exact),
            other => Err(format!("unknown prior source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorMeta {
    pub source: PriorSource,
    pub n_contexts: usize,
    pub aggregation: AggregationMode,
}

/// Per-text log prior estimates. Entries are not normalized across texts.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTable<F> {
    pub entries: BTreeMap<String, F>,
    pub source: PriorSource,
    pub n_contexts: usize,
    pub aggregation: AggregationMode,
}

const META_KEY: &str = "meta";

impl<F: Scalar> PriorTable<F> {
    pub fn get(&self, text_id: &str) -> Result<F> {
        self.entries
            .get(text_id)
            .copied()
            .ok_or_else(|| Error::MissingPrior(text_id.to_owned()))
    }

    pub fn meta(&self) -> PriorMeta {
        PriorMeta {
            source: self.source,
            n_contexts: self.n_contexts,
            aggregation: self.aggregation,
        }
    }

    /// `{text_id: log_prior, ..., "meta": {...}}`.
    pub fn to_json(&self) -> Result<Value> {
        let mut map = Map::new();
        for (text, v) in &self.entries {
            if text == META_KEY {
                return Err(Error::MalformedPrior(format!(
                    "text id {META_KEY:?} collides with the metadata key"
                )));
            }
            let x = v.as_f64();
            let num = serde_json::Number::from_f64(x)
                .ok_or_else(|| Error::NonFiniteInput(format!("prior for {text} = {x}")))?;
            map.insert(text.clone(), Value::Number(num));
        }
        map.insert(META_KEY.into(), serde_json::to_value(self.meta())?);
        Ok(Value::Object(map))
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::MalformedPrior("expected a JSON object".into()))?;
        let meta: PriorMeta = serde_json::from_value(
            obj.get(META_KEY)
                .cloned()
                .ok_or_else(|| Error::MalformedPrior("missing meta".into()))?,
        )
        .map_err(|e| Error::MalformedPrior(e.to_string()))?;
        if meta.n_contexts == 0 {
            return Err(Error::MalformedPrior("n_contexts must be >= 1".into()));
        }
        let mut entries = BTreeMap::new();
        for (k, v) in obj {
            if k == META_KEY {
                continue;
            }
            let x = v
                .as_f64()
                .ok_or_else(|| Error::MalformedPrior(format!("entry {k} is not a number")))?;
            entries.insert(k.clone(), F::of(x));
        }
        Ok(PriorTable {
            entries,
            source: meta.source,
            n_contexts: meta.n_contexts,
            aggregation: meta.aggregation,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()?)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }
}

fn estimate_with_source<'a, F, I>(
    bank: &ScoreBank<F>,
    texts: I,
    context_ids: &[String],
    aggregation: AggregationMode,
    source: PriorSource,
) -> Result<PriorTable<F>>
where
    F: Scalar,
    I: IntoIterator<Item = &'a str>,
{
    if context_ids.is_empty() {
        return Err(Error::EmptyContexts);
    }
    let mut entries = BTreeMap::new();
    let mut scores = Vec::with_capacity(context_ids.len());
    for text in texts {
        if entries.contains_key(text) {
            continue;
        }
        scores.clear();
        for ctx in context_ids {
            scores.push(bank.score(ctx, text, aggregation)?);
        }
        entries.insert(text.to_owned(), log_mean_exp(&scores));
    }
    Ok(PriorTable {
        entries,
        source,
        n_contexts: context_ids.len(),
        aggregation,
    })
}

/// Averages each text's conditional score over `context_ids` in the
/// probability domain. Contexts may repeat (sampling with replacement).
pub fn estimate_prior<'a, F, I>(
    bank: &ScoreBank<F>,
    texts: I,
    context_ids: &[String],
    aggregation: AggregationMode,
) -> Result<PriorTable<F>>
where
    F: Scalar,
    I: IntoIterator<Item = &'a str>,
{
    estimate_with_source(bank, texts, context_ids, aggregation, PriorSource::TrainSamples)
}

/// Prior read out from the bank's content-free (null) contexts.
pub fn prior_from_null<'a, F, I>(
    bank: &ScoreBank<F>,
    texts: I,
    aggregation: AggregationMode,
) -> Result<PriorTable<F>>
where
    F: Scalar,
    I: IntoIterator<Item = &'a str>,
{
    if bank.null_context_ids().is_empty() {
        return Err(Error::NoNullContexts);
    }
    let contexts: Vec<String> = bank.null_context_ids().iter().cloned().collect();
    estimate_with_source(bank, texts, &contexts, aggregation, PriorSource::NullContexts)
}

fn push_unique<'a>(seen: &mut Vec<&'a str>, id: &'a str) {
    if !seen.contains(&id) {
        seen.push(id);
    }
}

/// Prior from averaging over every image that appears in a task family.
/// Costs no extra model calls when all image-text scores are precomputed.
pub fn prior_from_testset<F: Scalar>(
    bank: &ScoreBank<F>,
    task_family: &[RetrievalTask],
    aggregation: AggregationMode,
) -> Result<PriorTable<F>> {
    let mut images = Vec::new();
    let mut texts = Vec::new();
    for task in task_family {
        for id in task.image_ids() {
            push_unique(&mut images, id);
        }
        for id in task.text_ids() {
            push_unique(&mut texts, id);
        }
    }
    let images: Vec<String> = images.into_iter().map(str::to_owned).collect();
    estimate_with_source(bank, texts, &images, aggregation, PriorSource::TestsetImages)
}

/// [`prior_from_testset`] over the images of paired tasks.
pub fn prior_from_paired_testset<F: Scalar>(
    bank: &ScoreBank<F>,
    pairs: &[PairedTask],
    aggregation: AggregationMode,
) -> Result<PriorTable<F>> {
    let mut images = Vec::new();
    let mut texts = Vec::new();
    for pair in pairs {
        for id in &pair.image_ids {
            push_unique(&mut images, id);
        }
        for id in &pair.text_ids {
            push_unique(&mut texts, id);
        }
    }
    let images: Vec<String> = images.into_iter().map(str::to_owned).collect();
    estimate_with_source(bank, texts, &images, aggregation, PriorSource::TestsetImages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorebank::{parse_manifest, parse_scores, Manifest, ScoreRecord};

    fn rec(ctx: &str, text: &str, lp: f64, null: bool) -> ScoreRecord<f64> {
        ScoreRecord {
            context_id: ctx.into(),
            text_id: text.into(),
            token_logprobs: vec![lp],
            is_null_context: null,
        }
    }

    #[test]
    fn equal_scores_average_to_themselves() {
        let bank = ScoreBank::new(
            vec![rec("a", "t", -1.0, false), rec("b", "t", -1.0, false)],
            Manifest::default(),
        )
        .unwrap();
        let p = estimate_prior(&bank, ["t"], &["a".into(), "b".into()], AggregationMode::MeanTokenLog).unwrap();
        assert!((p.get("t").unwrap() - -1.0).abs() < 1e-15);
        assert_eq!(p.source, PriorSource::TrainSamples);
        assert_eq!(p.n_contexts, 2);
    }

    #[test]
    fn averages_in_probability_domain() {
        let bank = ScoreBank::new(
            vec![rec("a", "t", 0.2f64.ln(), false), rec("b", "t", 0.4f64.ln(), false)],
            Manifest::default(),
        )
        .unwrap();
        let p = estimate_prior(&bank, ["t"], &["a".into(), "b".into()], AggregationMode::SumLog).unwrap();
        assert!((p.get("t").unwrap() - 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let bank = ScoreBank::new(vec![rec("a", "t", -1.0, false)], Manifest::default()).unwrap();
        assert!(matches!(
            estimate_prior(&bank, ["t"], &[], AggregationMode::SumLog),
            Err(Error::EmptyContexts)
        ));
        assert!(matches!(
            estimate_prior(&bank, ["u"], &["a".into()], AggregationMode::SumLog),
            Err(Error::MissingRecord { .. })
        ));
        assert!(matches!(
            prior_from_null(&bank, ["t"], AggregationMode::SumLog),
            Err(Error::NoNullContexts)
        ));
        let p = estimate_prior(&bank, ["t"], &["a".into()], AggregationMode::SumLog).unwrap();
        assert!(matches!(p.get("zzz"), Err(Error::MissingPrior(_))));
    }

    #[test]
    fn null_prior_counts_contexts() {
        let recs = (0..3).map(|k| rec(&format!("n{k}"), "t", -2.0, true)).collect();
        let bank = ScoreBank::new(recs, Manifest::default()).unwrap();
        let p = prior_from_null(&bank, ["t"], AggregationMode::MeanTokenLog).unwrap();
        assert_eq!(p.n_contexts, 3);
        assert_eq!(p.source, PriorSource::NullContexts);
        assert!((p.get("t").unwrap() - -2.0).abs() < 1e-15);
    }

    #[test]
    fn testset_prior_averages_query_images() {
        let scores = [
            ("i0", "a", 0.1f64.ln()),
            ("i0", "b", 0.5f64.ln()),
            ("i1", "a", 0.3f64.ln()),
            ("i1", "b", 0.5f64.ln()),
        ]
        .iter()
        .map(|(c, t, v)| serde_json::json!({"context_id": c, "text_id": t, "token_logprobs": [v]}).to_string())
        .collect::<Vec<_>>()
        .join("\n");
        let manifest = r#"{"tasks":[
            {"task_id":"q0","query_id":"i0","candidate_ids":["a","b"],"positive_index":0,"direction":"i2t"},
            {"task_id":"q1","query_id":"i1","candidate_ids":["a","b"],"positive_index":1,"direction":"i2t"}]}"#;
        let bank: ScoreBank<f64> =
            ScoreBank::new(parse_scores(&scores).unwrap(), parse_manifest(manifest).unwrap()).unwrap();
        let p = prior_from_testset(&bank, bank.tasks(), AggregationMode::SumLog).unwrap();
        assert!((p.get("a").unwrap() - 0.2f64.ln()).abs() < 1e-15);
        assert_eq!(p.n_contexts, 2);
        assert_eq!(p.source, PriorSource::TestsetImages);

        let single = prior_from_testset(&bank, &bank.tasks()[..1], AggregationMode::SumLog).unwrap();
        assert!((single.get("a").unwrap() - 0.1f64.ln()).abs() < 1e-15);
        assert_eq!(single.n_contexts, 1);
    }

    #[test]
    fn json_round_trip() {
        let mut entries = BTreeMap::new();
        entries.insert("t0".to_string(), -1.25f64);
        entries.insert("t1".to_string(), -0.1f64);
        let p = PriorTable {
            entries,
            source: PriorSource::Exact,
            n_contexts: 4,
            aggregation: AggregationMode::SumLog,
        };
        let v = p.to_json().unwrap();
        assert_eq!(v["meta"]["source"], "exact");
        assert_eq!(v["t0"], -1.25);
        assert_eq!(PriorTable::<f64>::from_json(&v).unwrap(), p);

        let mut bad = p.clone();
        bad.entries.insert("meta".into(), -1.0);
        assert!(bad.to_json().is_err());
        assert!(PriorTable::<f64>::from_json(&serde_json::json!({"t": -1.0})).is_err());
    }
}
