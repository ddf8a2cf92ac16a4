use std::fmt::Write;

use vlscore::alpha_tuner::TuneResult;
use vlscore::retrieval_eval::{METRIC_GROUP, METRIC_IMAGE, METRIC_TEXT};
use vlscore::{EvalReport, Protocol};

use crate::CliError;

fn metric_label(protocol: Protocol, name: &str) -> String {
    match (protocol, name) {
        (Protocol::Paired, METRIC_TEXT) => "Text Score".into(),
        (Protocol::Paired, METRIC_IMAGE) => "Image Score".into(),
        (Protocol::Paired, METRIC_GROUP) => "Group Score".into(),
        (_, "accuracy") => "Accuracy".into(),
        _ => name.to_owned(),
    }
}

/// Paired metrics in their conventional order, everything else sorted.
fn ordered_metrics(report: &EvalReport) -> Vec<(&str, f64)> {
    let mut rows: Vec<(&str, f64)> = report.metrics.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    if report.protocol == Protocol::Paired {
        let rank = |k: &str| [METRIC_TEXT, METRIC_IMAGE, METRIC_GROUP].iter().position(|m| *m == k);
        rows.sort_by_key(|(k, _)| rank(k).unwrap_or(usize::MAX));
    } else {
        rows.sort_by_key(|(k, _)| recall_order(k));
    }
    rows
}

// "R@10" after "R@5".
fn recall_order(name: &str) -> (usize, String) {
    let k = name.strip_prefix("R@").and_then(|k| k.parse().ok()).unwrap_or(0);
    (k, name.to_owned())
}

fn header(report: &EvalReport) -> String {
    let prior = report.prior_source.map_or("none", |p| p.as_str());
    format!(
        "{} | alpha={} | {} | prior={} | n={}",
        report.protocol.as_str(),
        report.alpha.value(),
        report.aggregation,
        prior,
        report.n_tasks
    )
}

pub fn report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    writeln!(out, "{}", header(report)).unwrap();
    for (name, value) in ordered_metrics(report) {
        writeln!(out, "  {:<12} {:>7.2}", metric_label(report.protocol, name), value).unwrap();
    }
    out
}

pub fn tune_summary(result: &TuneResult) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "alpha*={:.3} objective={:.2} (step {})",
        result.alpha_star.value(),
        result.objective_at_star,
        result.step
    )
    .unwrap();
    if result.splits > 0 {
        writeln!(
            out,
            "held-out {:.2} ± {:.2} over {} splits; alpha {:.3} ± {:.3}",
            result.mean, result.std, result.splits, result.alpha_mean, result.alpha_std
        )
        .unwrap();
    }
    out
}

/// One row per report; metric columns are the union over all reports.
pub fn reports_csv(reports: &[EvalReport], names: &[String]) -> Result<String, CliError> {
    let mut metrics: Vec<String> = reports.iter().flat_map(|r| r.metrics.keys().cloned()).collect();
    metrics.sort_by_key(|m| recall_order(m));
    metrics.dedup();

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["source", "protocol", "alpha", "aggregation", "prior_source", "n_tasks"];
    head.extend(metrics.iter().map(String::as_str));
    w.write_record(&head)?;
    for (report, name) in reports.iter().zip(names) {
        let mut row = vec![
            name.clone(),
            report.protocol.as_str().to_owned(),
            report.alpha.value().to_string(),
            report.aggregation.to_string(),
            report.prior_source.map_or(String::new(), |p| p.as_str().to_owned()),
            report.n_tasks.to_string(),
        ];
        row.extend(metrics.iter().map(|m| report.metric(m).map_or(String::new(), |v| v.to_string())));
        w.write_record(&row)?;
    }
    finish(w)
}

pub fn curves_csv(tunes: &[(String, TuneResult)]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["source", "alpha", "objective"])?;
    for (name, result) in tunes {
        for p in &result.curve {
            w.write_record([name.clone(), p.alpha.to_string(), p.objective.to_string()])?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Plain-text rendering grouped into one section per protocol.
pub fn reports_text(reports: &[EvalReport], names: &[String], tunes: &[(String, TuneResult)]) -> String {
    let mut out = String::new();
    let protocols = [Protocol::I2tAccuracy, Protocol::RecallAtK, Protocol::Paired, Protocol::T2iRecall];
    for protocol in protocols {
        let section: Vec<_> = reports.iter().zip(names).filter(|(r, _)| r.protocol == protocol).collect();
        if section.is_empty() {
            continue;
        }
        writeln!(out, "== {} ==", protocol.as_str()).unwrap();
        for (report, name) in section {
            writeln!(out, "{name}").unwrap();
            out.push_str(&report_table(report));
        }
        out.push('\n');
    }
    if !tunes.is_empty() {
        writeln!(out, "== tune ==").unwrap();
        for (name, result) in tunes {
            writeln!(out, "{name}").unwrap();
            out.push_str(&tune_summary(result));
        }
    }
    out
}
