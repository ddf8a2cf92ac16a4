use proptest::prelude::*;
use vlscore::scorebank::{parse_manifest, parse_scores};
use vlscore::synthworld::{export_bank, generate_world, ExportOptions, Scenario, WorldParams};
use vlscore::{load_bank, Error, Manifest, ScoreBank, ScoreBank32, ScoreBank64};

const VALID: &str = r#"{"context_id":"img0","text_id":"cap0","token_logprobs":[-0.5,-1.25],"is_null_context":false}"#;

fn small_bank() -> ScoreBank64 {
    let w = generate_world(&WorldParams {
        n_images: 4,
        n_captions: 6,
        ..WorldParams::default()
    })
    .unwrap();
    let mut opts = ExportOptions::for_world(&w, Scenario::UniformTest, 1);
    opts.n_paired = 3;
    opts.include_t2i = true;
    export_bank(&w, &opts).unwrap().bank
}

#[test]
fn save_then_load_is_identity() {
    let bank = small_bank();
    let dir = tempfile::tempdir().unwrap();
    let (s, m) = (dir.path().join("s.jsonl"), dir.path().join("m.json"));
    bank.save(&s, &m).unwrap();
    let again: ScoreBank64 = load_bank(&s, &m).unwrap();
    assert_eq!(again, bank);

    // and a second pass is byte-stable
    let (s2, m2) = (dir.path().join("s2.jsonl"), dir.path().join("m2.json"));
    again.save(&s2, &m2).unwrap();
    assert_eq!(std::fs::read(&s).unwrap(), std::fs::read(&s2).unwrap());
    assert_eq!(std::fs::read(&m).unwrap(), std::fs::read(&m2).unwrap());
}

#[test]
fn single_precision_bank_loads_the_same_files() {
    let bank = small_bank();
    let dir = tempfile::tempdir().unwrap();
    let (s, m) = (dir.path().join("s.jsonl"), dir.path().join("m.json"));
    bank.save(&s, &m).unwrap();
    let single: ScoreBank32 = load_bank(&s, &m).unwrap();
    assert_eq!(single.records().len(), bank.records().len());
    for (a, b) in single.records().iter().zip(bank.records()) {
        for (x, y) in a.token_logprobs.iter().zip(&b.token_logprobs) {
            assert!((f64::from(*x) - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }
}

#[test]
fn out_of_range_for_f32_is_rejected_not_truncated() {
    let line = r#"{"context_id":"a","text_id":"b","token_logprobs":[-1e300]}"#;
    assert!(parse_scores::<f64>(line).is_ok());
    assert!(matches!(parse_scores::<f32>(line), Err(Error::MalformedRow { line: 1, .. })));
}

#[test]
fn error_lines_are_one_based_and_skip_nothing() {
    let text = format!("{VALID}\n\n{{\"context_id\":\"x\"}}\n");
    match parse_scores::<f64>(&text) {
        Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

/// Perturbations of a valid line: truncation, byte splices and field swaps.
fn mutated_line() -> impl Strategy<Value = String> {
    let truncate = (0..VALID.len()).prop_map(|n| VALID[..n].to_owned());
    let splice = (0..VALID.len(), any::<char>()).prop_map(|(at, c)| {
        let mut s = VALID.to_owned();
        let at = (0..=at).rev().find(|&i| s.is_char_boundary(i)).unwrap_or(0);
        s.insert(at, c);
        s
    });
    let value = prop_oneof![
        Just("1e400".to_owned()),
        Just("0.5".to_owned()),
        Just("\"x\"".to_owned()),
        Just("null".to_owned()),
        Just("[]".to_owned()),
        (-10.0f64..1.0).prop_map(|v| v.to_string()),
    ];
    let field = prop_oneof![Just("context_id"), Just("text_id"), Just("token_logprobs"), Just("is_null_context")];
    let swap = (field, value).prop_map(|(f, v)| {
        let mut obj: serde_json::Map<String, serde_json::Value> = serde_json::from_str(VALID).unwrap();
        let raw = format!(r#"{{"{f}": {v}}}"#);
        match serde_json::from_str::<serde_json::Value>(&raw) {
            Ok(serde_json::Value::Object(o)) => obj.extend(o),
            _ => return raw,
        }
        serde_json::Value::Object(obj).to_string()
    });
    prop_oneof![truncate, splice, swap, ".{0,60}".prop_map(String::from)]
}

fn record_is_sound(rec: &vlscore::ScoreRecord64) -> bool {
    !rec.token_logprobs.is_empty() && rec.token_logprobs.iter().all(|v| v.is_finite() && *v <= 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn malformed_rows_yield_typed_errors(lines in prop::collection::vec(mutated_line(), 1..6)) {
        let text = lines.join("\n");
        match parse_scores::<f64>(&text) {
            Ok(records) => prop_assert!(records.iter().all(record_is_sound)),
            Err(Error::MalformedRow { line, .. }) | Err(Error::PositiveLogProb { line, .. }) => {
                prop_assert!(line >= 1 && line <= lines.len());
            }
            Err(other) => prop_assert!(false, "unexpected error kind: {other:?}"),
        }
    }

    #[test]
    fn manifests_never_half_build_a_bank(
        candidates in prop::collection::vec("cap[0-3]", 0..5),
        query in "img[0-2]|n0",
        positive in 0usize..6,
        direction in prop_oneof![Just("i2t"), Just("t2i"), Just("sideways")],
    ) {
        let mut text = String::new();
        for c in ["img0", "img1", "n0"] {
            for t in ["cap0", "cap1", "cap2"] {
                let null = c == "n0";
                text.push_str(&format!(
                    "{{\"context_id\":\"{c}\",\"text_id\":\"{t}\",\"token_logprobs\":[-1.0],\"is_null_context\":{null}}}\n"
                ));
            }
        }
        let records = parse_scores::<f64>(&text).unwrap();
        let manifest_text = serde_json::json!({"tasks": [{
            "task_id": "t", "query_id": query, "candidate_ids": candidates,
            "positive_index": positive, "direction": direction
        }]})
        .to_string();
        let manifest: Manifest = match parse_manifest(&manifest_text) {
            Ok(m) => m,
            Err(Error::MalformedManifest(_)) => return Ok(()),
            Err(other) => return Err(TestCaseError::fail(format!("{other:?}"))),
        };
        match ScoreBank::new(records, manifest) {
            Ok(bank) => {
                for task in bank.tasks() {
                    for idx in 0..task.candidate_ids.len() {
                        let (c, t) = task.pair(idx);
                        prop_assert!(bank.record(c, t).is_ok());
                    }
                }
            }
            Err(Error::MissingRecord { .. }) | Err(Error::InvalidTask { .. }) => {}
            Err(other) => prop_assert!(false, "unexpected error kind: {other:?}"),
        }
    }
}
