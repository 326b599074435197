//! Shared by the golden and acceptance test targets.

use std::fs;
use std::path::Path;

use cfexplain_core::extract::{parse_extraction, ExtractionRecord, ParseError};
use serde_json::Value;

fn check(raw: &str, expected: &Value) -> Result<(), String> {
    let got = parse_extraction(raw);
    if let Some(rec) = expected.get("record") {
        let want: ExtractionRecord = serde_json::from_value(rec.clone()).map_err(|e| e.to_string())?;
        return match got {
            Ok(r) if r == want => Ok(()),
            other => Err(format!("expected {want:?}, got {other:?}")),
        };
    }
    let kind = expected["error"].as_str().ok_or("expected file has neither record nor error")?;
    let err = got.err().ok_or("expected an error, parsed a record")?;
    if err.kind() != kind {
        return Err(format!("expected {kind}, got {err:?}"));
    }
    let key = match &err {
        ParseError::MissingKey(k) | ParseError::Uncoercible { key: k, .. } => Some(k.as_str()),
        _ => None,
    };
    if key != expected.get("key").and_then(Value::as_str) {
        return Err(format!("wrong key in {err:?}"));
    }
    Ok(())
}

/// Runs every golden case; returns `(name, outcome)` pairs.
pub fn run_golden_suite() -> Vec<(String, Result<(), String>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.strip_suffix(".txt").map(String::from)
        })
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let raw = fs::read_to_string(dir.join(format!("{name}.txt"))).unwrap();
            let expected: Value =
                serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.expected.json"))).unwrap())
                    .unwrap();
            let outcome = check(&raw, &expected);
            (name, outcome)
        })
        .collect()
}

