#![allow(dead_code)]

use std::path::PathBuf;

use hopes_core::institution::{parse_decision, DecisionError, PolicyDecision};
use serde::Deserialize;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

#[derive(Debug, Deserialize)]
pub struct CorpusCase {
    pub name: String,
    pub text: String,
    pub expect: Option<[f64; 4]>,
    pub error: Option<String>,
}

#[derive(Deserialize)]
struct Corpus {
    case: Vec<CorpusCase>,
}

pub fn decision_corpus() -> Vec<CorpusCase> {
    let text = std::fs::read_to_string(data_path("decision_corpus.toml")).expect("corpus file");
    toml::from_str::<Corpus>(&text).expect("corpus parses").case
}

/// Checks one golden case; `Err` carries a description of the mismatch.
pub fn check_case(case: &CorpusCase) -> Result<(), String> {
    let got = parse_decision(&case.text);
    match (&case.expect, case.error.as_deref(), got) {
        (Some(e), None, Ok(d)) => {
            let fields = [d.share_agri, d.share_env, d.adj_meat, d.adj_pa];
            if fields.iter().zip(e).all(|(a, b)| (a - b).abs() <= 1e-12) {
                Ok(())
            } else {
                Err(format!("{}: expected {e:?}, got {fields:?}", case.name))
            }
        }
        (None, Some("parse"), Err(DecisionError::ParseFailure(_))) => Ok(()),
        (None, Some("invariant"), Err(DecisionError::InvariantViolation(_))) => Ok(()),
        (_, _, got) => Err(format!(
            "{}: expected {:?}/{:?}, got {got:?}",
            case.name, case.expect, case.error
        )),
    }
}

pub fn decision(v: [f64; 4]) -> PolicyDecision {
    PolicyDecision {
        share_agri: v[0],
        share_env: v[1],
        adj_meat: v[2],
        adj_pa: v[3],
    }
}
