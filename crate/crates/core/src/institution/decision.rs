//! Extraction of the high-level institution's policy decision from free text.
//!
//! The primary format is a fenced JSON block with the keys `share_agri`,
//! `share_env`, `adj_meat` and `adj_pa`. When the model ignores the format,
//! a percentage scanner recovers two budget shares and two signed goal
//! adjustments from prose.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `share_agri + share_env` before renormalisation.
pub const SHARE_SUM_TOLERANCE: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("no decision found: {0}")]
    ParseFailure(String),
    #[error("decision violates invariants: {0}")]
    InvariantViolation(String),
}

/// Budget shares for the two operational institutions plus signed relative
/// goal adjustments (`0.2` means +20%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub share_agri: f64,
    pub share_env: f64,
    pub adj_meat: f64,
    pub adj_pa: f64,
}

impl PolicyDecision {
    /// Even split, goals unchanged.
    pub const NEUTRAL: PolicyDecision = PolicyDecision {
        share_agri: 0.5,
        share_env: 0.5,
        adj_meat: 0.0,
        adj_pa: 0.0,
    };

    pub fn validate(&self) -> Result<(), DecisionError> {
        let fields = [self.share_agri, self.share_env, self.adj_meat, self.adj_pa];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(DecisionError::InvariantViolation("non-finite value".into()));
        }
        for share in [self.share_agri, self.share_env] {
            if !(0.0..=1.0).contains(&share) {
                return Err(DecisionError::InvariantViolation(format!(
                    "share {share} outside [0, 1]"
                )));
            }
        }
        if (self.share_agri + self.share_env - 1.0).abs() > 1e-6 {
            return Err(DecisionError::InvariantViolation(format!(
                "shares sum to {}",
                self.share_agri + self.share_env
            )));
        }
        for adj in [self.adj_meat, self.adj_pa] {
            if adj.abs() > 1.0 {
                return Err(DecisionError::InvariantViolation(format!(
                    "adjustment {adj} exceeds 100%"
                )));
            }
        }
        Ok(())
    }
}

/// The canonical fenced block accepted by [`parse_decision`]'s primary path.
pub fn render_decision(decision: &PolicyDecision) -> String {
    let json = serde_json::to_string(decision).expect("decision serializes");
    format!("```json\n{json}\n```")
}

/// Instructions appended to decision-producing prompts.
pub fn decision_format_hint() -> String {
    format!(
        "End your answer with your decision as a fenced JSON block, shares as fractions of the total budget \
         and goal adjustments as signed fractions of the current goals, for example:\n{}",
        render_decision(&PolicyDecision { share_agri: 0.5, share_env: 0.5, adj_meat: 0.05, adj_pa: 0.05 })
    )
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```[A-Za-z]*[ \t]*\r?\n(.*?)```").unwrap());

static PERCENT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)([+\-−–]?)(\d{1,3}(?:\.\d+)?)\s*(?:%|percent\b|per cent\b)").unwrap()
});

static SIGN_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(increas|rais|ris|boost|lift|expand|grow|decreas|reduc|cut|lower|shrink|drop)\w*\b[^.%\n]{0,60}\bby\s*$")
        .unwrap()
});

static AGRI_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)agricultur|farm|meat|livestock|land user|food production").unwrap()
});

static ENV_WORD: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)environment|conservation|protected|\bPA\b|nature|biodiversity").unwrap()
});

static GOAL_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bgoal|\btarget").unwrap());

static TRAILING_BY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bby\s*$").unwrap());

static BUDGET_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)budget|allocat|\bshare|fund|receiv|spend").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Agri,
    Env,
    Unknown,
}

#[derive(Debug, Clone, Copy)]
struct Percent {
    value: f64,
    signed: bool,
    side: Side,
}

/// Parses a decision, trying fenced JSON first and then prose percentages.
pub fn parse_decision(text: &str) -> Result<PolicyDecision, DecisionError> {
    for block in FENCE.captures_iter(text) {
        if let Some(raw) = from_json_block(&block[1]) {
            return normalise(raw);
        }
    }
    // inline JSON without a fence
    if let (Some(start), Some(end)) = (text.find('{'), text.rfind('}')) {
        if start < end {
            if let Some(raw) = from_json_block(&text[start..=end]) {
                return normalise(raw);
            }
        }
    }
    normalise(from_prose(text)?)
}

fn from_json_block(body: &str) -> Option<PolicyDecision> {
    let value: serde_json::Value = serde_json::from_str(body.trim()).ok()?;
    let obj = value.as_object()?;
    let share = |k: &str| json_number(obj.get(k)?, true);
    let adj = |k: &str| json_number(obj.get(k)?, false);
    Some(PolicyDecision {
        share_agri: share("share_agri")?,
        share_env: share("share_env")?,
        adj_meat: adj("adj_meat")?,
        adj_pa: adj("adj_pa")?,
    })
}

/// Numbers are fractions unless written as percentages: strings ending in
/// `%`, shares above 1, or adjustments beyond ±1.
fn json_number(v: &serde_json::Value, is_share: bool) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => {
            let x = n.as_f64()?;
            let as_percent = if is_share { x > 1.0 } else { x.abs() > 1.0 };
            Some(if as_percent { x / 100.0 } else { x })
        }
        serde_json::Value::String(s) => {
            let s = s.trim();
            match s.strip_suffix('%') {
                Some(p) => Some(p.trim().trim_start_matches('+').parse::<f64>().ok()? / 100.0),
                None => json_number(
                    &serde_json::Value::from(s.trim_start_matches('+').parse::<f64>().ok()?),
                    is_share,
                ),
            }
        }
        _ => None,
    }
}

fn segment_bounds(text: &str, at: usize) -> (usize, usize) {
    let is_break = |c: char| matches!(c, '\n' | ';') || c == '.';
    let start = text[..at]
        .char_indices()
        .rev()
        .find(|&(i, c)| is_break(c) && !is_decimal_point(text, i))
        .map_or(0, |(i, c)| i + c.len_utf8());
    let end = text[at..]
        .char_indices()
        .find(|&(i, c)| is_break(c) && !is_decimal_point(text, at + i))
        .map_or(text.len(), |(i, _)| at + i);
    (start, end)
}

fn is_decimal_point(text: &str, i: usize) -> bool {
    let b = text.as_bytes();
    b[i] == b'.'
        && i > 0
        && i + 1 < b.len()
        && b[i - 1].is_ascii_digit()
        && b[i + 1].is_ascii_digit()
}

/// Side of the institution keyword attached to a percentage: the closest
/// one before it, else the closest one after it, searching only within the
/// sentence and between the neighbouring percentages.
fn nearest_side(text: &str, start: usize, end: usize, prev_end: usize, next_start: usize) -> Side {
    let (lo, hi) = segment_bounds(text, start);
    let (lo, hi) = (lo.max(prev_end), hi.min(next_start));
    let last_before = |re: &Regex| re.find_iter(&text[lo..start]).last().map(|m| lo + m.end());
    let first_after = |re: &Regex| {
        (end <= hi)
            .then(|| re.find(&text[end..hi]).map(|m| end + m.start()))
            .flatten()
    };
    match (last_before(&AGRI_WORD), last_before(&ENV_WORD)) {
        (Some(a), Some(e)) => return if a > e { Side::Agri } else { Side::Env },
        (Some(_), None) => return Side::Agri,
        (None, Some(_)) => return Side::Env,
        (None, None) => {}
    }
    match (first_after(&AGRI_WORD), first_after(&ENV_WORD)) {
        (Some(a), Some(e)) if a < e => Side::Agri,
        (Some(_), Some(_)) => Side::Env,
        (Some(_), None) => Side::Agri,
        (None, Some(_)) => Side::Env,
        (None, None) => Side::Unknown,
    }
}

fn scan_percentages(text: &str) -> Vec<Percent> {
    let all: Vec<regex::Captures> = PERCENT.captures_iter(text).collect();
    let mut found = Vec::new();
    for (i, caps) in all.iter().enumerate() {
        let whole = caps.get(0).unwrap();
        let prev_end = if i > 0 {
            all[i - 1].get(0).unwrap().end()
        } else {
            0
        };
        let next_start = all
            .get(i + 1)
            .map_or(text.len(), |c| c.get(0).unwrap().start());
        let num = caps.get(2).unwrap();
        let before = &text[..whole.start()];
        if before
            .chars()
            .next_back()
            .is_some_and(|c| c.is_ascii_digit() || c == '.')
        {
            continue;
        }
        let mut sign = match &caps[1] {
            "+" => Some(1.0),
            "" => None,
            _ => Some(-1.0),
        };
        // '-' glued to a word or another percentage is a dash, not a sign
        if sign.is_some()
            && before
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric() || c == '%')
        {
            sign = None;
        }
        if sign.is_none() {
            if let Some(m) = SIGN_WORD.captures(before) {
                let word = m[1].to_ascii_lowercase();
                let negative =
                    ["decreas", "reduc", "cut", "lower", "shrink", "drop"].contains(&word.as_str());
                sign = Some(if negative { -1.0 } else { 1.0 });
            }
        }
        if sign.is_none() {
            // "raised by 5% and the PA goal by 10%": a bare figure about a goal,
            // or a bare "by" right after an adjustment, continues that adjustment.
            let (lo, _) = segment_bounds(text, whole.start());
            let context = &text[lo.max(prev_end)..whole.start()];
            let previous = found.last().filter(|p: &&Percent| p.signed);
            let continues = previous.is_some() && lo <= prev_end && TRAILING_BY.is_match(context);
            if (GOAL_WORD.is_match(context) || continues) && !BUDGET_WORD.is_match(context) {
                sign = Some(previous.map_or(1.0, |p| p.value.signum()));
            }
        }
        let magnitude: f64 = num.as_str().parse().unwrap();
        let side = nearest_side(text, num.start(), whole.end(), prev_end, next_start);
        found.push(Percent {
            value: sign.unwrap_or(1.0) * magnitude / 100.0,
            signed: sign.is_some(),
            side,
        });
    }
    found
}

/// First two values, swapped only when both are labelled and the
/// environmental one comes first.
fn ordered_pair(items: &[Percent]) -> Option<(f64, f64)> {
    let (a, b) = (items.first()?, items.get(1)?);
    if a.side == Side::Env && b.side == Side::Agri {
        Some((b.value, a.value))
    } else {
        Some((a.value, b.value))
    }
}

fn from_prose(text: &str) -> Result<PolicyDecision, DecisionError> {
    let found = scan_percentages(text);
    let shares: Vec<Percent> = found.iter().copied().filter(|p| !p.signed).collect();
    let adjustments: Vec<Percent> = found.iter().copied().filter(|p| p.signed).collect();
    let (share_agri, share_env) = ordered_pair(&shares).ok_or_else(|| {
        DecisionError::ParseFailure(format!(
            "expected two budget shares, found {}",
            shares.len()
        ))
    })?;
    let (adj_meat, adj_pa) = ordered_pair(&adjustments).ok_or_else(|| {
        DecisionError::ParseFailure(format!(
            "expected two signed goal adjustments, found {}",
            adjustments.len()
        ))
    })?;
    Ok(PolicyDecision {
        share_agri,
        share_env,
        adj_meat,
        adj_pa,
    })
}

fn normalise(raw: PolicyDecision) -> Result<PolicyDecision, DecisionError> {
    let sum = raw.share_agri + raw.share_env;
    if !sum.is_finite() || (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
        return Err(DecisionError::InvariantViolation(format!(
            "budget shares {:.4} + {:.4} do not sum to 1",
            raw.share_agri, raw.share_env
        )));
    }
    let mut d = raw;
    if (sum - 1.0).abs() > 1e-9 {
        d.share_agri /= sum;
        d.share_env /= sum;
    }
    d.validate()?;
    Ok(d)
}
