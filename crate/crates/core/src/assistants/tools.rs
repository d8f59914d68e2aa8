use std::fmt::Write;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{describe_stats, stats_block, DataCatalog};

pub const TOOL_NAMES: [&str; 4] = [
    "load_series",
    "describe_stats",
    "compare_to_goal",
    "generate_report",
];

static DIRECTIVE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```tool[ \t]*\r?\n(.*?)```").unwrap());

/// A fenced `tool` block from a model reply.
#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Call { tool: String, args: Value },
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub args: Value,
    pub result: String,
    pub failed: bool,
}

pub fn parse_directives(text: &str) -> Vec<Directive> {
    DIRECTIVE
        .captures_iter(text)
        .map(|c| {
            #[derive(Deserialize)]
            struct Raw {
                tool: String,
                #[serde(default)]
                args: Value,
            }
            match serde_json::from_str::<Raw>(c[1].trim()) {
                Ok(raw) => Directive::Call {
                    tool: raw.tool,
                    args: raw.args,
                },
                Err(e) => Directive::Malformed(e.to_string()),
            }
        })
        .collect()
}

fn arg<'a>(args: &'a Value, key: &str) -> Result<&'a str, String> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("missing string argument `{key}`"))
}

fn default_goal(series: &str) -> Option<&'static str> {
    match series {
        "meat_supply" => Some("goal_meat"),
        "pa_coverage" => Some("goal_pa"),
        _ => None,
    }
}

fn load_series(args: &Value, catalog: &DataCatalog) -> Result<String, String> {
    let name = arg(args, "name")?;
    let points = catalog.series(name).map_err(|e| e.to_string())?;
    let last = args.get("last").and_then(Value::as_u64).unwrap_or(15) as usize;
    let mut out = format!("tick,{name}\n");
    for (t, v) in &points[points.len().saturating_sub(last)..] {
        writeln!(out, "{t},{v:.6}").unwrap();
    }
    Ok(out)
}

fn compare_to_goal(args: &Value, catalog: &DataCatalog) -> Result<String, String> {
    let series = arg(args, "series")?;
    let goal = match args.get("goal").and_then(Value::as_str) {
        Some(g) => g,
        None => default_goal(series)
            .ok_or_else(|| format!("no default goal for `{series}`; pass `goal`"))?,
    };
    let actual = catalog.series(series).map_err(|e| e.to_string())?;
    let target = catalog.series(goal).map_err(|e| e.to_string())?;
    let (Some(&(tick, a)), Some(&(_, g))) = (actual.last(), target.last()) else {
        return Err("no data yet".into());
    };
    let mut out = format!(
        "at tick {tick}: {series} = {a:.6}, {goal} = {g:.6}, gap = {:.6}",
        g - a
    );
    if g != 0.0 {
        write!(out, " ({:.2}% of goal)", 100.0 * (g - a) / g).unwrap();
    }
    Ok(out)
}

/// Executes a directive against the catalog. Errors come back as result
/// text so the model can recover.
pub fn run_tool(directive: &Directive, catalog: &DataCatalog) -> ToolCall {
    let (tool, args) = match directive {
        Directive::Call { tool, args } => (tool.clone(), args.clone()),
        Directive::Malformed(e) => {
            return ToolCall {
                tool: "<malformed>".into(),
                args: Value::Null,
                result: format!("error: malformed tool directive: {e}"),
                failed: true,
            }
        }
    };
    let outcome = match tool.as_str() {
        "load_series" => load_series(&args, catalog),
        "describe_stats" => arg(&args, "name").and_then(|name| {
            let points = catalog.series(name).map_err(|e| e.to_string())?;
            let stats = describe_stats(name, &points).map_err(|e| e.to_string())?;
            Ok(stats_block(name, &stats))
        }),
        "compare_to_goal" => compare_to_goal(&args, catalog),
        "generate_report" => Ok("a report will be drafted into the decision box".into()),
        other => Err(format!(
            "unknown tool `{other}`; available: {}",
            TOOL_NAMES.join(", ")
        )),
    };
    let failed = outcome.is_err();
    let result = outcome.unwrap_or_else(|e| format!("error: {e}"));
    ToolCall {
        tool,
        args,
        result,
        failed,
    }
}
