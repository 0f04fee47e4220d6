//! WebAssembly bindings for the browser demo. Each export takes and returns
//! JSON text; the plain functions behind them are usable natively too.

use fedtime::report::{measure, sweep, SummaryRow};
use fedtime::scenario::ScenarioConfig;
use fedtime::sim::Outcome;
use fedtime::trace::{RecordKind, TraceRecord};
use fedtime::{Tag, TimeValue};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Trace records shown per run; the rest are only counted.
const EXCERPT: usize = 400;

#[derive(Serialize)]
struct TagOps {
    sum: Tag,
    difference: Option<Tag>,
    difference_error: Option<String>,
    delay_tag: Option<Tag>,
}

/// Delays `a` by `b`, retreats `a` by `b`, and converts `delay` (a time
/// value such as `10ms`, `0` or `never`) into a delay tag when given.
pub fn tag_ops_json(a: &str, b: &str, delay: &str) -> Result<String, String> {
    let a: Tag = a.parse().map_err(|e| format!("first tag: {e}"))?;
    let b: Tag = b.parse().map_err(|e| format!("second tag: {e}"))?;
    let delay_tag = match delay.trim() {
        "" => None,
        d => Some(Tag::from_delay(d.parse::<TimeValue>().map_err(|e| format!("delay: {e}"))?)),
    };
    let (difference, difference_error) = match a.retreat_by(b) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let ops = TagOps { sum: a.delayed_by(b), difference, difference_error, delay_tag };
    serde_json::to_string(&ops).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct RunView<'a> {
    scenario: String,
    completed: bool,
    outcome: String,
    summary: &'a SummaryRow,
    records: usize,
    excerpt: Vec<&'a TraceRecord>,
}

/// Runs a scenario config and returns its summary and the first signal
/// records (deliveries and state dumps left out).
pub fn run_json(config: &str) -> Result<String, String> {
    let cfg: ScenarioConfig = serde_json::from_str(config).map_err(|e| format!("config: {e}"))?;
    let m = measure(&cfg).map_err(|e| e.to_string())?;
    let outcome = match &m.report.outcome {
        Outcome::Completed => "completed".to_string(),
        other => format!("{other:?}"),
    };
    let view = RunView {
        scenario: m.scenario.name.clone(),
        completed: m.completed(),
        outcome,
        summary: &m.summary,
        records: m.report.trace.len(),
        excerpt: m
            .report
            .trace
            .iter()
            .filter(|r| !r.is_delivery() && r.kind != RecordKind::Dump)
            .take(EXCERPT)
            .collect(),
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Baseline and DNET rows for each period in a comma-separated list.
pub fn sweep_json(config: &str, periods: &str) -> Result<String, String> {
    let cfg: ScenarioConfig = serde_json::from_str(config).map_err(|e| format!("config: {e}"))?;
    let periods = periods
        .split(',')
        .map(|p| match p.parse::<TimeValue>() {
            Ok(v) if v.is_finite() && v.as_ns() > 0 => Ok(v.as_ns()),
            _ => Err(format!("bad period {p:?}")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = sweep(&cfg, &periods).map_err(|e| e.to_string())?;
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

/// Nanoseconds in a duration such as `20ms`.
#[wasm_bindgen]
pub fn duration_ns(text: &str) -> Result<f64, JsValue> {
    match text.parse::<TimeValue>() {
        Ok(v) if v.is_finite() => Ok(v.as_ns() as f64),
        _ => Err(JsValue::from_str(&format!("bad duration {text:?}"))),
    }
}

#[wasm_bindgen]
pub fn tag_ops(a: &str, b: &str, delay: &str) -> Result<String, JsValue> {
    tag_ops_json(a, b, delay).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn run_scenario(config: &str) -> Result<String, JsValue> {
    run_json(config).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep_periods(config: &str, periods: &str) -> Result<String, JsValue> {
    sweep_json(config, periods).map_err(|e| JsValue::from_str(&e))
}
