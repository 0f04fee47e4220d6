//! Per-run signal counts and period sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioConfig, ScenarioError};
use crate::signal::{Actor, SignalKind};
use crate::sim::{run, Outcome, RunReport};
use crate::topology::TopologyError;
use crate::trace::Trace;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub period_ns: i64,
    #[serde(with = "on_off")]
    pub dnet: bool,
    pub net_count: u64,
    pub ltc_count: u64,
    pub tag_count: u64,
    pub dnet_count: u64,
    /// Messages sent by federates; RTI forwards are not counted again.
    pub msg_count: u64,
    /// NETs of the baseline run divided by NETs of this run.
    pub reduction_ratio: f64,
}

mod on_off {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(if *v { "on" } else { "off" })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match String::deserialize(d)?.as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(serde::de::Error::custom(format!("expected on or off, got {other:?}"))),
        }
    }
}

impl SummaryRow {
    pub fn from_trace(scenario: &str, period_ns: i64, dnet: bool, trace: &Trace, baseline_net: u64) -> Self {
        let msgs = trace.count_signals(SignalKind::Msg);
        let net_count = trace.count_signals(SignalKind::Net).total;
        SummaryRow {
            scenario: scenario.to_string(),
            period_ns,
            dnet,
            net_count,
            ltc_count: trace.count_signals(SignalKind::Ltc).total,
            tag_count: trace.count_signals(SignalKind::Tag).total,
            dnet_count: trace.count_signals(SignalKind::Dnet).total,
            msg_count: msgs.total - msgs.per_actor.get(&Actor::Rti).copied().unwrap_or(0),
            reduction_ratio: baseline_net as f64 / net_count.max(1) as f64,
        }
    }
}

/// A finished run together with its summary row.
pub struct Measured {
    pub scenario: Scenario,
    pub report: RunReport,
    pub summary: SummaryRow,
}

impl Measured {
    pub fn completed(&self) -> bool {
        self.report.outcome == Outcome::Completed
    }
}

/// Runs `config`. With DNET on, a baseline run is made as well to fill in
/// the reduction ratio.
pub fn measure(config: &ScenarioConfig) -> Result<Measured, RunError> {
    let scenario = config.build()?;
    let report = run(&scenario, &config.run_config())?;
    let net = report.count(SignalKind::Net);
    let baseline_net = if config.dnet {
        let base = ScenarioConfig { dnet: false, ..config.clone() };
        run(&scenario, &base.run_config())?.count(SignalKind::Net)
    } else {
        net
    };
    let summary = SummaryRow::from_trace(&config.scenario.to_string(), config.period_ns, config.dnet, &report.trace, baseline_net);
    Ok(Measured { scenario, report, summary })
}

/// Baseline and DNET rows for each period.
pub fn sweep(template: &ScenarioConfig, periods: &[i64]) -> Result<Vec<(SummaryRow, SummaryRow)>, RunError> {
    periods
        .iter()
        .map(|&period_ns| {
            let base_cfg = ScenarioConfig { period_ns, dnet: false, ..template.clone() };
            let scenario = base_cfg.build()?;
            let base = run(&scenario, &base_cfg.run_config())?;
            let with = run(&scenario, &ScenarioConfig { dnet: true, ..base_cfg.clone() }.run_config())?;
            let base_net = base.count(SignalKind::Net);
            let name = template.scenario.to_string();
            Ok((
                SummaryRow::from_trace(&name, period_ns, false, &base.trace, base_net),
                SummaryRow::from_trace(&name, period_ns, true, &with.trace, base_net),
            ))
        })
        .collect()
}
