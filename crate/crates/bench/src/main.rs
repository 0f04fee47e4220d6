//! `fedtime`: run coordination scenarios, sweep timer periods, and check or
//! compare traces.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fedtime::checker::{check_dnet_consistency, check_equivalence, check_safety, malformed_lines, Verdict};
use fedtime::report::{measure, sweep, SummaryRow};
use fedtime::scenario::{ScenarioConfig, ScenarioKind};
use fedtime::sim::{LatencyModel, Outcome};
use fedtime::trace::Trace;
use fedtime::{FederateId, TimeValue, Topology};

#[derive(Parser)]
#[command(name = "fedtime", version, about = "Logical-time coordination scenarios with and without DNET")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and report signal counts.
    Run(RunArgs),
    /// Run baseline and DNET for each timer period.
    Sweep(SweepArgs),
    /// Compare the processed events of two traces.
    Compare { a: PathBuf, b: PathBuf },
    /// Check a trace for safety violations (and DNET values, given a topology).
    Check {
        trace: PathBuf,
        #[arg(long)]
        topology: Option<PathBuf>,
    },
    /// Print the topology of a built-in scenario as JSON.
    Topology {
        #[arg(long, default_value = "sparse")]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print delays, closures and zero-delay cycles of a topology file.
    Analyze { topology: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct ScenarioArgs {
    /// JSON scenario config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Detection period (ns, or with us/ms/s suffix).
    #[arg(long, value_parser = positive_duration)]
    detection: Option<i64>,
    /// Logical time horizon.
    #[arg(long, value_parser = positive_duration)]
    duration: Option<i64>,
    /// zero, fixed:K or channels:D,src>dst=K,...
    #[arg(long)]
    latency: Option<LatencyModel>,
    /// Seed for the random scenario.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Timer period.
    #[arg(long, value_parser = positive_duration)]
    period: Option<i64>,
    #[arg(long, value_enum)]
    dnet: Option<Switch>,
    /// Write the full trace as JSON Lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the summary row as CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Comma-separated timer periods.
    #[arg(long, value_delimiter = ',', required = true, value_parser = positive_duration)]
    periods: Vec<i64>,
    #[arg(long)]
    summary: Option<PathBuf>,
}

/// Clap value parser for durations that must be positive and finite.
fn positive_duration(s: &str) -> Result<i64, String> {
    let v: TimeValue = s.parse().map_err(|e| format!("{e}"))?;
    if !v.is_finite() || v.as_ns() <= 0 {
        return Err(format!("{s:?} is not a positive finite duration"));
    }
    Ok(v.as_ns())
}

/// Largest unit that divides `ns` exactly.
fn human(ns: i64) -> String {
    for (unit, scale) in [("s", 1_000_000_000), ("ms", 1_000_000), ("us", 1_000)] {
        if ns != 0 && ns % scale == 0 {
            return format!("{}{unit}", ns / scale);
        }
    }
    format!("{ns}ns")
}

impl ScenarioArgs {
    fn config(&self, period: Option<i64>, dnet: Option<Switch>) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ScenarioConfig {
                scenario: ScenarioKind::Sparse,
                period_ns: 20_000_000,
                detection_period_ns: 5_000_000_000,
                duration_ns: 500_000_000_000,
                dnet: true,
                latency: LatencyModel::Zero,
                seed: 0,
            },
        };
        if let Some(k) = self.scenario {
            cfg.scenario = k;
        }
        if let Some(p) = period {
            cfg.period_ns = p;
        }
        if let Some(d) = self.detection {
            cfg.detection_period_ns = d;
        }
        if let Some(d) = self.duration {
            cfg.duration_ns = d;
        }
        if let Some(l) = &self.latency {
            cfg.latency = l.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = dnet {
            cfg.dnet = matches!(d, Switch::On);
        }
        Ok(cfg)
    }
}

fn write_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let cfg = args.common.config(args.period, args.dnet)?;
    let m = measure(&cfg)?;
    if let Some(path) = &args.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = BufWriter::new(file);
        m.report.trace.write_jsonl(&mut out)?;
        out.flush()?;
    }
    if let Some(path) = &args.summary {
        write_csv(path, std::slice::from_ref(&m.summary))?;
    }
    let r = &m.summary;
    println!("scenario   {}", m.scenario.name);
    println!("period     {}", human(r.period_ns));
    println!("dnet       {}", if r.dnet { "on" } else { "off" });
    println!("NET {}  LTC {}  TAG {}  DNET {}  MSG {}", r.net_count, r.ltc_count, r.tag_count, r.dnet_count, r.msg_count);
    if r.dnet {
        println!("reduction  {:.1}x", r.reduction_ratio);
    }
    match &m.report.outcome {
        Outcome::Completed => Ok(ExitCode::SUCCESS),
        other => {
            eprintln!("run did not complete: {other:?}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let template = args.common.config(None, None)?;
    let rows = sweep(&template, &args.periods)?;
    println!("{:>10} {:>12} {:>10} {:>10}", "period", "NET (base)", "NET (dnet)", "ratio");
    for (base, with) in &rows {
        println!(
            "{:>10} {:>12} {:>10} {:>9.1}x",
            human(base.period_ns),
            base.net_count,
            with.net_count,
            with.reduction_ratio
        );
    }
    if let Some(path) = &args.summary {
        let flat: Vec<SummaryRow> = rows.into_iter().flat_map(|(a, b)| [a, b]).collect();
        write_csv(path, &flat)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn load_trace(path: &Path) -> Result<(Trace, Verdict)> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (trace, bad) = Trace::read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    Ok((trace, malformed_lines(&bad)))
}

fn load_topology(path: &Path) -> Result<Topology> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn print_verdict(v: &Verdict) -> ExitCode {
    print!("{}", v.report());
    if v.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn cmd_compare(a: &Path, b: &Path) -> Result<ExitCode> {
    let (ta, bad_a) = load_trace(a)?;
    let (tb, bad_b) = load_trace(b)?;
    if !bad_a.ok() || !bad_b.ok() {
        print!("{}{}", bad_a.report(), bad_b.report());
        bail!("malformed trace lines");
    }
    let v = check_equivalence(&ta, &tb);
    if v.ok() {
        println!("equivalent");
    }
    Ok(print_verdict(&v))
}

fn cmd_check(trace: &Path, topology: Option<&Path>) -> Result<ExitCode> {
    let (t, mut v) = load_trace(trace)?;
    v.violations.extend(check_safety(&t).violations);
    if let Some(path) = topology {
        let matrix = load_topology(path)?.analyze()?;
        v.violations.extend(check_dnet_consistency(&t, &matrix).violations);
    }
    if v.ok() {
        println!("ok: {} records", t.len());
    }
    Ok(print_verdict(&v))
}

fn cmd_analyze(path: &Path) -> Result<ExitCode> {
    let matrix = load_topology(path)?.analyze()?;
    let mut out = io::stdout().lock();
    writeln!(out, "transitive delay from row to column:")?;
    for j in matrix.federates() {
        let cells: Vec<String> = matrix
            .federates()
            .map(|i| {
                let d = matrix.transitive(i, j);
                if d.time().is_forever() { "-".to_string() } else { d.to_string() }
            })
            .collect();
        writeln!(out, "  {j}: {}", cells.join(" "))?;
    }
    for j in matrix.federates() {
        let down: Vec<String> = matrix.downstream_closure(j).iter().map(FederateId::to_string).collect();
        writeln!(out, "downstream of {j}: [{}]", down.join(", "))?;
    }
    let cycle: Vec<String> = matrix.zero_delay_cycle_members().iter().map(FederateId::to_string).collect();
    writeln!(out, "zero-delay cycle members: [{}]", cycle.join(", "))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Compare { a, b } => cmd_compare(&a, &b),
        Command::Check { trace, topology } => cmd_check(&trace, topology.as_deref()),
        Command::Topology { scenario, seed } => (|| {
            let cfg = ScenarioConfig {
                scenario,
                period_ns: 1,
                detection_period_ns: 1,
                duration_ns: 0,
                dnet: false,
                latency: LatencyModel::Zero,
                seed,
            };
            println!("{}", serde_json::to_string_pretty(&cfg.build()?.topology)?);
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Analyze { topology } => cmd_analyze(&topology),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
