//! The four commands. Each one renders its outputs in memory and then
//! writes them, in a fixed order, into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use probft::adversary::{random_faulty_set, AdversarySpec};
use probft::analysis::{self, bounds_at, message_count_table, write_csv, BoundResult, GridPoint};
use probft::montecarlo::{run_experiment, trial_rng, ExperimentKind, ExperimentSpec, Mode};
use probft::simnet::{run_simulation, Outcome, RunMetrics, RunReport, SimOptions};
use probft::{ProtocolConfig, ReplicaId};
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{GridSection, Scenario, ScenarioError};

pub const BOUNDS_FILE: &str = "bounds_v1.csv";
pub const ESTIMATES_FILE: &str = "estimates_v1.csv";
pub const MSGCOUNT_FILE: &str = "msgcount_v1.csv";
pub const METRICS_FILE: &str = "metrics_v1.json";
pub const TRACE_FILE: &str = "trace_v1.jsonl";
pub const ECHO_FILE: &str = "scenario_echo.toml";

/// RNG stream used to draw a random faulty set.
const FAULTY_SET_STREAM: u64 = 0xFA17;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } => 1,
        }
    }
}

/// Rendered files, in write order.
#[derive(Debug, Default)]
pub struct Output {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub non_quiescent: bool,
}

impl Output {
    fn push(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn exit_code(&self) -> i32 {
        if self.non_quiescent {
            3
        } else {
            0
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    Ok(Scenario::parse(&text)?)
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("in-memory csv");
    buf
}

fn echo(out: &mut Output, sc: &Scenario) {
    out.push(ECHO_FILE, sc.echo().into_bytes());
}

/// Every closed-form bound at every point of the scenario grid, or of the
/// standard grid without a scenario.
pub fn analyze(sc: Option<&Scenario>) -> Result<Output, CliError> {
    let grid = sc.and_then(|s| s.grid.as_ref()).map(|g| g.get_ref().clone()).unwrap_or_default();
    let points = grid.points().map_err(CliError::Usage)?;
    let rows: Vec<_> = points.iter().flat_map(bounds_at).collect();
    let mut out = Output::default();
    if let Some(sc) = sc {
        echo(&mut out, sc);
    }
    out.push(BOUNDS_FILE, csv_bytes(&rows));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub experiment: &'static str,
    pub mode: &'static str,
    pub n: usize,
    pub f: usize,
    pub o: f64,
    pub l: f64,
    pub q: usize,
    pub s: usize,
    pub seed: u64,
    pub metric: String,
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
    pub rule_of_three: Option<f64>,
    pub bound: Option<&'static str>,
    pub bound_value: Option<f64>,
    pub bound_applicable: Option<bool>,
}

fn kind_name(kind: &ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::PrepareQuorum => "prepare_quorum",
        ExperimentKind::Termination => "termination",
        ExperimentKind::AgreementOptimalSplit => "agreement_optimal_split",
        ExperimentKind::AgreementGeneral { .. } => "agreement_general",
        ExperimentKind::MergeComparison { .. } => "merge_comparison",
        ExperimentKind::ViewChange { .. } => "view_change",
    }
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::OrderFree => "order_free",
        Mode::EventOrdered => "event_ordered",
    }
}

/// The closed-form bound an estimated metric is compared against.
fn paired_bound(metric: &str, cfg: &ProtocolConfig) -> Option<(&'static str, BoundResult)> {
    let (n, f, o, q) = (cfg.n, cfg.f, cfg.o, cfg.q);
    Some(match metric {
        "prepare_quorum_target" | "prepare_marginal" => {
            ("quorum_prob_lower", analysis::quorum_prob_lower_bound(n, f, o, q))
        }
        "termination_per_replica" | "termination_per_replica_pooled" => {
            ("per_replica_termination", analysis::per_replica_termination_bound(n, f, o, q))
        }
        "termination_all_replicas" => ("all_replicas_termination", analysis::all_replicas_termination_bound(n, f, o, q)),
        "agreement_violation" => ("agreement_violation_in_view", analysis::agreement_violation_in_view_bound(n, f, o, q)),
        "view_change_violation" => ("view_change_violation", analysis::view_change_violation_bound(n, f, o, q)),
        _ => return None,
    })
}

/// Runs the scenario experiment at the protocol point, or at every grid
/// point when the scenario has a grid.
pub fn simulate(sc: &Scenario) -> Result<Output, CliError> {
    let exp = sc.experiment.get_ref();
    if exp.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    let seed = sc.seed();
    let configs: Vec<ProtocolConfig> = match &sc.grid {
        Some(g) => grid_configs(g.get_ref(), seed)?,
        None => vec![sc.protocol_config().map_err(|e| CliError::Usage(e.to_string()))?],
    };
    let mut rows = Vec::new();
    for cfg in configs {
        let spec = ExperimentSpec { kind: exp.kind.clone(), cfg: cfg.clone(), trials: exp.trials, mode: exp.mode, base_seed: seed };
        for r in run_experiment(&spec) {
            let bound = paired_bound(&r.metric, &cfg);
            rows.push(EstimateRow {
                experiment: kind_name(&exp.kind),
                mode: mode_name(exp.mode),
                n: cfg.n,
                f: cfg.f,
                o: cfg.o,
                l: cfg.l,
                q: cfg.q,
                s: cfg.s,
                seed,
                rule_of_three: r.estimate.rule_of_three(),
                successes: r.estimate.successes,
                trials: r.estimate.trials,
                p_hat: r.estimate.p_hat,
                lo: r.estimate.lo,
                hi: r.estimate.hi,
                metric: r.metric,
                bound: bound.as_ref().map(|b| b.0),
                bound_value: bound.as_ref().map(|b| b.1.value),
                bound_applicable: bound.as_ref().map(|b| b.1.applicable),
            });
        }
    }
    let mut out = Output::default();
    echo(&mut out, sc);
    out.push(ESTIMATES_FILE, csv_bytes(&rows));
    Ok(out)
}

fn grid_configs(g: &GridSection, seed: u64) -> Result<Vec<ProtocolConfig>, CliError> {
    let points: Vec<GridPoint> = g.points().map_err(CliError::Usage)?;
    points
        .iter()
        .map(|p| ProtocolConfig::new(p.n, p.f, p.l, p.o, seed).map_err(|e| CliError::Usage(e.to_string())))
        .collect()
}

pub fn adversary_of(sc: &Scenario, cfg: &ProtocolConfig) -> AdversarySpec {
    let a = &sc.adversary;
    let faulty: Vec<ReplicaId> = if a.random_faulty {
        let mut rng = trial_rng(cfg.rng_seed, FAULTY_SET_STREAM);
        random_faulty_set(cfg.n, cfg.f, &mut rng).into_iter().collect()
    } else {
        a.faulty.iter().map(|id| ReplicaId(*id)).collect()
    };
    AdversarySpec::new(faulty, a.leader_strategy.clone(), a.replica_strategy)
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    outcome: &'a Outcome,
    total_messages: u64,
    metrics: &'a RunMetrics,
}

/// One full simulation. Exit code 3 when the run did not finish.
pub fn run(sc: &Scenario) -> Result<(Output, RunReport), CliError> {
    let cfg = sc.protocol_config().map_err(|e| CliError::Usage(e.to_string()))?;
    let net = sc.net_config();
    net.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let adv = adversary_of(sc, &cfg);
    if adv.faulty.len() > cfg.f {
        return Err(CliError::Usage(format!("{} faulty replicas exceed f={}", adv.faulty.len(), cfg.f)));
    }
    let opts = SimOptions { max_views: sc.run.max_views, trace: sc.run.trace, stop_when_decided: sc.run.stop_when_decided };
    let report = run_simulation(&cfg, &net, &adv, &opts);
    let mut out = Output::default();
    echo(&mut out, sc);
    let metrics = MetricsFile { outcome: &report.outcome, total_messages: report.metrics.total_messages(), metrics: &report.metrics };
    let mut json = serde_json::to_vec_pretty(&metrics).expect("metrics serialize");
    json.push(b'\n');
    out.push(METRICS_FILE, json);
    if report.trace.is_some() {
        out.push(TRACE_FILE, report.trace_jsonl().into_bytes());
    }
    out.non_quiescent = matches!(report.outcome, Outcome::NonQuiescent { .. });
    Ok((out, report))
}

/// Message counts per protocol over the scenario's `[msgcount]` range.
pub fn msgcount(sc: Option<&Scenario>) -> Result<Output, CliError> {
    let section = sc.map(|s| s.msgcount.clone()).unwrap_or_default();
    if section.ns.is_empty() || section.os.is_empty() {
        return Err(CliError::Usage("msgcount needs at least one n and one o".into()));
    }
    if let Some(bad) = section.ns.iter().find(|n| **n < 4) {
        return Err(CliError::Usage(format!("n={bad} is below the minimum of 4")));
    }
    let rows = message_count_table(section.ns.iter().copied(), section.l, &section.os);
    let mut out = Output::default();
    if let Some(sc) = sc {
        echo(&mut out, sc);
    }
    out.push(MSGCOUNT_FILE, csv_bytes(&rows));
    Ok(out)
}
