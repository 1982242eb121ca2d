//! Scenario files.
//!
//! A scenario is a TOML document with a `version` key and optional
//! sections. Unknown keys are rejected everywhere. After parsing, every
//! default is filled in, and [`Scenario::echo`] prints the complete file
//! that was actually used.

use std::ops::Range;

use probft::adversary::{LeaderStrategy, ReplicaStrategy};
use probft::analysis::{GridPoint, STANDARD_FAULT_RATIOS, STANDARD_L, STANDARD_NS, STANDARD_OS};
use probft::montecarlo::{ExperimentKind, Mode};
use probft::simnet::{NetConfig, SchedulerPolicy};
use probft::{quorum_sizes, ProtocolConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("line {line}, column {column}: {message}")]
    Invalid { line: usize, column: usize, message: String },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: Spanned<u32>,
    pub protocol: Spanned<ProtocolSection>,
    #[serde(default = "unspanned")]
    pub net: Spanned<NetSection>,
    #[serde(default)]
    pub adversary: AdversarySection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default = "unspanned")]
    pub experiment: Spanned<ExperimentSection>,
    pub grid: Option<Spanned<GridSection>>,
    #[serde(default)]
    pub msgcount: MsgcountSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn unspanned<T: Default>() -> Spanned<T> {
    Spanned::new(0..0, T::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub n: usize,
    pub f: usize,
    #[serde(default = "default_l")]
    pub l: f64,
    #[serde(default = "default_o")]
    pub o: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_l() -> f64 {
    STANDARD_L
}

fn default_o() -> f64 {
    1.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub gst: u64,
    pub delta: u64,
    pub pre_gst_max_delay: u64,
    pub view_duration: u64,
    pub policy: SchedulerPolicy,
    pub fixed_delay: u64,
}

impl Default for NetSection {
    fn default() -> Self {
        let d = NetConfig::default();
        NetSection {
            gst: d.gst,
            delta: d.delta,
            pre_gst_max_delay: d.pre_gst_max_delay,
            view_duration: d.view_duration,
            policy: d.policy,
            fixed_delay: d.fixed_delay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdversarySection {
    /// Explicit faulty ids. Ignored when `random_faulty` is set.
    pub faulty: Vec<u32>,
    /// Draw `f` faulty replicas from the scenario seed.
    pub random_faulty: bool,
    pub leader_strategy: LeaderStrategy,
    pub replica_strategy: ReplicaStrategy,
}

impl Default for AdversarySection {
    fn default() -> Self {
        AdversarySection {
            faulty: Vec::new(),
            random_faulty: false,
            leader_strategy: LeaderStrategy::Silent,
            replica_strategy: ReplicaStrategy::Silent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub max_views: u64,
    pub trace: bool,
    pub stop_when_decided: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { max_views: 20, trace: true, stop_when_decided: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    pub trials: u64,
    pub mode: Mode,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection { kind: ExperimentKind::Termination, trials: 10_000, mode: Mode::OrderFree }
    }
}

/// Cartesian grid; `f = floor(ratio * n)` for each fault ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub ns: Vec<usize>,
    pub fault_ratios: Vec<f64>,
    pub os: Vec<f64>,
    pub ls: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            ns: STANDARD_NS.to_vec(),
            fault_ratios: STANDARD_FAULT_RATIOS.to_vec(),
            os: STANDARD_OS.to_vec(),
            ls: vec![STANDARD_L],
        }
    }
}

impl GridSection {
    pub fn points(&self) -> Result<Vec<GridPoint>, String> {
        let mut out = Vec::new();
        for &n in &self.ns {
            for &ratio in &self.fault_ratios {
                let f = (ratio * n as f64).floor() as usize;
                for &o in &self.os {
                    for &l in &self.ls {
                        quorum_sizes(n, f, l, o).map_err(|e| format!("grid point n={n} f={f} o={o} l={l}: {e}"))?;
                        out.push(GridPoint::new(n, f, o, l));
                    }
                }
            }
        }
        if out.is_empty() {
            return Err("grid is empty".into());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsgcountSection {
    pub ns: Vec<usize>,
    pub l: f64,
    pub os: Vec<f64>,
}

impl Default for MsgcountSection {
    fn default() -> Self {
        MsgcountSection { ns: vec![4, 50, 100, 200, 300, 400], l: STANDARD_L, os: STANDARD_OS.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            version: Spanned::new(0..0, SCHEMA_VERSION),
            protocol: Spanned::new(0..0, ProtocolSection { n: 100, f: 20, l: default_l(), o: default_o(), seed: 0 }),
            net: Spanned::new(0..0, NetSection::default()),
            adversary: AdversarySection::default(),
            run: RunSection::default(),
            experiment: Spanned::new(0..0, ExperimentSection::default()),
            grid: None,
            msgcount: MsgcountSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// 1-based line and column of byte offset `at` in `text`.
fn line_col(text: &str, at: usize) -> (usize, usize) {
    let before = &text[..at.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn invalid(text: &str, span: Range<usize>, message: impl Into<String>) -> ScenarioError {
    let (line, column) = line_col(text, span.start);
    ScenarioError::Invalid { line, column, message: message.into() }
}

impl Scenario {
    /// Parses and validates a scenario.
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if *sc.version.get_ref() != SCHEMA_VERSION {
            return Err(invalid(
                text,
                sc.version.span(),
                format!("unsupported version {}, expected {SCHEMA_VERSION}", sc.version.get_ref()),
            ));
        }
        if let Err(e) = sc.protocol_config() {
            return Err(invalid(text, sc.protocol.span(), e.to_string()));
        }
        if let Err(e) = sc.net_config().validate() {
            return Err(invalid(text, sc.net.span(), e.to_string()));
        }
        if sc.experiment.get_ref().trials == 0 {
            return Err(invalid(text, sc.experiment.span(), "trials must be at least 1"));
        }
        if let Some(grid) = &sc.grid {
            if let Err(e) = grid.get_ref().points() {
                return Err(invalid(text, grid.span(), e));
            }
        }
        let n = sc.protocol.get_ref().n;
        if let Some(bad) = sc.adversary.faulty.iter().find(|id| **id == 0 || **id as usize > n) {
            return Err(ScenarioError::Other(format!("faulty id {bad} outside 1..={n}")));
        }
        Ok(sc)
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig, probft::ConfigError> {
        let p = self.protocol.get_ref();
        ProtocolConfig::new(p.n, p.f, p.l, p.o, p.seed)
    }

    pub fn net_config(&self) -> NetConfig {
        let s = self.net.get_ref();
        NetConfig {
            gst: s.gst,
            delta: s.delta,
            pre_gst_max_delay: s.pre_gst_max_delay,
            view_duration: s.view_duration,
            policy: s.policy,
            fixed_delay: s.fixed_delay,
        }
    }

    pub fn seed(&self) -> u64 {
        self.protocol.get_ref().seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.protocol.get_mut().seed = seed;
    }

    pub fn set_trials(&mut self, trials: u64) {
        self.experiment.get_mut().trials = trials;
    }

    /// The scenario with every default written out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\n[protocol]\nn = 100\nf = 20\n";

    #[test]
    fn minimal_scenario_gets_defaults() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        let cfg = sc.protocol_config().unwrap();
        assert_eq!((cfg.q, cfg.s), (20, 34));
        assert_eq!(sc.net_config(), NetConfig::default());
        assert_eq!(sc.run.max_views, 20);
        assert!(sc.grid.is_none());
    }

    #[test]
    fn echo_is_explicit_and_reparses() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        let echo = sc.echo();
        for key in ["gst", "view_duration", "leader_strategy", "trials", "mode", "max_views", "dir", "seed"] {
            assert!(echo.contains(key), "{key} missing from\n{echo}");
        }
        let again = Scenario::parse(&echo).unwrap();
        assert_eq!(again.echo(), echo);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Scenario::parse("version = 1\nbogus = 3\n[protocol]\nn = 4\nf = 1\n").is_err());
        assert!(Scenario::parse("version = 1\n[protocol]\nn = 4\nf = 1\nq = 2\n").is_err());
        assert!(Scenario::parse("version = 1\n[protocol]\nn = 4\nf = 1\n[net]\ngst = 0\nlag = 3\n").is_err());
    }

    #[test]
    fn semantic_errors_carry_position() {
        let text = "version = 1\n[protocol]\nn = 100\nf = 20\n\n[grid]\nns = [30]\nfault_ratios = [0.4]\n";
        match Scenario::parse(text) {
            Err(ScenarioError::Invalid { line, column, message }) => {
                assert_eq!((line, column), (6, 1));
                assert!(message.contains("f < n/3"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = "version = 1\n[protocol]\nn = 9\nf = 3\n";
        assert!(matches!(Scenario::parse(text), Err(ScenarioError::Invalid { line: 2, .. })));
    }

    #[test]
    fn zero_trials_rejected() {
        let text = format!("{MINIMAL}[experiment]\ntrials = 0\n");
        assert!(Scenario::parse(&text).is_err());
    }

    #[test]
    fn wrong_version_rejected() {
        assert!(Scenario::parse("version = 2\n[protocol]\nn = 4\nf = 1\n").is_err());
    }

    #[test]
    fn experiment_kinds_parse() {
        let text = format!("{MINIMAL}[experiment]\nkind = {{ merge_comparison = {{ m = 2 }} }}\n");
        let sc = Scenario::parse(&text).unwrap();
        assert_eq!(sc.experiment.get_ref().kind, ExperimentKind::MergeComparison { m: 2 });
        let text = format!("{MINIMAL}[adversary]\nleader_strategy = {{ equiv_general = [[1, 2], [3]] }}\n");
        assert!(Scenario::parse(&text).is_ok());
    }
}
