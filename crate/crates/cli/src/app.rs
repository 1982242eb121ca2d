//! Argument parsing and dispatch for the `probft` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, CliError, Output};
use crate::scenario::Scenario;

#[derive(Parser)]
#[command(name = "probft", version, about = "Probabilistic BFT consensus: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every closed-form bound over a parameter grid.
    Analyze(Common),
    /// Monte-Carlo estimates for the scenario experiment.
    Simulate(Common),
    /// One full protocol run with trace and metrics.
    Run(Common),
    /// Message counts of PBFT, HotStuff and ProBFT.
    Msgcount(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the experiment trial count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads for Monte-Carlo trials.
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Common {
    fn load(&self, required: bool) -> Result<Option<Scenario>, CliError> {
        let Some(path) = &self.scenario else {
            if required {
                return Err(CliError::Usage("--scenario is required".into()));
            }
            return Ok(None);
        };
        let mut sc = commands::load_scenario(path)?;
        if let Some(seed) = self.seed {
            sc.set_seed(seed);
        }
        if let Some(trials) = self.trials {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            sc.set_trials(trials);
        }
        Ok(Some(sc))
    }

    fn out_dir(&self, sc: Option<&Scenario>) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(sc.map_or("out", |s| s.output.dir.as_str())))
    }
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let (common, required) = match &cli.command {
        Command::Analyze(c) | Command::Msgcount(c) => (c, false),
        Command::Simulate(c) | Command::Run(c) => (c, true),
    };
    if let Some(threads) = common.parallelism {
        if threads == 0 {
            return Err(CliError::Usage("--parallelism must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let sc = common.load(required)?;
    let out: Output = match &cli.command {
        Command::Analyze(_) => commands::analyze(sc.as_ref())?,
        Command::Msgcount(_) => commands::msgcount(sc.as_ref())?,
        Command::Simulate(_) => commands::simulate(sc.as_ref().expect("required"))?,
        Command::Run(_) => commands::run(sc.as_ref().expect("required"))?.0,
    };
    for path in out.write_to(&common.out_dir(sc.as_ref()))? {
        println!("{}", path.display());
    }
    if out.non_quiescent {
        eprintln!("run ended before every correct replica decided");
    }
    Ok(out.exit_code())
}

/// Runs the command line `args` (program name first) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::commands::{BOUNDS_FILE, ECHO_FILE, ESTIMATES_FILE, METRICS_FILE, MSGCOUNT_FILE, TRACE_FILE};

    fn golden_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
    }

    fn invoke(args: &[&str]) -> i32 {
        run(std::iter::once("probft").chain(args.iter().copied()))
    }

    fn write_scenario(dir: &Path, text: &str) -> String {
        let path = dir.join("scenario.toml");
        std::fs::write(&path, text).unwrap();
        path.to_str().unwrap().to_string()
    }

    /// Compares `file` in `out` with the checked-in copy; `PROBFT_BLESS=1`
    /// rewrites the copy.
    fn assert_golden(out: &Path, file: &str, golden: &str) {
        let actual = std::fs::read_to_string(out.join(file)).unwrap();
        let path = golden_dir().join(golden);
        if std::env::var_os("PROBFT_BLESS").is_some() {
            std::fs::write(&path, &actual).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(actual == expected, "{file} differs from {}", path.display());
    }

    #[test]
    fn golden_outputs_for_point_scenario() {
        let tmp = tempfile::tempdir().unwrap();
        let scenario = golden_dir().join("point.toml");
        let scenario = scenario.to_str().unwrap();
        for (cmd, file, golden) in [
            ("analyze", BOUNDS_FILE, "point_bounds_v1.csv"),
            ("simulate", ESTIMATES_FILE, "point_estimates_v1.csv"),
            ("msgcount", MSGCOUNT_FILE, "point_msgcount_v1.csv"),
        ] {
            let out = tmp.path().join(cmd);
            assert_eq!(invoke(&[cmd, "--scenario", scenario, "--out", out.to_str().unwrap()]), 0);
            assert_golden(&out, file, golden);
            assert_golden(&out, ECHO_FILE, "point_echo.toml");
        }
    }

    #[test]
    fn run_writes_trace_and_metrics() {
        let tmp = tempfile::tempdir().unwrap();
        let sc = write_scenario(
            tmp.path(),
            "version = 1\n[protocol]\nn = 4\nf = 1\nl = 1.0\no = 2.0\nseed = 1\n\
             [net]\ngst = 0\ndelta = 10\npre_gst_max_delay = 100\nview_duration = 100\npolicy = \"fixed\"\nfixed_delay = 1\n\
             [adversary]\nfaulty = [1]\nleader_strategy = \"equiv_optimal\"\n",
        );
        let out = tmp.path().join("out");
        assert_eq!(invoke(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]), 0);
        let trace = std::fs::read_to_string(out.join(TRACE_FILE)).unwrap();
        assert_eq!(trace.matches("block v=1").count(), 3);
        assert!(trace.contains("send Propose(v=1,x=val-1,from=1,M=0) -> [2]"));
        assert!(trace.contains("send Propose(v=1,x=val-2,from=1,M=0) -> [3,4]"));
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();
        assert_eq!(metrics["outcome"]["all_decided"]["view"], 2);
    }

    #[test]
    fn honest_run_prepare_count() {
        let tmp = tempfile::tempdir().unwrap();
        let sc = write_scenario(tmp.path(), "version = 1\n[protocol]\nn = 100\nf = 20\n[run]\ntrace = false\n");
        let out = tmp.path().join("out");
        assert_eq!(invoke(&["run", "--scenario", &sc, "--out", out.to_str().unwrap()]), 0);
        let metrics: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join(METRICS_FILE)).unwrap()).unwrap();
        // every replica sends one Prepare to each of its s = 34 sampled replicas
        assert_eq!(metrics["metrics"]["per_view"]["1"]["messages"][2], 3400);
        assert!(!out.join(TRACE_FILE).exists());
    }

    #[test]
    fn exit_codes() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("out");
        let out = out.to_str().unwrap();
        assert_eq!(invoke(&["simulate", "--out", out]), 2, "missing scenario");
        let bad = write_scenario(tmp.path(), "version = 1\n[protocol]\nn = 9\nf = 3\n");
        assert_eq!(invoke(&["run", "--scenario", &bad, "--out", out]), 2, "f >= n/3");
        let sc = write_scenario(tmp.path(), "version = 1\n[protocol]\nn = 10\nf = 2\n");
        assert_eq!(invoke(&["simulate", "--scenario", &sc, "--trials", "0", "--out", out]), 2);
        assert_eq!(invoke(&["frobnicate"]), 2);
        let stuck = write_scenario(
            tmp.path(),
            "version = 1\n[protocol]\nn = 7\nf = 2\nl = 1.0\n[adversary]\nfaulty = [1, 2]\n[run]\nmax_views = 2\n",
        );
        assert_eq!(invoke(&["run", "--scenario", &stuck, "--out", out]), 3);
        assert_eq!(invoke(&["msgcount", "--out", out]), 0);
    }

    #[test]
    fn seed_and_trials_flags_override_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        let sc = write_scenario(tmp.path(), "version = 1\n[protocol]\nn = 25\nf = 5\n[experiment]\ntrials = 50\n");
        let a = tmp.path().join("a");
        assert_eq!(invoke(&["simulate", "--scenario", &sc, "--seed", "5", "--trials", "70", "--out", a.to_str().unwrap()]), 0);
        let echo = std::fs::read_to_string(a.join(ECHO_FILE)).unwrap();
        assert!(echo.contains("seed = 5") && echo.contains("trials = 70"), "{echo}");
        let csv = std::fs::read_to_string(a.join(ESTIMATES_FILE)).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",70,"));
    }

    #[test]
    fn grid_errors_report_position() {
        let tmp = tempfile::tempdir().unwrap();
        let sc = write_scenario(tmp.path(), "version = 1\n[protocol]\nn = 30\nf = 2\n\n[grid]\nns = [30]\nfault_ratios = [0.34]\n");
        let out = tmp.path().join("out");
        assert_eq!(invoke(&["analyze", "--scenario", &sc, "--out", out.to_str().unwrap()]), 2);
        match commands::load_scenario(Path::new(&sc)) {
            Err(e) => assert!(e.to_string().starts_with("line 6, column 1:"), "{e}"),
            Ok(_) => panic!("accepted"),
        }
    }
}
