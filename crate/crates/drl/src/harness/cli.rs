//! Command-line surface: `run`, `replay`, and `sweep`.

use super::{replay_trace, run_scenario, sweep, Check, DetectMode, HarnessError, RunSpec};
use crate::engine::SchedulerPolicy;
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeSet;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "drl", about = "Actor termination detection: scenario runner and verifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one seeded scenario with scheduled detection and checks.
    Run(RunArgs),
    /// Re-apply a recorded trace and verify every embedded checkpoint.
    Replay(ReplayArgs),
    /// Run a scenario across a whole seed range.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Number of scheduler steps before the wind-down.
    #[arg(long, default_value_t = 200)]
    pub steps: u64,
    /// Scheduler policy file (flat key = value).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of snapshot aggregators.
    #[arg(long, default_value_t = 1)]
    pub aggregators: u32,
    /// Detection algorithm: chain, heuristic, or both.
    #[arg(long, default_value = "chain")]
    pub detect: String,
    /// Comma-separated checks: chain-lemma, lemma-counts, safety, liveness,
    /// maximality, summary-equivalence. Use "all" for every check.
    #[arg(long = "check", value_delimiter = ',')]
    pub check: Vec<String>,
    /// Steps between detection rounds.
    #[arg(long = "detect-every", default_value_t = 25)]
    pub detect_every: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Write the trace here (always written on check failure).
    #[arg(long = "trace-out")]
    pub trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Inclusive seed range, e.g. 0..99.
    #[arg(long)]
    pub seeds: String,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

fn parse_checks(names: &[String]) -> Result<BTreeSet<Check>, HarnessError> {
    let mut out = BTreeSet::new();
    for name in names {
        let name = name.trim();
        if name.is_empty() {
            continue;
        }
        if name == "all" {
            out.extend(Check::all());
            continue;
        }
        match Check::parse(name) {
            Some(c) => {
                out.insert(c);
            }
            None => return Err(HarnessError::Config(format!("unknown check {name:?}"))),
        }
    }
    Ok(out)
}

fn build_spec(seed: u64, args: &ScenarioArgs, trace_out: Option<PathBuf>) -> Result<RunSpec, HarnessError> {
    let policy = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            SchedulerPolicy::parse(&text).map_err(HarnessError::Config)?
        }
        None => SchedulerPolicy::default(),
    };
    let detect = DetectMode::parse(&args.detect)
        .ok_or_else(|| HarnessError::Config(format!("unknown detect mode {:?}", args.detect)))?;
    Ok(RunSpec {
        seed,
        steps: args.steps,
        policy,
        aggregators: args.aggregators,
        detect,
        checks: parse_checks(&args.check)?,
        detect_every: args.detect_every,
        trace_out,
    })
}

/// Parse an inclusive `A..B` seed range.
fn parse_seed_range(s: &str) -> Result<std::ops::RangeInclusive<u64>, HarnessError> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| HarnessError::Config(format!("bad seed range {s:?}, expected A..B")))?;
    let a: u64 = a.trim().parse().map_err(|_| HarnessError::Config("bad range start".into()))?;
    let b: u64 = b.trim().parse().map_err(|_| HarnessError::Config("bad range end".into()))?;
    if b < a {
        return Err(HarnessError::Config("empty seed range".into()));
    }
    Ok(a..=b)
}

/// Execute a parsed command line; returns the process exit code (zero iff
/// every enabled check passed on every seed).
pub fn execute(cli: Cli) -> i32 {
    match run_command(cli) {
        Ok(passed) => {
            if passed {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run_command(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let spec = build_spec(args.seed, &args.scenario, args.trace_out.clone())?;
            let report = run_scenario(&spec)?;
            print!("{report}");
            Ok(report.all_passed())
        }
        Command::Replay(args) => {
            let report = replay_trace(&args.trace)?;
            print!("{report}");
            println!("replay ok: terminal configuration and checkpoints reproduced");
            Ok(report.all_passed())
        }
        Command::Sweep(args) => {
            let seeds = parse_seed_range(&args.seeds)?;
            let template = build_spec(0, &args.scenario, None)?;
            let report = sweep(seeds, &template)?;
            print!("{report}");
            Ok(report.all_passed())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_bit_exactly() {
        let cli = Cli::try_parse_from([
            "drl",
            "run",
            "--seed",
            "7",
            "--steps",
            "100",
            "--aggregators",
            "2",
            "--detect",
            "both",
            "--check",
            "safety,liveness",
            "--detect-every",
            "10",
            "--trace-out",
            "/tmp/t.trace",
        ])
        .unwrap();
        let Command::Run(args) = cli.command else { panic!("expected run") };
        assert_eq!(args.seed, 7);
        let spec = build_spec(args.seed, &args.scenario, args.trace_out.clone()).unwrap();
        assert_eq!(spec.steps, 100);
        assert_eq!(spec.aggregators, 2);
        assert_eq!(spec.detect, DetectMode::Both);
        assert_eq!(spec.checks, [Check::Safety, Check::Liveness].into());
        assert_eq!(spec.detect_every, 10);

        let cli = Cli::try_parse_from(["drl", "replay", "--trace", "x.trace"]).unwrap();
        assert!(matches!(cli.command, Command::Replay(_)));

        let cli =
            Cli::try_parse_from(["drl", "sweep", "--seeds", "0..9", "--steps", "50"]).unwrap();
        let Command::Sweep(args) = cli.command else { panic!("expected sweep") };
        let range = parse_seed_range(&args.seeds).unwrap();
        assert_eq!(range.clone().count(), 10);
    }

    #[test]
    fn unknown_check_is_a_config_error() {
        assert!(parse_checks(&["bogus".to_string()]).is_err());
        let all = parse_checks(&["all".to_string()]).unwrap();
        assert_eq!(all, Check::all());
    }
}
