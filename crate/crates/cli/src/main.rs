use clap::{Args, Parser, Subcommand};
use primnav::scenario::{
    build_map, emit_outputs, emit_seed_outputs, run_scenario_with, run_seed, Mode, Prepared, Report, Scenario,
    ScenarioError,
};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Map, plan and track scenario runs for the primitive-based RRT planner.
#[derive(Parser)]
#[command(name = "primnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the scenario's mapping legs and write the occupancy grid.
    Map(Common),
    /// Plan one seed and write the tree, plan and report.
    Plan(SeedArgs),
    /// Plan and track one seed and write every artifact.
    Track(SeedArgs),
    /// Run a seed range through the full pipeline.
    Run(RunArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Treat unknown map cells as occupied.
    #[arg(long)]
    strict_unknown: bool,
}

#[derive(Args)]
struct SeedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Half-open range `n..m`; defaults to the scenario's own range.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Range<u64>>,
    #[arg(long, default_value = "plan_and_track")]
    mode: Mode,
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected n..m, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s}"));
    }
    Ok(a..b)
}

enum Failure {
    Usage(String),
    Scenario(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e.to_string())
    }
}

fn load(c: &Common) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(&c.scenario).map_err(|e| Failure::Usage(e.to_string()))?;
    s.checker.strict_unknown |= c.strict_unknown;
    Ok(s)
}

fn prepare(c: &Common) -> Result<Prepared, Failure> {
    let p = Prepared::new(load(c)?)?;
    if let Some(m) = &p.map {
        eprintln!("map: {} matches, {} failures{}", m.matches, m.failures, if m.unreliable { " (unreliable)" } else { "" });
    }
    Ok(p)
}

fn summarize(r: &Report, out: &Path) {
    let s = &r.summary;
    eprintln!("{}: {}/{} plans found, worst plan time {:.3} s", r.scenario, s.successes, s.runs, s.max_plan_time_s);
    if s.tracked_runs > 0 {
        eprintln!(
            "tracked {}: {} within {} of goal, mean drift {:.4}",
            s.tracked_runs,
            s.tracked_on_target,
            r.drift_tolerance,
            s.mean_drift.unwrap_or(0.0)
        );
    }
    eprintln!("wrote {}", out.display());
}

fn map(c: &Common) -> Result<bool, Failure> {
    let s = load(c)?;
    let Some(mapping) = &s.mapping else {
        return Err(Failure::Usage(format!("{} has no [mapping] section", c.scenario.display())));
    };
    let world = primnav::world::ObstacleWorld::load(s.world_path()).map_err(ScenarioError::from)?;
    let m = build_map(&world, mapping, s.start.pose(), &s.plant, &s.slam, &s.tracking)?;
    std::fs::create_dir_all(&c.out).map_err(ScenarioError::from)?;
    m.save(&c.out, "map")?;
    let (occ, free, unknown) = m.grid.census();
    eprintln!("map: {occ} occupied, {free} free, {unknown} unknown cells; {} of {} matches failed", m.failures, m.matches);
    eprintln!("wrote {}", c.out.display());
    Ok(!m.unreliable)
}

fn single(a: &SeedArgs, mode: Mode) -> Result<bool, Failure> {
    let p = prepare(&a.common)?;
    let run = run_seed(&p, a.seed, mode)?;
    let report = Report::new(&p, mode, vec![run.outcome.clone()]);
    emit_outputs(&a.common.out, &report, Some(&run))?;
    summarize(&report, &a.common.out);
    Ok(report.summary.successes == 1 && report.summary.tracked_on_target == report.summary.tracked_runs)
}

fn run(a: &RunArgs) -> Result<bool, Failure> {
    let p = prepare(&a.common)?;
    let seeds = a.seeds.clone().unwrap_or_else(|| p.scenario.seed_range());
    let out = &a.common.out;
    let report = run_scenario_with(&p, a.mode, seeds, |r| emit_seed_outputs(out, r).map(|_| ()))?;
    emit_outputs(out, &report, None)?;
    summarize(&report, out);
    let s = &report.summary;
    Ok(s.successes == s.runs && s.tracked_on_target == s.tracked_runs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Map(c) => map(c),
        Command::Plan(a) => single(a, Mode::PlanOnly),
        Command::Track(a) => single(a, Mode::PlanAndTrack),
        Command::Run(a) => run(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Scenario(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_parse() {
        assert_eq!(parse_seeds("0..100"), Ok(0..100));
        assert_eq!(parse_seeds("5..5"), Ok(5..5));
        assert!(parse_seeds("7..3").is_err());
        assert!(parse_seeds("12").is_err());
        assert!(parse_seeds("a..3").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
