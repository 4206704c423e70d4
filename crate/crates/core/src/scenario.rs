//! Scenario files and the map → plan → track pipeline that runs them.

use crate::collision::{CollisionChecker, VehicleFootprint};
use crate::geom::Pose2;
use crate::grid::{GridError, OccupancyGrid, DEFAULT_RESOLUTION};
use crate::planner::{bounds, distance, plan, Configuration, Plan, PlanDocument, PlanError, PlannerParams, Tree};
use crate::primitives::{generate_standard_set, PrimitiveConfig, PrimitiveError, PrimitiveSet};
use crate::tracking::{
    drift, pid_step, track, write_trace_csv, PidState, PoseSource, SlamLocalizer, SlamParams, Trace, TrackError,
    TrackParams,
};
use crate::world::{step_plant, Control, Gear, ObstacleWorld, PlantParams, PlantState, SimError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerKind {
    Virtual,
    Mapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    #[default]
    GroundTruth,
    Slam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PlanOnly,
    PlanAndTrack,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plan_only" | "plan-only" => Ok(Mode::PlanOnly),
            "plan_and_track" | "plan-and-track" => Ok(Mode::PlanAndTrack),
            _ => Err(format!("unknown mode {s:?} (expected plan_only or plan_and_track)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::PlanOnly => "plan_only",
            Mode::PlanAndTrack => "plan_and_track",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerConfig {
    pub kind: CheckerKind,
    #[serde(default)]
    pub strict_unknown: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub footprint: VehicleFootprint,
}

fn default_epsilon() -> f64 {
    crate::collision::DEFAULT_EPSILON
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub bounds_min: [f64; 2],
    pub bounds_max: [f64; 2],
    #[serde(default = "default_goal_bias")]
    pub goal_bias: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_min_fraction")]
    pub min_fraction: f64,
}

fn default_goal_bias() -> f64 {
    0.2
}
fn default_threshold() -> f64 {
    0.2
}
fn default_max_iters() -> usize {
    5000
}
fn default_min_fraction() -> f64 {
    0.1
}

/// One leg of a scripted mapping drive: constant gear and steering over a
/// travelled distance, ending at rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingLeg {
    pub gear: Gear,
    #[serde(default)]
    pub steer: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// A map whose scan-match failure rate exceeds this is flagged unreliable.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
    pub legs: Vec<MappingLeg>,
}

fn default_delta() -> f64 {
    DEFAULT_RESOLUTION
}
fn default_speed() -> f64 {
    0.4
}
fn default_failure_rate() -> f64 {
    0.1
}

fn default_seeds() -> [u64; 2] {
    [0, 100]
}
fn default_drift_tolerance() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    /// World file, relative to the scenario file.
    pub world: PathBuf,
    #[serde(default)]
    pub start: Configuration,
    pub goal: Configuration,
    /// Half-open seed range `[first, last)`.
    #[serde(default = "default_seeds")]
    pub seeds: [u64; 2],
    pub checker: CheckerConfig,
    pub planner: PlannerConfig,
    #[serde(default)]
    pub plant: PlantParams,
    #[serde(default)]
    pub primitives: PrimitiveConfig,
    #[serde(default)]
    pub tracking: TrackParams,
    #[serde(default)]
    pub feedback: Feedback,
    #[serde(default)]
    pub slam: SlamParams,
    /// Tracked runs ending within this distance of the goal count as on target.
    #[serde(default = "default_drift_tolerance")]
    pub drift_tolerance: f64,
    #[serde(default)]
    pub mapping: Option<MappingConfig>,
    /// Free-text layout conventions, copied into reports.
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: PathBuf) -> Result<Self, ScenarioError> {
        let mut s: Scenario = toml::from_str(text)?;
        s.base_dir = base_dir;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields serialize")
    }

    pub fn world_path(&self) -> PathBuf {
        self.base_dir.join(&self.world)
    }

    pub fn seed_range(&self) -> Range<u64> {
        self.seeds[0]..self.seeds[1]
    }

    pub fn sampling_bounds(&self) -> crate::polygon::Aabb {
        let p = &self.planner;
        bounds((p.bounds_min[0], p.bounds_min[1]), (p.bounds_max[0], p.bounds_max[1]))
    }

    pub fn planner_params(&self, seed: u64) -> PlannerParams {
        PlannerParams {
            goal_bias: self.planner.goal_bias,
            threshold: self.planner.threshold,
            max_iters: self.planner.max_iters,
            bounds: self.sampling_bounds(),
            seed,
            min_fraction: self.planner.min_fraction,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.version != SCENARIO_FORMAT_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !self.sampling_bounds().contains(crate::geom::Point2::new(self.goal.x, self.goal.y)) {
            return bad("goal lies outside the sampling bounds".into());
        }
        if self.seeds[0] > self.seeds[1] {
            return bad(format!("empty seed range {:?}", self.seeds));
        }
        if self.checker.kind == CheckerKind::Mapped && self.mapping.is_none() {
            return bad("a mapped checker needs a [mapping] section".into());
        }
        if !(self.checker.epsilon > 0.0) {
            return bad(format!("epsilon {}", self.checker.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLogEntry {
    pub t: f64,
    pub truth: Pose2,
    pub estimate: Pose2,
}

/// Result of a mapping drive.
#[derive(Debug, Clone)]
pub struct MapBuild {
    pub grid: OccupancyGrid,
    pub log: Vec<PoseLogEntry>,
    pub matches: usize,
    pub failures: usize,
    pub unreliable: bool,
}

impl MapBuild {
    pub fn failure_rate(&self) -> f64 {
        if self.matches == 0 {
            1.0
        } else {
            self.failures as f64 / self.matches as f64
        }
    }

    /// Writes `<stem>.pgm`, `<stem>.toml` and `<stem>_poses.csv`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), ScenarioError> {
        self.grid.save(dir, stem)?;
        let mut w = csv::Writer::from_path(dir.join(format!("{stem}_poses.csv")))?;
        w.write_record(["t", "x_true", "y_true", "psi_true", "x_est", "y_est", "psi_est"])?;
        for e in &self.log {
            w.write_record(
                [e.t, e.truth.px, e.truth.py, e.truth.psi, e.estimate.px, e.estimate.py, e.estimate.psi].map(|v| v.to_string()),
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Drives the scripted legs from `start`, feeding every control step to the
/// localizer that builds the map.
pub fn build_map(
    world: &ObstacleWorld,
    mapping: &MappingConfig,
    start: Pose2,
    plant: &PlantParams,
    slam: &SlamParams,
    track: &TrackParams,
) -> Result<MapBuild, ScenarioError> {
    let mut loc = SlamLocalizer::with_fresh_map(world, start, mapping.delta, *slam)?;
    let mut state = PlantState::at_rest(start);
    let mut pid = PidState::new(track.gains, plant.dt, track.deadband)?;
    let mut log = vec![PoseLogEntry { t: 0.0, truth: start, estimate: start }];
    let mut step: u64 = 0;
    let mut advance = |state: &mut PlantState, u: Control, loc: &mut SlamLocalizer<'_>| -> Result<(), ScenarioError> {
        *state = step_plant(state, &u, plant.dt, plant)?;
        step += 1;
        let estimate = loc.observe(&state.pose)?;
        log.push(PoseLogEntry { t: step as f64 * plant.dt, truth: state.pose, estimate });
        Ok(())
    };
    for (k, leg) in mapping.legs.iter().enumerate() {
        if leg.gear == Gear::Neutral || !(leg.distance > 0.0) {
            return Err(ScenarioError::Invalid(format!("mapping leg {k} needs a drive gear and a positive distance")));
        }
        pid.reset();
        let mut travelled = 0.0;
        let limit = ((leg.distance / track.creep_speed + track.segment_slack) / plant.dt) as usize;
        for _ in 0..limit {
            let remaining = leg.distance - travelled;
            if remaining <= 0.0 {
                break;
            }
            let reference = mapping.speed.min((2.0 * track.approach_decel * remaining).sqrt()).max(track.creep_speed);
            let p = pid_step(&mut pid, reference - state.speed());
            let u = Control { accel: p.accel, brake: p.brake, steer: leg.steer, gear: leg.gear };
            let before = state.pose.position();
            advance(&mut state, u, &mut loc)?;
            travelled += before.distance(&state.pose.position());
        }
        while state.v != 0.0 {
            advance(&mut state, Control { accel: 0.0, brake: 1.0, steer: leg.steer, gear: leg.gear }, &mut loc)?;
        }
    }
    let (matches, failures) = (loc.matches, loc.failures);
    let grid = loc.grid;
    let mut out = MapBuild { grid, log, matches, failures, unreliable: false };
    out.unreliable = out.failure_rate() > mapping.max_failure_rate;
    Ok(out)
}

/// Everything a scenario needs before the per-seed loop.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub world: ObstacleWorld,
    pub primitives: PrimitiveSet,
    pub checker: CollisionChecker,
    pub map: Option<MapBuild>,
}

impl Prepared {
    pub fn new(scenario: Scenario) -> Result<Self, ScenarioError> {
        let world = ObstacleWorld::load(scenario.world_path())?;
        Self::with_world(scenario, world)
    }

    pub fn with_world(scenario: Scenario, world: ObstacleWorld) -> Result<Self, ScenarioError> {
        let primitives = generate_standard_set(&scenario.plant, &scenario.primitives)?;
        let cc = scenario.checker;
        let (checker, map) = match cc.kind {
            CheckerKind::Virtual => (CollisionChecker::virtual_world(world.clone(), cc.footprint), None),
            CheckerKind::Mapped => {
                let mapping = scenario.mapping.as_ref().expect("validated");
                let map = build_map(&world, mapping, scenario.start.pose(), &scenario.plant, &scenario.slam, &scenario.tracking)?;
                (CollisionChecker::mapped(map.grid.clone(), cc.footprint, cc.strict_unknown), Some(map))
            }
        };
        Ok(Self { checker: checker.with_epsilon(cc.epsilon), scenario, world, primitives, map })
    }

    /// Localizer for SLAM feedback: continues on the mapping result, or
    /// starts a fresh map at the start pose.
    fn localizer(&self, slam: SlamParams) -> Result<SlamLocalizer<'_>, ScenarioError> {
        let start = self.scenario.start.pose();
        match &self.map {
            Some(m) => Ok(SlamLocalizer::new(&self.world, m.grid.clone(), start, slam)),
            None => Ok(SlamLocalizer::with_fresh_map(&self.world, start, DEFAULT_RESOLUTION, slam)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedOutcome {
    pub final_config: Configuration,
    pub final_estimate: Configuration,
    pub drift: f64,
    pub completed: bool,
    pub steps: usize,
    pub match_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub iterations: usize,
    pub tree_size: usize,
    pub goal_targeted: usize,
    pub segments: usize,
    pub waypoints: usize,
    pub gear_changes: usize,
    pub plan_end: Option<Configuration>,
    pub plan_distance: Option<f64>,
    pub tracked: Option<TrackedOutcome>,
    /// Planner wall time; the only field that varies between identical runs.
    pub plan_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub max_plan_time_s: f64,
    pub mean_iterations: f64,
    /// Fraction of successful plans that change gear at least once.
    pub gear_change_fraction: f64,
    pub tracked_runs: usize,
    pub tracked_on_target: usize,
    pub mean_drift: Option<f64>,
    pub max_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub matches: usize,
    pub failures: usize,
    pub unreliable: bool,
    pub occupied: usize,
    pub free: usize,
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub scenario: String,
    pub mode: Mode,
    pub start: Configuration,
    pub goal: Configuration,
    pub threshold: f64,
    pub drift_tolerance: f64,
    pub map: Option<MapSummary>,
    pub seeds: Vec<SeedOutcome>,
    pub summary: Summary,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(p: &Prepared, mode: Mode, mut seeds: Vec<SeedOutcome>) -> Self {
        seeds.sort_by_key(|s| s.seed);
        let s = &p.scenario;
        let map = p.map.as_ref().map(|m| {
            let (occupied, free, unknown) = m.grid.census();
            MapSummary { matches: m.matches, failures: m.failures, unreliable: m.unreliable, occupied, free, unknown }
        });
        let summary = summarize(&seeds, s.drift_tolerance);
        Self {
            version: REPORT_FORMAT_VERSION,
            scenario: s.name.clone(),
            mode,
            start: s.start,
            goal: s.goal,
            threshold: s.planner.threshold,
            drift_tolerance: s.drift_tolerance,
            map,
            seeds,
            summary,
            notes: s.notes.clone(),
        }
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        for s in &mut r.seeds {
            s.plan_time_s = 0.0;
        }
        r.summary.max_plan_time_s = 0.0;
        r
    }

    pub fn to_json(&self) -> Result<String, ScenarioError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let r: Report = serde_json::from_str(text)?;
        if r.version != REPORT_FORMAT_VERSION {
            return Err(ScenarioError::Invalid(format!("unsupported report version {}", r.version)));
        }
        Ok(r)
    }
}

fn summarize(seeds: &[SeedOutcome], tolerance: f64) -> Summary {
    let runs = seeds.len();
    let ok: Vec<&SeedOutcome> = seeds.iter().filter(|s| s.success).collect();
    let drifts: Vec<f64> = seeds.iter().filter_map(|s| s.tracked.as_ref().map(|t| t.drift)).collect();
    let frac = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    Summary {
        runs,
        successes: ok.len(),
        success_rate: frac(ok.len(), runs),
        max_plan_time_s: seeds.iter().map(|s| s.plan_time_s).fold(0.0, f64::max),
        mean_iterations: if runs == 0 { 0.0 } else { seeds.iter().map(|s| s.iterations as f64).sum::<f64>() / runs as f64 },
        gear_change_fraction: frac(ok.iter().filter(|s| s.gear_changes > 0).count(), ok.len()),
        tracked_runs: drifts.len(),
        tracked_on_target: seeds
            .iter()
            .filter(|s| s.tracked.as_ref().is_some_and(|t| t.completed && t.drift <= tolerance))
            .count(),
        mean_drift: (!drifts.is_empty()).then(|| drifts.iter().sum::<f64>() / drifts.len() as f64),
        max_drift: drifts.iter().copied().reduce(f64::max),
    }
}

/// Per-seed artifacts.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub outcome: SeedOutcome,
    pub plan: Option<PlanDocument>,
    pub tree: Tree,
    pub trace: Option<Trace>,
}

pub fn gear_changes(plan: &Plan) -> usize {
    plan.segments.windows(2).filter(|w| w[0].primitive.gear() != w[1].primitive.gear()).count()
}

/// Plans (and optionally tracks) one seed. Planner failures are recorded in
/// the outcome rather than returned.
pub fn run_seed(p: &Prepared, seed: u64, mode: Mode) -> Result<SeedRun, ScenarioError> {
    let s = &p.scenario;
    let t0 = Instant::now();
    let result = plan(s.start, s.goal, &p.primitives, &p.checker, s.planner_params(seed));
    let plan_time_s = t0.elapsed().as_secs_f64();
    let mut outcome = SeedOutcome {
        seed,
        success: false,
        error: None,
        iterations: 0,
        tree_size: 0,
        goal_targeted: 0,
        segments: 0,
        waypoints: 0,
        gear_changes: 0,
        plan_end: None,
        plan_distance: None,
        tracked: None,
        plan_time_s,
    };
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return Ok(SeedRun { outcome, plan: None, tree: Tree::default(), trace: None });
        }
    };
    outcome.iterations = out.stats.iterations;
    outcome.tree_size = out.stats.tree_size;
    outcome.goal_targeted = out.stats.goal_targeted;
    let Some(found) = out.plan else {
        return Ok(SeedRun { outcome, plan: None, tree: out.tree, trace: None });
    };
    outcome.success = true;
    outcome.segments = found.segments.len();
    outcome.waypoints = found.waypoint_count();
    outcome.gear_changes = gear_changes(&found);
    outcome.plan_end = Some(found.end());
    outcome.plan_distance = Some(distance(&found.end(), &s.goal));
    let doc = PlanDocument::new(&found, s.goal, out.stats);

    let mut trace = None;
    if mode == Mode::PlanAndTrack {
        let mut source = match s.feedback {
            Feedback::GroundTruth => PoseSource::GroundTruth,
            Feedback::Slam => {
                let slam = crate::tracking::SlamParams { noise_seed: seed, ..s.slam };
                PoseSource::Slam(Box::new(p.localizer(slam)?))
            }
        };
        let tr = track(&found, &s.plant, &mut source, &s.tracking)?;
        let match_failures = match &source {
            PoseSource::Slam(l) => l.failures,
            PoseSource::GroundTruth => 0,
        };
        outcome.tracked = Some(TrackedOutcome {
            final_config: tr.final_config,
            final_estimate: tr.final_estimate,
            drift: drift(&tr.final_config, &s.goal),
            completed: tr.succeeded(),
            steps: tr.rows.len(),
            match_failures,
        });
        trace = Some(tr);
    }
    Ok(SeedRun { outcome, plan: Some(doc), tree: out.tree, trace })
}

/// Runs every seed in `seeds`, handing each seed's artifacts to `sink`
/// before they are dropped.
pub fn run_scenario_with<F>(p: &Prepared, mode: Mode, seeds: Range<u64>, mut sink: F) -> Result<Report, ScenarioError>
where
    F: FnMut(&SeedRun) -> Result<(), ScenarioError>,
{
    let mut rows = Vec::new();
    for seed in seeds {
        let run = run_seed(p, seed, mode)?;
        sink(&run)?;
        rows.push(run.outcome);
    }
    Ok(Report::new(p, mode, rows))
}

pub fn run_scenario(p: &Prepared, mode: Mode, seeds: Range<u64>) -> Result<Report, ScenarioError> {
    run_scenario_with(p, mode, seeds, |_| Ok(()))
}

/// Re-checks a stored plan: segments chain from the start, every edge is
/// collision free and the tail is within `threshold` of the goal.
pub fn revalidate(doc: &PlanDocument, checker: &CollisionChecker, threshold: f64) -> bool {
    let plan = doc.plan();
    let mut prev = plan.start.pose();
    for s in &plan.segments {
        if s.waypoints.first() != Some(&prev) || checker.edge_in_collision(&s.waypoints) {
            return false;
        }
        prev = *s.waypoints.last().expect("first() matched");
    }
    distance(&plan.end(), &doc.goal) <= threshold
}

/// Writes `report.json` and, for a seed run, the seed's artifacts.
pub fn emit_outputs(dir: &Path, report: &Report, run: Option<&SeedRun>) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir)?;
    let path = dir.join("report.json");
    fs::write(&path, report.to_json()?)?;
    let mut written = vec![path];
    if let Some(run) = run {
        written.extend(emit_seed_outputs(dir, run)?);
    }
    Ok(written)
}

/// Writes `tree_<seed>.csv` and, when present, `plan_<seed>.json`,
/// `plan_<seed>_waypoints.csv` and `trace_<seed>.csv`.
pub fn emit_seed_outputs(dir: &Path, run: &SeedRun) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let seed = run.outcome.seed;

    let path = dir.join(format!("tree_{seed}.csv"));
    run.tree.write_csv(fs::File::create(&path)?)?;
    written.push(path);

    if let Some(plan) = &run.plan {
        let path = dir.join(format!("plan_{seed}.json"));
        plan.save(&path)?;
        written.push(path);

        let path = dir.join(format!("plan_{seed}_waypoints.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["segment", "primitive", "fraction", "x", "y", "psi"])?;
        for (k, s) in plan.segments.iter().enumerate() {
            for p in &s.waypoints {
                let row = [k.to_string(), s.primitive.name().to_string(), s.fraction.to_string()];
                w.write_record(row.into_iter().chain(p.iter().map(|v| v.to_string())))?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if let Some(trace) = &run.trace {
        let path = dir.join(format!("trace_{seed}.csv"));
        write_trace_csv(&trace.rows, fs::File::create(&path)?)?;
        written.push(path);
    }
    Ok(written)
}
