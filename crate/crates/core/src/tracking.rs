//! Closed-loop execution of plans: gear/steering segments, a PID speed loop
//! and waypoint passing, with ground-truth or scan-matched pose feedback.

use crate::geom::{normalize_angle, Point2, Pose2};
use crate::grid::{GridError, OccupancyGrid};
use crate::matcher::{try_match_scan, MatchParams};
use crate::planner::{distance, Configuration, Plan};
use crate::world::{scan_with, step_plant, Control, Gear, LidarConfig, ObstacleWorld, PlantParams, PlantState, SimError};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("plan has no segments")]
    EmptyPlan,
    #[error("tracking parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("trace file: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace file: {0}")]
    Format(String),
}

/// One constant-steering stretch of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSegment {
    pub gear: Gear,
    /// Steering-wheel command, radians.
    pub steer: f64,
    pub target_speed: f64,
    pub waypoints: Vec<Pose2>,
    pub terminal_stop: bool,
}

/// Translates plan segments into actions with steering `±steer` for the
/// curves. Every gear change and the final segment end in a full stop.
pub fn plan_to_segments(plan: &Plan, target_speed: f64, steer: f64) -> Result<Vec<ActionSegment>, TrackError> {
    if plan.segments.is_empty() {
        return Err(TrackError::EmptyPlan);
    }
    let n = plan.segments.len();
    Ok(plan
        .segments
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let gear = s.primitive.gear();
            let terminal_stop = i + 1 == n || plan.segments[i + 1].primitive.gear() != gear;
            ActionSegment {
                gear,
                steer: s.primitive.steer_sign() * steer,
                target_speed,
                waypoints: s.waypoints.clone(),
                terminal_stop,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidGains {
    /// Tuned once against the default plant: a 0 to 0.4 m/s step settles
    /// inside ±0.01 m/s in under 1 s.
    fn default() -> Self {
        Self { kp: 4.0, ki: 0.5, kd: 0.0 }
    }
}

/// Pedal split of one controller output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pedals {
    pub accel: f64,
    pub brake: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    pub gains: PidGains,
    pub integral: f64,
    pub prev_error: Option<f64>,
    pub dt: f64,
    /// Overspeed tolerated before the brake is used.
    pub deadband: f64,
}

impl PidState {
    pub fn new(gains: PidGains, dt: f64, deadband: f64) -> Result<Self, TrackError> {
        if !(dt > 0.0) {
            return Err(TrackError::BadParams(format!("dt {dt}")));
        }
        Ok(Self { gains, integral: 0.0, prev_error: None, dt, deadband })
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }
}

/// One PID update on the signed speed error `e = v* − v`. Positive output
/// drives the accelerator; negative output brakes once the overspeed exceeds
/// the deadband. The integral is frozen while the output saturates.
pub fn pid_step(state: &mut PidState, e: f64) -> Pedals {
    let g = state.gains;
    let derivative = state.prev_error.map_or(0.0, |p| (e - p) / state.dt);
    state.prev_error = Some(e);
    let candidate = state.integral + e * state.dt;
    let raw = g.kp * e + g.ki * candidate + g.kd * derivative;
    if raw.abs() <= 1.0 || raw.signum() != e.signum() {
        state.integral = candidate;
    }
    let u = (g.kp * e + g.ki * state.integral + g.kd * derivative).clamp(-1.0, 1.0);
    if u >= 0.0 {
        Pedals { accel: u, brake: 0.0 }
    } else if e < -state.deadband {
        Pedals { accel: 0.0, brake: -u }
    } else {
        Pedals::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    pub gains: PidGains,
    pub target_speed: f64,
    /// Steering-wheel magnitude for curved segments, rad.
    pub steer: f64,
    pub deadband: f64,
    pub capture_radius: f64,
    /// Deceleration of the speed reference on the approach to a stop, m/s².
    pub approach_decel: f64,
    /// Lowest reference speed before a stop point is reached.
    pub creep_speed: f64,
    /// Extra seconds allowed per segment beyond its nominal duration.
    pub segment_slack: f64,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            gains: PidGains::default(),
            target_speed: 0.4,
            steer: 10.0,
            deadband: 0.02,
            capture_radius: 0.1,
            approach_decel: 0.2,
            creep_speed: 0.03,
            segment_slack: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlamParams {
    pub lidar: LidarConfig,
    pub matcher: MatchParams,
    /// Map update thresholds on the estimated motion since the last update.
    pub update_distance: f64,
    pub update_angle: f64,
    /// Gaussian range jitter, meters; 0 disables it.
    pub range_noise: f64,
    pub noise_seed: u64,
    /// Scans integrated at the start pose before moving when the localizer
    /// builds its own map.
    pub warmup_scans: usize,
    /// Control steps per lidar scan; the estimate is held in between.
    pub scan_interval: usize,
}

impl Default for SlamParams {
    fn default() -> Self {
        Self {
            lidar: LidarConfig::default(),
            matcher: MatchParams { levels: 1, ..MatchParams::default() },
            update_distance: 0.2,
            update_angle: 0.1,
            range_noise: 0.0,
            noise_seed: 0,
            warmup_scans: 6,
            scan_interval: 1,
        }
    }
}

/// Scan-matching localizer over a live-updated grid. Each observation scans
/// from the true pose, matches against the grid starting at the previous
/// estimate, and integrates the scan once the estimate has moved far enough.
#[derive(Debug, Clone)]
pub struct SlamLocalizer<'w> {
    world: &'w ObstacleWorld,
    pub grid: OccupancyGrid,
    pub params: SlamParams,
    estimate: Pose2,
    last_update: Pose2,
    rng: ChaCha8Rng,
    ticks: usize,
    pub matches: usize,
    pub failures: usize,
}

impl<'w> SlamLocalizer<'w> {
    pub fn new(world: &'w ObstacleWorld, grid: OccupancyGrid, start: Pose2, params: SlamParams) -> Self {
        Self {
            world,
            grid,
            params,
            estimate: start,
            last_update: start,
            rng: ChaCha8Rng::seed_from_u64(params.noise_seed),
            ticks: 0,
            matches: 0,
            failures: 0,
        }
    }

    /// Localizer over an empty grid of resolution `delta` covering the world,
    /// warmed up at `start`. The grid lattice sits half a cell off the world
    /// coordinate lattice: surfaces authored at round coordinates then fall
    /// on cell centers rather than cell boundaries, where flooring would push
    /// every endpoint into the same neighbour and bias the estimate by half
    /// a cell.
    pub fn with_fresh_map(world: &'w ObstacleWorld, start: Pose2, delta: f64, params: SlamParams) -> Result<Self, TrackError> {
        let b = world.bounds();
        let origin = Point2::new(b.min.x - 0.5 * delta, b.min.y - 0.5 * delta);
        let grid = OccupancyGrid::covering(origin, b.max, delta)?;
        let mut loc = Self::new(world, grid, start, params);
        loc.warm_up(&start)?;
        Ok(loc)
    }

    pub fn estimate(&self) -> Pose2 {
        self.estimate
    }

    /// Integrates `warmup_scans` scans taken at `truth` at the current
    /// estimate without matching, as a sensor does while the vehicle is parked.
    pub fn warm_up(&mut self, truth: &Pose2) -> Result<(), TrackError> {
        for _ in 0..self.params.warmup_scans {
            let mut scan = scan_with(self.world, truth, &self.params.lidar)?;
            if self.params.range_noise > 0.0 {
                scan.jitter(&mut self.rng, self.params.range_noise);
            }
            self.grid.integrate_scan(&self.estimate, &scan);
        }
        Ok(())
    }

    /// Updates the estimate from a scan taken at `truth`. A failed match keeps
    /// the previous estimate and skips the map update.
    pub fn observe(&mut self, truth: &Pose2) -> Result<Pose2, TrackError> {
        let tick = self.ticks;
        self.ticks += 1;
        if tick % self.params.scan_interval.max(1) != 0 {
            return Ok(self.estimate);
        }
        self.matches += 1;
        if !self.world.bounds().contains(truth.position()) {
            // nothing to scan outside the world
            self.failures += 1;
            return Ok(self.estimate);
        }
        let mut scan = scan_with(self.world, truth, &self.params.lidar)?;
        if self.params.range_noise > 0.0 {
            scan.jitter(&mut self.rng, self.params.range_noise);
        }
        let Ok(res) = try_match_scan(&self.grid, &scan, &self.estimate, &self.params.matcher) else {
            self.failures += 1;
            return Ok(self.estimate);
        };
        self.estimate = res.pose;
        let moved = self.estimate.position().distance(&self.last_update.position());
        let turned = normalize_angle(self.estimate.psi - self.last_update.psi).abs();
        if moved >= self.params.update_distance || turned >= self.params.update_angle {
            self.grid.integrate_scan(&self.estimate, &scan);
            self.last_update = self.estimate;
        }
        Ok(self.estimate)
    }
}

/// Source of the pose fed back to the controller.
#[derive(Debug)]
pub enum PoseSource<'w> {
    GroundTruth,
    Slam(Box<SlamLocalizer<'w>>),
}

impl PoseSource<'_> {
    fn observe(&mut self, truth: &Pose2) -> Result<Pose2, TrackError> {
        match self {
            PoseSource::GroundTruth => Ok(*truth),
            PoseSource::Slam(l) => l.observe(truth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub truth: Pose2,
    pub estimate: Pose2,
    pub control: Control,
    /// Measured absolute speed.
    pub v: f64,
    /// Absolute speed error.
    pub e_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassEvent {
    pub segment: usize,
    pub waypoint: usize,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackFailure {
    pub segment: usize,
    pub waypoint: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub initial: Configuration,
    /// Ground-truth configuration at the end of the run.
    pub final_config: Configuration,
    pub final_estimate: Configuration,
    pub passes: Vec<PassEvent>,
    pub failed: Option<TrackFailure>,
}

impl Trace {
    pub fn succeeded(&self) -> bool {
        self.failed.is_none()
    }
}

/// Executes `plan` on the plant starting at rest at the plan start.
pub fn track(
    plan: &Plan,
    plant: &PlantParams,
    source: &mut PoseSource<'_>,
    params: &TrackParams,
) -> Result<Trace, TrackError> {
    let start = plan.start.pose();
    let mut trace = Trace {
        rows: Vec::new(),
        initial: plan.start,
        final_config: plan.start,
        final_estimate: plan.start,
        passes: Vec::new(),
        failed: None,
    };
    if plan.segments.is_empty() {
        return Ok(trace);
    }
    let segments = plan_to_segments(plan, params.target_speed, params.steer)?;
    let dt = plant.dt;
    let mut pid = PidState::new(params.gains, dt, params.deadband)?;
    let mut state = PlantState::at_rest(start);
    let mut step: u64 = 0;
    let mut estimate = start;

    'segments: for (si, seg) in segments.iter().enumerate() {
        let wps = &seg.waypoints;
        let dir = seg.gear.direction();
        let suffix = suffix_lengths(wps);
        let nominal = suffix[0] / seg.target_speed.max(1e-6);
        let deadline = step as f64 * dt + nominal + params.segment_slack;
        let mut next = 1;
        while next < wps.len() {
            if step as f64 * dt > deadline {
                trace.failed = Some(TrackFailure { segment: si, waypoint: next });
                break 'segments;
            }
            let remaining = estimate.position().distance(&wps[next].position()) + suffix[next];
            let reference = if seg.terminal_stop {
                seg.target_speed
                    .min((2.0 * params.approach_decel * remaining).sqrt())
                    .max(params.creep_speed)
            } else {
                seg.target_speed
            };
            let e = reference - state.speed();
            let pedals = pid_step(&mut pid, e);
            let u = Control { accel: pedals.accel, brake: pedals.brake, steer: seg.steer, gear: seg.gear };
            record(&mut trace, &mut state, &mut estimate, &mut step, u, e, source, plant)?;
            while next < wps.len() {
                // the stop point itself is only passed by projection
                let radius = if next + 1 == wps.len() { 0.0 } else { params.capture_radius };
                if !passed(&estimate, &wps[next], dir, radius) {
                    break;
                }
                trace.passes.push(PassEvent { segment: si, waypoint: next, t: step as f64 * dt });
                next += 1;
            }
        }
        if seg.terminal_stop {
            pid.reset();
            while state.v != 0.0 {
                let u = Control { accel: 0.0, brake: 1.0, steer: seg.steer, gear: seg.gear };
                let e = -state.speed();
                record(&mut trace, &mut state, &mut estimate, &mut step, u, e, source, plant)?;
            }
        }
    }
    trace.final_config = Configuration::from_pose(&state.pose);
    trace.final_estimate = Configuration::from_pose(&estimate);
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn record(
    trace: &mut Trace,
    state: &mut PlantState,
    estimate: &mut Pose2,
    step: &mut u64,
    u: Control,
    e: f64,
    source: &mut PoseSource<'_>,
    plant: &PlantParams,
) -> Result<(), TrackError> {
    *state = step_plant(state, &u, plant.dt, plant)?;
    *step += 1;
    *estimate = source.observe(&state.pose)?;
    trace.rows.push(TraceRow {
        t: *step as f64 * plant.dt,
        truth: state.pose,
        estimate: *estimate,
        control: u,
        v: state.speed(),
        e_v: e.abs(),
    });
    Ok(())
}

/// Arc length from each waypoint to the last one.
fn suffix_lengths(wps: &[Pose2]) -> Vec<f64> {
    let mut out = vec![0.0; wps.len()];
    for i in (0..wps.len().saturating_sub(1)).rev() {
        out[i] = out[i + 1] + wps[i].position().distance(&wps[i + 1].position());
    }
    out
}

/// A waypoint is passed once the position is within `radius` of it or lies
/// beyond it along the direction of travel.
fn passed(p: &Pose2, w: &Pose2, dir: f64, radius: f64) -> bool {
    let (dx, dy) = (p.px - w.px, p.py - w.py);
    if dx.hypot(dy) <= radius {
        return true;
    }
    let (s, c) = w.psi.sin_cos();
    dir * (dx * c + dy * s) > 0.0
}

/// Distance between the achieved and the goal configuration.
pub fn drift(final_config: &Configuration, goal: &Configuration) -> f64 {
    distance(final_config, goal)
}

pub const TRACE_FORMAT_VERSION: u32 = 1;

const TRACE_HEADER: [&str; 13] = ["t", "x_true", "y_true", "psi_true", "x_est", "y_est", "psi_est", "v", "a", "b", "s", "g", "e_v"];

/// Writes the per-step table, preceded by a `# trace v1` line.
pub fn write_trace_csv<W: Write>(rows: &[TraceRow], mut out: W) -> Result<(), TrackError> {
    writeln!(out, "# trace v{TRACE_FORMAT_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in rows {
        w.write_record(&[
            r.t.to_string(),
            r.truth.px.to_string(),
            r.truth.py.to_string(),
            r.truth.psi.to_string(),
            r.estimate.px.to_string(),
            r.estimate.py.to_string(),
            r.estimate.psi.to_string(),
            r.v.to_string(),
            r.control.accel.to_string(),
            r.control.brake.to_string(),
            r.control.steer.to_string(),
            r.control.gear.code().to_string(),
            r.e_v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>, TrackError> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let (first, body) = text.split_once('\n').ok_or_else(|| TrackError::Format("empty file".into()))?;
    if first.trim() != format!("# trace v{TRACE_FORMAT_VERSION}") {
        return Err(TrackError::Format(format!("unsupported header {first:?}")));
    }
    let mut r = csv::Reader::from_reader(body.as_bytes());
    if r.headers()?.iter().ne(TRACE_HEADER) {
        return Err(TrackError::Format("unexpected columns".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, TrackError> {
            rec[i].parse().map_err(|_| TrackError::Format(format!("bad number {:?}", &rec[i])))
        };
        let gear = rec[11]
            .parse::<u8>()
            .ok()
            .and_then(Gear::from_code)
            .ok_or_else(|| TrackError::Format(format!("bad gear {:?}", &rec[11])))?;
        rows.push(TraceRow {
            t: f(0)?,
            truth: Pose2 { px: f(1)?, py: f(2)?, psi: f(3)? },
            estimate: Pose2 { px: f(4)?, py: f(5)?, psi: f(6)? },
            v: f(7)?,
            control: Control { accel: f(8)?, brake: f(9)?, steer: f(10)?, gear },
            e_v: f(12)?,
        });
    }
    Ok(rows)
}
