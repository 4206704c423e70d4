//! Motion primitive library.
//!
//! A primitive is a recorded rest-to-rest maneuver: the plant is driven from
//! the origin by a pedal/steering script and every time step is stored as a
//! (pose, speed, control) sample in the start frame.

use crate::geom::{se2_compose, Pose2};
use crate::world::{step_plant, Control, Gear, PlantParams, PlantState, SimError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("control script produces no motion samples")]
    EmptyScript,
    #[error("gear changes within a primitive")]
    MixedGear,
    #[error("neutral gear cannot record a primitive")]
    NeutralGear,
    #[error("steering sign changes within a primitive")]
    MixedSteering,
    #[error("truncation fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("primitive config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Plant(#[from] SimError),
    #[error("primitive file: {0}")]
    Io(#[from] std::io::Error),
    #[error("primitive file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveId {
    ForwardStraight,
    ReverseStraight,
    ForwardLeft,
    ForwardRight,
    ReverseLeft,
    ReverseRight,
}

impl PrimitiveId {
    pub const ALL: [PrimitiveId; 6] = [
        PrimitiveId::ForwardStraight,
        PrimitiveId::ReverseStraight,
        PrimitiveId::ForwardLeft,
        PrimitiveId::ForwardRight,
        PrimitiveId::ReverseLeft,
        PrimitiveId::ReverseRight,
    ];

    pub fn gear(self) -> Gear {
        match self {
            PrimitiveId::ForwardStraight | PrimitiveId::ForwardLeft | PrimitiveId::ForwardRight => Gear::Forward,
            _ => Gear::Reverse,
        }
    }

    /// Steering-wheel command in units of the configured steering magnitude:
    /// left is −1, right is +1.
    pub fn steer_sign(self) -> f64 {
        match self {
            PrimitiveId::ForwardLeft | PrimitiveId::ReverseLeft => -1.0,
            PrimitiveId::ForwardRight | PrimitiveId::ReverseRight => 1.0,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveId::ForwardStraight => "forward_straight",
            PrimitiveId::ReverseStraight => "reverse_straight",
            PrimitiveId::ForwardLeft => "forward_left",
            PrimitiveId::ForwardRight => "forward_right",
            PrimitiveId::ReverseLeft => "reverse_left",
            PrimitiveId::ReverseRight => "reverse_right",
        }
    }
}

impl fmt::Display for PrimitiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One recorded step. `control` is the command applied from this sample to the next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub pose: Pose2,
    pub v: f64,
    pub control: Control,
    /// Cumulative chord length from the first sample.
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub id: PrimitiveId,
    pub samples: Vec<Sample>,
    pub arc_length: f64,
}

impl MotionPrimitive {
    pub fn gear(&self) -> Gear {
        self.samples[0].control.gear
    }

    pub fn end_pose(&self) -> Pose2 {
        self.samples.last().expect("primitive has samples").pose
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().expect("primitive has samples").t
    }

    pub fn poses(&self) -> impl Iterator<Item = Pose2> + '_ {
        self.samples.iter().map(|s| s.pose)
    }
}

/// Drives the plant from rest at the origin through `script` and records it.
pub fn record_primitive(
    id: PrimitiveId,
    params: &PlantParams,
    script: &[(Control, f64)],
) -> Result<MotionPrimitive, PrimitiveError> {
    let gear = script.first().map(|(c, _)| c.gear).ok_or(PrimitiveError::EmptyScript)?;
    if gear == Gear::Neutral {
        return Err(PrimitiveError::NeutralGear);
    }
    let steer_sign = script.iter().map(|(c, _)| c.steer.signum()).find(|&s| s != 0.0).unwrap_or(0.0);
    for (c, _) in script {
        if c.gear != gear {
            return Err(PrimitiveError::MixedGear);
        }
        if c.steer != 0.0 && c.steer.signum() != steer_sign {
            return Err(PrimitiveError::MixedSteering);
        }
    }

    let dt = params.dt;
    let mut state = PlantState::at_rest(Pose2::IDENTITY);
    let mut samples = Vec::new();
    let mut t_step = 0usize;
    for (control, duration) in script {
        let steps = (duration / dt).round() as usize;
        for _ in 0..steps {
            samples.push(Sample {
                t: t_step as f64 * dt,
                pose: state.pose,
                v: state.v,
                control: *control,
                arc: 0.0,
            });
            state = step_plant(&state, control, dt, params)?;
            t_step += 1;
        }
    }
    if samples.is_empty() {
        return Err(PrimitiveError::EmptyScript);
    }
    let last_control = samples.last().unwrap().control;
    samples.push(Sample {
        t: t_step as f64 * dt,
        pose: state.pose,
        v: state.v,
        control: last_control,
        arc: 0.0,
    });
    let arc_length = accumulate_arc(&mut samples);
    Ok(MotionPrimitive { id, samples, arc_length })
}

fn accumulate_arc(samples: &mut [Sample]) -> f64 {
    let mut arc = 0.0;
    let mut prev = samples[0].pose.position();
    for s in samples.iter_mut() {
        let p = s.pose.position();
        arc += p.distance(&prev);
        s.arc = arc;
        prev = p;
    }
    arc
}

/// Shape of the standard maneuvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrimitiveConfig {
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Nominal arc length, m.
    pub length: f64,
    /// Duration of the acceleration ramp and of the final braking, s.
    pub ramp_time: f64,
    /// Steering-wheel command magnitude for the curves, rad.
    pub steer: f64,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        Self {
            speed: 0.4,
            length: 3.0,
            ramp_time: 1.0,
            steer: 10.0,
        }
    }
}

/// Ramp up, cruise, brake to rest. Ramp and brake together cover
/// `speed * ramp_time`, the cruise covers the rest of `length`.
pub fn standard_script(
    id: PrimitiveId,
    params: &PlantParams,
    cfg: &PrimitiveConfig,
) -> Result<Vec<(Control, f64)>, PrimitiveError> {
    let accel = cfg.speed / (params.a_max * cfg.ramp_time);
    let brake = cfg.speed / (params.b_max * cfg.ramp_time);
    if !(accel > 0.0 && accel <= 1.0 && brake <= 1.0) {
        return Err(PrimitiveError::BadConfig(format!(
            "speed {} m/s cannot be reached in {} s",
            cfg.speed, cfg.ramp_time
        )));
    }
    if cfg.speed > params.v_max {
        return Err(PrimitiveError::BadConfig(format!("speed {} above v_max", cfg.speed)));
    }
    let cruise = (cfg.length - cfg.speed * cfg.ramp_time) / cfg.speed;
    if cruise < 0.0 {
        return Err(PrimitiveError::BadConfig(format!("length {} shorter than ramps", cfg.length)));
    }
    let steer = id.steer_sign() * cfg.steer;
    let gear = id.gear();
    let ctl = |accel: f64, brake: f64| Control { accel, brake, steer, gear };
    Ok(vec![
        (ctl(accel, 0.0), cfg.ramp_time),
        (ctl(0.0, 0.0), cruise),
        (ctl(0.0, brake), cfg.ramp_time),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSet {
    pub plant: PlantParams,
    pub primitives: Vec<MotionPrimitive>,
}

impl PrimitiveSet {
    pub fn get(&self, id: PrimitiveId) -> Option<&MotionPrimitive> {
        self.primitives.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn to_json(&self) -> Result<String, PrimitiveError> {
        let doc = PrimitiveFile {
            version: PRIMITIVE_FORMAT_VERSION,
            plant: self.plant,
            primitives: self.primitives.iter().map(PrimitiveTable::from).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PrimitiveError> {
        let doc: PrimitiveFile = serde_json::from_str(text)?;
        if doc.version != PRIMITIVE_FORMAT_VERSION {
            return Err(PrimitiveError::BadConfig(format!("unsupported version {}", doc.version)));
        }
        let primitives = doc
            .primitives
            .into_iter()
            .map(|t| t.into_primitive())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { plant: doc.plant, primitives })
    }

    pub fn save(&self, path: &Path) -> Result<(), PrimitiveError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PrimitiveError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The six canonical maneuvers for a plant.
pub fn generate_standard_set(params: &PlantParams, cfg: &PrimitiveConfig) -> Result<PrimitiveSet, PrimitiveError> {
    let primitives = PrimitiveId::ALL
        .iter()
        .map(|&id| record_primitive(id, params, &standard_script(id, params, cfg)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PrimitiveSet { plant: *params, primitives })
}

/// Prefix of `p` whose arc length stays within `fraction` of the total.
pub fn truncate(p: &MotionPrimitive, fraction: f64) -> Result<MotionPrimitive, PrimitiveError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(PrimitiveError::BadFraction(fraction));
    }
    let limit = fraction * p.arc_length;
    let keep = p.samples.iter().take_while(|s| s.arc <= limit).count().max(2).min(p.samples.len());
    let samples = p.samples[..keep].to_vec();
    let arc_length = samples[keep - 1].arc;
    Ok(MotionPrimitive {
        id: p.id,
        samples,
        arc_length,
    })
}

/// World-frame waypoints of `p` started at `node_pose`.
pub fn place_in_frame(p: &MotionPrimitive, node_pose: &Pose2) -> Vec<Pose2> {
    p.samples.iter().map(|s| se2_compose(node_pose, &s.pose)).collect()
}

pub const PRIMITIVE_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PrimitiveFile {
    version: u32,
    plant: PlantParams,
    primitives: Vec<PrimitiveTable>,
}

/// Sample table with columns `t, x, y, psi, v, a, b, s, g`.
#[derive(Serialize, Deserialize)]
struct PrimitiveTable {
    id: PrimitiveId,
    arc_length: f64,
    columns: [String; 9],
    rows: Vec<[f64; 9]>,
}

impl From<&MotionPrimitive> for PrimitiveTable {
    fn from(p: &MotionPrimitive) -> Self {
        Self {
            id: p.id,
            arc_length: p.arc_length,
            columns: ["t", "x", "y", "psi", "v", "a", "b", "s", "g"].map(String::from),
            rows: p
                .samples
                .iter()
                .map(|s| {
                    [
                        s.t,
                        s.pose.px,
                        s.pose.py,
                        s.pose.psi,
                        s.v,
                        s.control.accel,
                        s.control.brake,
                        s.control.steer,
                        s.control.gear.code() as f64,
                    ]
                })
                .collect(),
        }
    }
}

impl PrimitiveTable {
    fn into_primitive(self) -> Result<MotionPrimitive, PrimitiveError> {
        if self.rows.len() < 2 {
            return Err(PrimitiveError::EmptyScript);
        }
        let mut samples = self
            .rows
            .iter()
            .map(|r| {
                let gear = Gear::from_code(r[8] as u8)
                    .ok_or_else(|| PrimitiveError::BadConfig(format!("bad gear code {}", r[8])))?;
                Ok(Sample {
                    t: r[0],
                    pose: Pose2 { px: r[1], py: r[2], psi: r[3] },
                    v: r[4],
                    control: Control { accel: r[5], brake: r[6], steer: r[7], gear },
                    arc: 0.0,
                })
            })
            .collect::<Result<Vec<_>, PrimitiveError>>()?;
        accumulate_arc(&mut samples);
        Ok(MotionPrimitive {
            id: self.id,
            samples,
            arc_length: self.arc_length,
        })
    }
}
