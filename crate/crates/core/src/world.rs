//! Simulated surroundings: polygonal obstacle worlds, a ray-cast 2D LiDAR
//! and a kinematic bicycle plant driven by pedal, brake, steering-wheel and
//! gear commands.

use crate::geom::{normalize_angle, Point2, Pose2};
use crate::polygon::{ray_segment, Aabb, Polygon};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("obstacle {0} is not a simple polygon with at least 3 vertices")]
    NotSimple(usize),
    #[error("obstacle {0} leaves the world bounds")]
    OutOfBounds(usize),
    #[error("world bounds are empty")]
    EmptyBounds,
    #[error("ray origin ({x}, {y}) is outside the world bounds")]
    OriginOutside { x: f64, y: f64 },
    #[error("scan needs at least one beam")]
    NoBeams,
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("control out of range: {0}")]
    ControlOutOfRange(String),
    #[error("world file: {0}")]
    Io(#[from] std::io::Error),
    #[error("world file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("world file: {0}")]
    Format(String),
}

/// Immutable set of obstacles inside an axis-aligned bounding box.
#[derive(Debug, Clone)]
pub struct ObstacleWorld {
    bounds: Aabb,
    obstacles: Vec<Polygon>,
}

impl ObstacleWorld {
    pub fn new(bounds: Aabb, obstacles: Vec<Polygon>) -> Result<Self, SimError> {
        if !(bounds.min.x < bounds.max.x && bounds.min.y < bounds.max.y) {
            return Err(SimError::EmptyBounds);
        }
        for (i, poly) in obstacles.iter().enumerate() {
            if !poly.is_simple() {
                return Err(SimError::NotSimple(i));
            }
            if !poly.vertices().iter().all(|v| bounds.contains(*v)) {
                return Err(SimError::OutOfBounds(i));
            }
        }
        Ok(Self { bounds, obstacles })
    }

    pub fn empty(bounds: Aabb) -> Self {
        Self {
            bounds,
            obstacles: Vec::new(),
        }
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Polygon] {
        &self.obstacles
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let doc: WorldDoc = toml::from_str(text)?;
        if doc.version != WORLD_FORMAT_VERSION {
            return Err(SimError::Format(format!(
                "unsupported world version {}",
                doc.version
            )));
        }
        let bounds = Aabb::new(
            Point2::new(doc.bounds.min[0], doc.bounds.min[1]),
            Point2::new(doc.bounds.max[0], doc.bounds.max[1]),
        );
        let obstacles = doc
            .obstacles
            .into_iter()
            .map(ObstacleDoc::into_polygon)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(bounds, obstacles)
    }

    pub fn to_toml(&self) -> String {
        let doc = WorldDoc {
            version: WORLD_FORMAT_VERSION,
            bounds: BoundsDoc {
                min: [self.bounds.min.x, self.bounds.min.y],
                max: [self.bounds.max.x, self.bounds.max.y],
            },
            obstacles: self
                .obstacles
                .iter()
                .map(|p| ObstacleDoc {
                    vertices: Some(p.vertices().iter().map(|v| [v.x, v.y]).collect()),
                    rect: None,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("world document serializes")
    }
}

pub const WORLD_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WorldDoc {
    version: u32,
    bounds: BoundsDoc,
    #[serde(default)]
    obstacles: Vec<ObstacleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsDoc {
    min: [f64; 2],
    max: [f64; 2],
}

/// Either an explicit vertex ring or an oriented rectangle.
#[derive(Debug, Serialize, Deserialize)]
struct ObstacleDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rect: Option<RectDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RectDoc {
    center: [f64; 2],
    size: [f64; 2],
    #[serde(default)]
    heading: f64,
}

impl ObstacleDoc {
    fn into_polygon(self) -> Result<Polygon, SimError> {
        match (self.vertices, self.rect) {
            (Some(v), None) => Ok(Polygon::new(
                v.into_iter().map(|[x, y]| Point2::new(x, y)).collect(),
            )),
            (None, Some(r)) => Ok(Polygon::rectangle(
                Pose2::new(r.center[0], r.center[1], r.heading),
                r.size[0],
                r.size[1],
            )),
            _ => Err(SimError::Format(
                "obstacle needs exactly one of `vertices` or `rect`".into(),
            )),
        }
    }
}

/// Distance to the first obstacle edge along a ray, `None` if nothing is hit
/// within `max_range`.
pub fn ray_cast(
    world: &ObstacleWorld,
    origin: Point2,
    bearing: f64,
    max_range: f64,
) -> Result<Option<f64>, SimError> {
    if !world.bounds.contains(origin) {
        return Err(SimError::OriginOutside {
            x: origin.x,
            y: origin.y,
        });
    }
    Ok(cast_unchecked(world, origin, bearing, max_range))
}

fn cast_unchecked(world: &ObstacleWorld, origin: Point2, bearing: f64, max_range: f64) -> Option<f64> {
    let (s, c) = bearing.sin_cos();
    let end = Point2::new(origin.x + c * max_range, origin.y + s * max_range);
    let ray_box = Aabb::from_points(&[origin, end]);
    let mut best: Option<f64> = None;
    for poly in &world.obstacles {
        if !poly.bbox().overlaps(&ray_box) {
            continue;
        }
        for (a, b) in poly.edges() {
            if let Some(t) = ray_segment(origin, (c, s), a, b) {
                if t > 0.0 && t <= max_range && best.is_none_or(|bt| t < bt) {
                    best = Some(t);
                }
            }
        }
    }
    best
}

/// LiDAR sweep, bearings in the sensor frame. Beams without a return are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub angles: Vec<f64>,
    pub ranges: Vec<Option<f64>>,
    pub max_range: f64,
}

impl LidarScan {
    /// Returned beam endpoints in the sensor frame.
    pub fn endpoints(&self) -> impl Iterator<Item = Point2> + '_ {
        self.angles
            .iter()
            .zip(&self.ranges)
            .filter_map(|(a, r)| r.map(|r| Point2::new(r * a.cos(), r * a.sin())))
    }

    pub fn returns(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.returns() == 0
    }

    /// Adds Gaussian range noise to returned beams.
    pub fn jitter<R: Rng>(&mut self, rng: &mut R, std_dev: f64) {
        if std_dev <= 0.0 {
            return;
        }
        let normal = rand::distributions::Uniform::new(0.0f64, 1.0);
        for r in self.ranges.iter_mut().flatten() {
            // Box-Muller
            let u1: f64 = rng.sample(normal).max(1e-300);
            let u2: f64 = rng.sample(normal);
            let z = (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos();
            *r = (*r + std_dev * z).clamp(1e-6, self.max_range);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            n_beams: 360,
            fov: TAU,
            max_range: 30.0,
        }
    }
}

/// Sweeps `n_beams` bearings evenly over `fov`, centered on the sensor heading.
pub fn scan_world(
    world: &ObstacleWorld,
    sensor_pose: &Pose2,
    n_beams: usize,
    fov: f64,
    max_range: f64,
) -> Result<LidarScan, SimError> {
    if n_beams == 0 {
        return Err(SimError::NoBeams);
    }
    let origin = sensor_pose.position();
    if !world.bounds.contains(origin) {
        return Err(SimError::OriginOutside {
            x: origin.x,
            y: origin.y,
        });
    }
    let step = fov / n_beams as f64;
    let angles: Vec<f64> = (0..n_beams)
        .map(|i| -0.5 * fov + (i as f64 + 0.5) * step)
        .collect();
    let ranges = angles
        .iter()
        .map(|a| cast_unchecked(world, origin, sensor_pose.psi + a, max_range))
        .collect();
    Ok(LidarScan {
        angles,
        ranges,
        max_range,
    })
}

pub fn scan_with(world: &ObstacleWorld, sensor_pose: &Pose2, cfg: &LidarConfig) -> Result<LidarScan, SimError> {
    scan_world(world, sensor_pose, cfg.n_beams, cfg.fov, cfg.max_range)
}

/// Gear selector; the numeric codes are reverse = 1, neutral = 2, forward = 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gear {
    Reverse,
    Neutral,
    Forward,
}

impl Gear {
    pub fn code(self) -> u8 {
        match self {
            Gear::Reverse => 1,
            Gear::Neutral => 2,
            Gear::Forward => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Gear::Reverse),
            2 => Some(Gear::Neutral),
            3 => Some(Gear::Forward),
            _ => None,
        }
    }

    /// Sign of travel, 0 for neutral.
    pub fn direction(self) -> f64 {
        match self {
            Gear::Reverse => -1.0,
            Gear::Neutral => 0.0,
            Gear::Forward => 1.0,
        }
    }
}

/// One actuator command: pedal `accel` and `brake` in [0, 1], steering-wheel
/// angle `steer` in radians, and gear.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub accel: f64,
    pub brake: f64,
    pub steer: f64,
    pub gear: Gear,
}

impl Control {
    pub fn idle(gear: Gear) -> Self {
        Self {
            accel: 0.0,
            brake: 0.0,
            steer: 0.0,
            gear,
        }
    }
}

/// Kinematic bicycle parameters. Positive steering-wheel commands turn the
/// vehicle clockwise (to the right) when driving forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    pub wheelbase: f64,
    /// Acceleration at full pedal, m/s².
    pub a_max: f64,
    /// Deceleration at full brake, m/s².
    pub b_max: f64,
    pub v_max: f64,
    pub steering_ratio: f64,
    /// Road-wheel angle clamp, radians.
    pub max_wheel_angle: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub dt: f64,
    /// Constant resistive deceleration (grade, rolling resistance), m/s².
    pub grade_decel: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.57,
            a_max: 1.0,
            b_max: 2.0,
            v_max: 1.5,
            steering_ratio: 16.0,
            max_wheel_angle: 0.6,
            s_min: -10.0,
            s_max: 10.0,
            dt: 0.05,
            grade_decel: 0.0,
        }
    }
}

/// Plant state. `v` is signed by the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub pose: Pose2,
    pub v: f64,
}

impl PlantState {
    pub fn at_rest(pose: Pose2) -> Self {
        Self { pose, v: 0.0 }
    }

    /// Absolute speed.
    pub fn speed(&self) -> f64 {
        self.v.abs()
    }
}

/// Road-wheel angle for a steering-wheel command.
pub fn steering_command_to_wheel_angle(s: f64, params: &PlantParams) -> Result<f64, SimError> {
    if !(s >= params.s_min && s <= params.s_max) {
        return Err(SimError::ControlOutOfRange(format!(
            "steering {s} outside [{}, {}]",
            params.s_min, params.s_max
        )));
    }
    Ok((s / params.steering_ratio).clamp(-params.max_wheel_angle, params.max_wheel_angle))
}

/// One forward-Euler step of the kinematic bicycle.
pub fn step_plant(
    state: &PlantState,
    u: &Control,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::BadTimeStep(dt));
    }
    if !(0.0..=1.0).contains(&u.accel) || !(0.0..=1.0).contains(&u.brake) {
        return Err(SimError::ControlOutOfRange(format!(
            "pedals accel={} brake={}",
            u.accel, u.brake
        )));
    }
    let wheel = steering_command_to_wheel_angle(u.steer, params)?;

    let pose = &state.pose;
    let (s, c) = pose.psi.sin_cos();
    let yaw_rate = -state.v * wheel.tan() / params.wheelbase;
    let next_pose = Pose2::new(
        pose.px + state.v * c * dt,
        pose.py + state.v * s * dt,
        pose.psi + yaw_rate * dt,
    );

    let drive = if u.gear == Gear::Neutral { 0.0 } else { u.accel * params.a_max };
    let resist = if state.v != 0.0 || drive > 0.0 { params.grade_decel } else { 0.0 };
    let speed = (state.speed() + (drive - u.brake * params.b_max - resist) * dt).clamp(0.0, params.v_max);
    let direction = match u.gear {
        Gear::Neutral => state.v.signum(),
        g => g.direction(),
    };
    Ok(PlantState {
        pose: next_pose,
        v: if speed == 0.0 { 0.0 } else { direction * speed },
    })
}

/// Closed-form pose after driving a circular arc (or straight line) at
/// constant signed speed `v` and road-wheel angle `wheel` for `t` seconds.
pub fn exact_arc(start: &Pose2, v: f64, wheel: f64, wheelbase: f64, t: f64) -> Pose2 {
    let omega = -v * wheel.tan() / wheelbase;
    if omega.abs() < 1e-12 {
        let (s, c) = start.psi.sin_cos();
        return Pose2::new(start.px + v * t * c, start.py + v * t * s, start.psi);
    }
    let th1 = start.psi + omega * t;
    let r = v / omega;
    Pose2::new(
        start.px + r * (th1.sin() - start.psi.sin()),
        start.py - r * (th1.cos() - start.psi.cos()),
        normalize_angle(th1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polygon::point_segment_distance;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn bounds() -> Aabb {
        Aabb::new(Point2::new(-20.0, -20.0), Point2::new(20.0, 20.0))
    }

    fn unit_square_world(x0: f64) -> ObstacleWorld {
        let sq = Polygon::new(vec![
            Point2::new(x0, -0.5),
            Point2::new(x0 + 1.0, -0.5),
            Point2::new(x0 + 1.0, 0.5),
            Point2::new(x0, 0.5),
        ]);
        ObstacleWorld::new(bounds(), vec![sq]).unwrap()
    }

    #[test]
    fn ray_cast_examples() {
        let empty = ObstacleWorld::empty(bounds());
        for k in 0..16 {
            assert_eq!(ray_cast(&empty, Point2::default(), k as f64 * 0.4, 30.0).unwrap(), None);
        }
        let w = unit_square_world(5.0);
        assert_abs_diff_eq!(ray_cast(&w, Point2::default(), 0.0, 30.0).unwrap().unwrap(), 5.0, epsilon = 1e-12);
        assert_eq!(ray_cast(&w, Point2::default(), 0.0, 4.0).unwrap(), None);
        assert!(ray_cast(&w, Point2::new(100.0, 0.0), 0.0, 4.0).is_err());
    }

    /// Brute-force parametric intersection against every edge, written
    /// independently of `ray_segment`.
    fn oracle_cast(world: &ObstacleWorld, o: Point2, bearing: f64, max_range: f64) -> Option<f64> {
        let far = Point2::new(o.x + max_range * bearing.cos(), o.y + max_range * bearing.sin());
        let mut best = None::<f64>;
        for poly in world.obstacles() {
            for (a, b) in poly.edges() {
                // solve o + s (far - o) = a + u (b - a)
                let r = (far.x - o.x, far.y - o.y);
                let e = (b.x - a.x, b.y - a.y);
                let m = [[r.0, -e.0], [r.1, -e.1]];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det.abs() < 1e-15 {
                    continue;
                }
                let rhs = (a.x - o.x, a.y - o.y);
                let s = (rhs.0 * m[1][1] - m[0][1] * rhs.1) / det;
                let u = (m[0][0] * rhs.1 - rhs.0 * m[1][0]) / det;
                if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u) {
                    let d = s * max_range;
                    if d > 0.0 && best.is_none_or(|b| d < b) {
                        best = Some(d);
                    }
                }
            }
        }
        best
    }

    #[test]
    fn ray_cast_diagonal_matches_oracle() {
        let w = unit_square_world(5.0);
        let o = Point2::new(2.0, -3.0);
        let bearing = FRAC_PI_4;
        let got = ray_cast(&w, o, bearing, 30.0).unwrap().unwrap();
        let want = oracle_cast(&w, o, bearing, 30.0).unwrap();
        assert_abs_diff_eq!(got, want, epsilon = 1e-9);
        // enters through the near edge at (5, 0)
        assert_abs_diff_eq!(got, 3.0 * 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn ray_cast_endpoints_lie_on_edges() {
        let w = unit_square_world(3.0);
        let o = Point2::new(-1.0, 0.3);
        for k in 0..720 {
            let b = k as f64 * TAU / 720.0;
            if let Some(r) = ray_cast(&w, o, b, 30.0).unwrap() {
                let p = Point2::new(o.x + r * b.cos(), o.y + r * b.sin());
                let d = w.obstacles()[0]
                    .edges()
                    .map(|(a, c)| point_segment_distance(p, a, c))
                    .fold(f64::INFINITY, f64::min);
                assert!(d < 1e-6);
                assert_abs_diff_eq!(r, oracle_cast(&w, o, b, 30.0).unwrap(), epsilon = 1e-9);
            } else {
                assert_eq!(oracle_cast(&w, o, b, 30.0), None);
            }
        }
    }

    #[test]
    fn scan_examples() {
        let empty = ObstacleWorld::empty(bounds());
        let s = scan_world(&empty, &Pose2::IDENTITY, 36, TAU, 30.0).unwrap();
        assert_eq!(s.ranges.len(), 36);
        assert!(s.ranges.iter().all(Option::is_none));

        let wall = Polygon::new(vec![
            Point2::new(4.0, -2.0),
            Point2::new(4.2, -2.0),
            Point2::new(4.2, 2.0),
            Point2::new(4.0, 2.0),
        ]);
        let w = ObstacleWorld::new(bounds(), vec![wall]).unwrap();
        let pose = Pose2::new(0.5, 0.2, 0.1);
        let s = scan_world(&w, &pose, 90, TAU, 30.0).unwrap();
        for (a, r) in s.angles.iter().zip(&s.ranges) {
            let oracle = oracle_cast(&w, pose.position(), pose.psi + a, 30.0);
            assert_eq!(r.is_some(), oracle.is_some());
        }
        assert!(s.returns() > 0 && s.returns() < 90);

        let one = scan_world(&w, &pose, 1, TAU, 30.0).unwrap();
        assert_eq!(one.angles, vec![0.0]);
        assert_eq!(one.ranges[0], ray_cast(&w, pose.position(), pose.psi, 30.0).unwrap());
        assert!(matches!(scan_world(&w, &pose, 0, TAU, 30.0), Err(SimError::NoBeams)));
    }

    #[test]
    fn plant_examples() {
        let p = PlantParams::default();
        let s0 = PlantState::default();
        let s1 = step_plant(&s0, &Control::idle(Gear::Neutral), p.dt, &p).unwrap();
        assert_eq!(s1, s0);

        let s0 = PlantState {
            pose: Pose2::new(1.0, 1.0, 0.3),
            v: 0.4,
        };
        let s1 = step_plant(&s0, &Control::idle(Gear::Forward), 1.0, &p).unwrap();
        assert_abs_diff_eq!(s1.pose.px, 1.0 + 0.4 * 0.3f64.cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(s1.pose.py, 1.0 + 0.4 * 0.3f64.sin(), epsilon = 1e-12);
        assert_eq!(s1.pose.psi, 0.3);
        assert_eq!(s1.v, 0.4);

        assert!(step_plant(&s0, &Control::idle(Gear::Forward), 0.0, &p).is_err());
        let mut bad = Control::idle(Gear::Forward);
        bad.accel = 1.5;
        assert!(step_plant(&s0, &bad, 0.1, &p).is_err());
    }

    fn arc_error(dt: f64) -> f64 {
        let p = PlantParams::default();
        let v = 0.4;
        let s = 8.0;
        let t_end = 4.0;
        let wheel = steering_command_to_wheel_angle(s, &p).unwrap();
        let mut st = PlantState {
            pose: Pose2::IDENTITY,
            v,
        };
        let u = Control {
            accel: 0.0,
            brake: 0.0,
            steer: s,
            gear: Gear::Forward,
        };
        let n = (t_end / dt).round() as usize;
        for _ in 0..n {
            st = step_plant(&st, &u, dt, &p).unwrap();
        }
        let exact = exact_arc(&Pose2::IDENTITY, v, wheel, p.wheelbase, t_end);
        st.pose.position().distance(&exact.position())
    }

    #[test]
    fn plant_converges_to_arc() {
        let p = PlantParams::default();
        let wheel = steering_command_to_wheel_angle(8.0, &p).unwrap();
        let exact = exact_arc(&Pose2::IDENTITY, 0.4, wheel, p.wheelbase, 4.0);
        let chord = exact.position().distance(&Point2::default());
        let mut prev = arc_error(0.1);
        for dt in [0.05, 0.025, 0.0125] {
            let e = arc_error(dt);
            assert!(e <= 0.5 * prev * 1.05, "dt={dt}: {e} vs {prev}");
            prev = e;
        }
        assert!(prev < 0.01 * chord);
        // positive command turns right
        assert!(exact.psi < 0.0 && exact.py < 0.0);
    }

    #[test]
    fn steering_mapping() {
        let p = PlantParams::default();
        assert_eq!(steering_command_to_wheel_angle(0.0, &p).unwrap(), 0.0);
        assert_eq!(steering_command_to_wheel_angle(10.0, &p).unwrap(), 0.6);
        assert_eq!(steering_command_to_wheel_angle(-10.0, &p).unwrap(), -0.6);
        assert_eq!(steering_command_to_wheel_angle(4.0, &p).unwrap(), 0.25);
        assert!(steering_command_to_wheel_angle(10.5, &p).is_err());
    }

    #[test]
    fn brake_stops_and_speed_is_bounded() {
        let p = PlantParams::default();
        let mut st = PlantState::default();
        let mut full = Control::idle(Gear::Forward);
        full.accel = 1.0;
        for _ in 0..200 {
            st = step_plant(&st, &full, p.dt, &p).unwrap();
            assert!(st.speed() <= p.v_max);
        }
        assert_eq!(st.v, p.v_max);
        let mut brake = Control::idle(Gear::Forward);
        brake.brake = 1.0;
        let mut steps = 0;
        while st.v != 0.0 {
            st = step_plant(&st, &brake, p.dt, &p).unwrap();
            steps += 1;
            assert!(steps < 1000);
        }
        for _ in 0..10 {
            st = step_plant(&st, &brake, p.dt, &p).unwrap();
            assert_eq!(st.v, 0.0);
        }
    }

    #[test]
    fn reverse_gear_moves_backwards() {
        let p = PlantParams::default();
        let st = PlantState {
            pose: Pose2::new(0.0, 0.0, PI / 2.0),
            v: -0.4,
        };
        let st = step_plant(&st, &Control::idle(Gear::Reverse), 0.5, &p).unwrap();
        assert_abs_diff_eq!(st.pose.py, -0.2, epsilon = 1e-12);
        assert_eq!(st.v, -0.4);
    }

    #[test]
    fn world_validation_and_file_round_trip() {
        let bow = Polygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ]);
        assert!(matches!(ObstacleWorld::new(bounds(), vec![bow]), Err(SimError::NotSimple(0))));
        let far = Polygon::rectangle(Pose2::new(30.0, 0.0, 0.0), 1.0, 1.0);
        assert!(matches!(ObstacleWorld::new(bounds(), vec![far]), Err(SimError::OutOfBounds(0))));

        let text = r#"
            version = 1
            [bounds]
            min = [-5.0, -5.0]
            max = [5.0, 5.0]
            [[obstacles]]
            rect = { center = [2.0, 0.0], size = [1.0, 0.5], heading = 0.3 }
            [[obstacles]]
            vertices = [[-3.0, -3.0], [-2.0, -3.0], [-2.5, -2.0]]
        "#;
        let w = ObstacleWorld::from_toml(text).unwrap();
        assert_eq!(w.obstacles().len(), 2);
        let back = ObstacleWorld::from_toml(&w.to_toml()).unwrap();
        assert_eq!(back.obstacles(), w.obstacles());
        assert_eq!(back.bounds(), w.bounds());
    }
}
