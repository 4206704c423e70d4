//! Kinodynamic RRT over motion primitives.
//!
//! Each iteration samples a configuration, points the nearest-neighbour query
//! at either the sample or (with probability `goal_bias`) the goal, extends
//! the nearest node by a randomly chosen and randomly truncated primitive,
//! and keeps the new node if its edge is collision free.

use crate::collision::CollisionChecker;
use crate::geom::{normalize_angle, Point2, Pose2};
use crate::polygon::Aabb;
use crate::primitives::{place_in_frame, truncate, PrimitiveId, PrimitiveSet};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("tree is empty")]
    EmptyTree,
    #[error("node {0} does not exist")]
    BadNode(usize),
    #[error("planner parameters: {0}")]
    BadParams(String),
    #[error("primitive set is empty")]
    NoPrimitives,
    #[error("plan file: {0}")]
    Io(#[from] std::io::Error),
    #[error("plan file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Vehicle configuration `{x, y, θ, v}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
            v: 0.0,
        }
    }

    pub fn from_pose(p: &Pose2) -> Self {
        Self::new(p.px, p.py, p.psi)
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.theta)
    }
}

/// Geodesic distance on the circle, in `[0, π]`.
pub fn so2_distance(theta1: f64, theta2: f64) -> f64 {
    let d = (theta1 - theta2).abs() % TAU;
    d.min(TAU - d)
}

pub const POSITION_WEIGHT: f64 = 0.2;
pub const HEADING_WEIGHT: f64 = 0.8;

/// `0.2·‖Δxy‖ + 0.8·d_SO2(Δθ)`; speed is ignored.
pub fn distance(z1: &Configuration, z2: &Configuration) -> f64 {
    POSITION_WEIGHT * (z1.x - z2.x).hypot(z1.y - z2.y) + HEADING_WEIGHT * so2_distance(z1.theta, z2.theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerParams {
    pub goal_bias: f64,
    pub threshold: f64,
    pub max_iters: usize,
    pub bounds: Aabb,
    pub seed: u64,
    /// Smallest truncation fraction drawn by extend.
    pub min_fraction: f64,
}

impl PlannerParams {
    pub fn new(bounds: Aabb, seed: u64) -> Self {
        Self {
            goal_bias: 0.2,
            threshold: 0.2,
            max_iters: 5000,
            bounds,
            seed,
            min_fraction: 0.1,
        }
    }

    fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::BadParams(m.to_string()));
        if !(0.0..=1.0).contains(&self.goal_bias) {
            return bad("goal bias must lie in [0, 1]");
        }
        if !(self.threshold > 0.0) {
            return bad("threshold must be positive");
        }
        if self.max_iters == 0 {
            return bad("at least one iteration is required");
        }
        if !(self.bounds.min.x <= self.bounds.max.x && self.bounds.min.y <= self.bounds.max.y) {
            return bad("sampling bounds are empty");
        }
        if !(self.min_fraction > 0.0 && self.min_fraction <= 1.0) {
            return bad("minimum truncation must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub primitive: PrimitiveId,
    pub fraction: f64,
    pub waypoints: Vec<Pose2>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub config: Configuration,
    pub parent: Option<usize>,
    pub edge: Option<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn with_root(root: Configuration) -> Self {
        Self {
            nodes: vec![TreeNode {
                config: root,
                parent: None,
                edge: None,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn push(&mut self, parent: usize, config: Configuration, edge: EdgeRecord) -> usize {
        self.nodes.push(TreeNode {
            config,
            parent: Some(parent),
            edge: Some(edge),
        });
        self.nodes.len() - 1
    }

    /// Rows `id, parent, x, y, theta, primitive, fraction`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["id", "parent", "x", "y", "theta", "primitive", "fraction"])?;
        for (id, n) in self.nodes.iter().enumerate() {
            let (prim, frac) = match &n.edge {
                Some(e) => (e.primitive.name().to_string(), e.fraction.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                id.to_string(),
                n.parent.map(|p| p.to_string()).unwrap_or_default(),
                n.config.x.to_string(),
                n.config.y.to_string(),
                n.config.theta.to_string(),
                prim,
                frac,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform position over `bounds`, uniform heading over `[-π, π)`, zero speed.
pub fn sample<R: Rng + ?Sized>(bounds: &Aabb, rng: &mut R) -> Configuration {
    let x = uniform(rng, bounds.min.x, bounds.max.x);
    let y = uniform(rng, bounds.min.y, bounds.max.y);
    let theta = rng.gen_range(-PI..PI);
    Configuration { x, y, theta, v: 0.0 }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    // a draw is consumed even for a degenerate range so sequences stay aligned
    let u: f64 = rng.gen();
    if hi > lo {
        lo + u * (hi - lo)
    } else {
        lo
    }
}

/// Brute-force nearest node; the lowest id wins ties.
pub fn nearest_neighbour(tree: &Tree, z: &Configuration) -> Result<usize, PlanError> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (id, node) in tree.nodes.iter().enumerate() {
        let d = distance(&node.config, z);
        if d < best_d {
            best_d = d;
            best = Some(id);
        }
    }
    best.ok_or(PlanError::EmptyTree)
}

/// Random primitive, random truncation, placed at node `near_id`. Returns
/// `None` when the edge collides.
pub fn extend<R: Rng + ?Sized>(
    tree: &Tree,
    near_id: usize,
    primitives: &PrimitiveSet,
    rng: &mut R,
    checker: &CollisionChecker,
    min_fraction: f64,
) -> Result<Option<(Configuration, EdgeRecord)>, PlanError> {
    let near = tree.nodes.get(near_id).ok_or(PlanError::BadNode(near_id))?;
    if primitives.is_empty() {
        return Err(PlanError::NoPrimitives);
    }
    let prim = &primitives.primitives[rng.gen_range(0..primitives.len())];
    let fraction = rng.gen_range(min_fraction..=1.0);
    let piece = truncate(prim, fraction).expect("fraction drawn inside (0, 1]");
    let waypoints = place_in_frame(&piece, &near.config.pose());
    if checker.edge_in_collision(&waypoints) {
        return Ok(None);
    }
    let end = waypoints.last().expect("truncation keeps two samples");
    Ok(Some((
        Configuration::from_pose(end),
        EdgeRecord {
            primitive: prim.id,
            fraction,
            waypoints,
        },
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Extended { node: usize, toward_goal: bool },
    Rejected { toward_goal: bool },
    GoalReached { node: usize, toward_goal: bool },
}

impl StepOutcome {
    pub fn toward_goal(&self) -> bool {
        match *self {
            StepOutcome::Extended { toward_goal, .. }
            | StepOutcome::Rejected { toward_goal }
            | StepOutcome::GoalReached { toward_goal, .. } => toward_goal,
        }
    }
}

/// Incremental planner state.
pub struct Planner<'a> {
    goal: Configuration,
    primitives: &'a PrimitiveSet,
    checker: &'a CollisionChecker,
    params: PlannerParams,
    rng: ChaCha8Rng,
    tree: Tree,
    iterations: usize,
    goal_targeted: usize,
    reached: Option<usize>,
}

impl<'a> Planner<'a> {
    pub fn new(
        start: Configuration,
        goal: Configuration,
        primitives: &'a PrimitiveSet,
        checker: &'a CollisionChecker,
        params: PlannerParams,
    ) -> Result<Self, PlanError> {
        params.validate()?;
        if primitives.is_empty() {
            return Err(PlanError::NoPrimitives);
        }
        if checker.config_in_collision(&start.pose()) {
            return Err(PlanError::StartInCollision);
        }
        let reached = (distance(&start, &goal) <= params.threshold).then_some(0);
        Ok(Self {
            goal,
            primitives,
            checker,
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            tree: Tree::with_root(start),
            iterations: 0,
            goal_targeted: 0,
            reached,
        })
    }

    /// One iteration of the main loop.
    pub fn step(&mut self) -> Result<StepOutcome, PlanError> {
        self.iterations += 1;
        let z_rand = sample(&self.params.bounds, &mut self.rng);
        let u: f64 = self.rng.gen();
        let toward_goal = self.params.goal_bias > u;
        if toward_goal {
            self.goal_targeted += 1;
        }
        let target = if toward_goal { self.goal } else { z_rand };
        let near = nearest_neighbour(&self.tree, &target)?;
        match extend(&self.tree, near, self.primitives, &mut self.rng, self.checker, self.params.min_fraction)? {
            None => Ok(StepOutcome::Rejected { toward_goal }),
            Some((z_new, edge)) => {
                let node = self.tree.push(near, z_new, edge);
                if distance(&z_new, &self.goal) <= self.params.threshold {
                    self.reached = Some(node);
                    Ok(StepOutcome::GoalReached { node, toward_goal })
                } else {
                    Ok(StepOutcome::Extended { node, toward_goal })
                }
            }
        }
    }

    /// Runs until the goal is reached or the iteration budget is spent.
    pub fn run(mut self) -> Result<PlanOutcome, PlanError> {
        while self.reached.is_none() && self.iterations < self.params.max_iters {
            self.step()?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<PlanOutcome, PlanError> {
        let plan = match self.reached {
            Some(leaf) => Some(tree_search(&self.tree, leaf)?),
            None => None,
        };
        let closest = nearest_neighbour(&self.tree, &self.goal)?;
        let stats = PlanStats {
            iterations: self.iterations,
            tree_size: self.tree.len(),
            goal_targeted: self.goal_targeted,
            final_distance: distance(&self.tree.nodes[self.reached.unwrap_or(closest)].config, &self.goal),
        };
        Ok(PlanOutcome {
            plan,
            stats,
            tree: self.tree,
        })
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn goal_targeted(&self) -> usize {
        self.goal_targeted
    }

    pub fn reached(&self) -> Option<usize> {
        self.reached
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub iterations: usize,
    pub tree_size: usize,
    pub goal_targeted: usize,
    /// Metric distance from the goal of the reached node, or of the closest node on failure.
    pub final_distance: f64,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub plan: Option<Plan>,
    pub stats: PlanStats,
    pub tree: Tree,
}

/// Plans from `start` to within `params.threshold` of `goal`.
pub fn plan(
    start: Configuration,
    goal: Configuration,
    primitives: &PrimitiveSet,
    checker: &CollisionChecker,
    params: PlannerParams,
) -> Result<PlanOutcome, PlanError> {
    Planner::new(start, goal, primitives, checker, params)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSegment {
    pub primitive: PrimitiveId,
    pub fraction: f64,
    pub waypoints: Vec<Pose2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub start: Configuration,
    pub segments: Vec<PlanSegment>,
}

impl Plan {
    pub fn waypoint_count(&self) -> usize {
        self.segments.iter().map(|s| s.waypoints.len()).sum()
    }

    pub fn end(&self) -> Configuration {
        self.segments
            .last()
            .and_then(|s| s.waypoints.last())
            .map(Configuration::from_pose)
            .unwrap_or(self.start)
    }

    pub fn primitive_sequence(&self) -> Vec<PrimitiveId> {
        self.segments.iter().map(|s| s.primitive).collect()
    }
}

/// Walks parent links from `leaf` to the root and returns the edges in
/// start-to-leaf order.
pub fn tree_search(tree: &Tree, leaf: usize) -> Result<Plan, PlanError> {
    if leaf >= tree.len() {
        return Err(PlanError::BadNode(leaf));
    }
    let mut segments = Vec::new();
    let mut cur = leaf;
    while let Some(parent) = tree.nodes[cur].parent {
        let edge = tree.nodes[cur].edge.as_ref().expect("non-root nodes carry an edge");
        segments.push(PlanSegment {
            primitive: edge.primitive,
            fraction: edge.fraction,
            waypoints: edge.waypoints.clone(),
        });
        cur = parent;
    }
    segments.reverse();
    Ok(Plan {
        start: tree.nodes[cur].config,
        segments,
    })
}

pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub version: u32,
    pub goal: Configuration,
    pub stats: PlanStats,
    pub start: Configuration,
    pub segments: Vec<PlanSegmentTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSegmentTable {
    pub primitive: PrimitiveId,
    pub fraction: f64,
    /// Rows `[x, y, psi]`.
    pub waypoints: Vec<[f64; 3]>,
}

impl PlanDocument {
    pub fn new(plan: &Plan, goal: Configuration, stats: PlanStats) -> Self {
        Self {
            version: PLAN_FORMAT_VERSION,
            goal,
            stats,
            start: plan.start,
            segments: plan
                .segments
                .iter()
                .map(|s| PlanSegmentTable {
                    primitive: s.primitive,
                    fraction: s.fraction,
                    waypoints: s.waypoints.iter().map(|p| [p.px, p.py, p.psi]).collect(),
                })
                .collect(),
        }
    }

    pub fn plan(&self) -> Plan {
        Plan {
            start: self.start,
            segments: self
                .segments
                .iter()
                .map(|s| PlanSegment {
                    primitive: s.primitive,
                    fraction: s.fraction,
                    waypoints: s.waypoints.iter().map(|w| Pose2 { px: w[0], py: w[1], psi: w[2] }).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, PlanError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), PlanError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PlanError> {
        let doc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if doc.version != PLAN_FORMAT_VERSION {
            return Err(PlanError::BadParams(format!("unsupported plan version {}", doc.version)));
        }
        Ok(doc)
    }
}

/// Axis-aligned sampling region spanning two corners.
pub fn bounds(min: (f64, f64), max: (f64, f64)) -> Aabb {
    Aabb::new(Point2::new(min.0, min.1), Point2::new(max.0, max.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::VehicleFootprint;
    use crate::polygon::Polygon;
    use crate::primitives::{generate_standard_set, PrimitiveConfig};
    use crate::world::{ObstacleWorld, PlantParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn prims() -> PrimitiveSet {
        generate_standard_set(&PlantParams::default(), &PrimitiveConfig::default()).unwrap()
    }

    fn open_checker() -> CollisionChecker {
        CollisionChecker::virtual_world(ObstacleWorld::empty(bounds((-50.0, -50.0), (50.0, 50.0))), VehicleFootprint::default())
    }

    #[test]
    fn so2_examples() {
        assert_eq!(so2_distance(1.3, 1.3), 0.0);
        assert_abs_diff_eq!(so2_distance(PI - 0.1, -PI + 0.1), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(so2_distance(0.0, FRAC_PI_2), FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn distance_examples() {
        let z = Configuration::new(-11.0, 2.0, PI / 4.0);
        assert_eq!(distance(&z, &z), 0.0);
        // hand evaluation: 0.2·√0.32 + 0.8·(π/4 − 0.64)
        let d = distance(&z, &Configuration::new(-10.6, 1.6, 0.64));
        assert_abs_diff_eq!(d, 0.22945561570780626, epsilon = 1e-12);
        assert!((d - 0.2295).abs() <= 0.0005);
        assert_abs_diff_eq!(distance(&Configuration::new(0.0, 0.0, 0.0), &Configuration::new(1.0, 0.0, 0.0)), 0.2);
        let moving = Configuration { v: 1.0, ..z };
        assert_eq!(distance(&z, &moving), 0.0);
    }

    #[test]
    fn sample_examples() {
        let point = bounds((2.0, -3.0), (2.0, -3.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let z = sample(&point, &mut rng);
            assert_eq!((z.x, z.y, z.v), (2.0, -3.0, 0.0));
            assert!((-PI..PI).contains(&z.theta));
        }
        let unit = bounds((0.0, 0.0), (1.0, 1.0));
        let a: Vec<_> = (0..5).map({
            let mut r = ChaCha8Rng::seed_from_u64(9);
            move |_| sample(&unit, &mut r)
        }).collect();
        let b: Vec<_> = (0..5).map({
            let mut r = ChaCha8Rng::seed_from_u64(9);
            move |_| sample(&unit, &mut r)
        }).collect();
        assert_eq!(a, b);

        let n = 10_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let z = sample(&unit, &mut rng);
            sx += z.x;
            sy += z.y;
        }
        // uniform on [0, 1]: σ of the mean is √(1/12 / n)
        let three_sigma = 3.0 * (1.0 / 12.0 / n as f64).sqrt();
        assert!((sx / n as f64 - 0.5).abs() < three_sigma);
        assert!((sy / n as f64 - 0.5).abs() < three_sigma);
    }

    fn tree_of(configs: &[Configuration]) -> Tree {
        let mut t = Tree::with_root(configs[0]);
        for (k, c) in configs.iter().enumerate().skip(1) {
            t.push(k - 1, *c, EdgeRecord { primitive: PrimitiveId::ForwardStraight, fraction: 1.0, waypoints: vec![] });
        }
        t
    }

    #[test]
    fn nearest_neighbour_examples() {
        assert!(matches!(nearest_neighbour(&Tree::default(), &Configuration::default()), Err(PlanError::EmptyTree)));
        let t = tree_of(&[Configuration::new(5.0, 5.0, 1.0)]);
        assert_eq!(nearest_neighbour(&t, &Configuration::default()).unwrap(), 0);
        let t = tree_of(&[Configuration::new(9.0, 9.0, 0.0), Configuration::new(1.0, 0.0, 0.0), Configuration::new(-1.0, 0.0, 0.0)]);
        assert_eq!(nearest_neighbour(&t, &Configuration::default()).unwrap(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let area = bounds((-10.0, -10.0), (10.0, 10.0));
        let nodes: Vec<Configuration> = (0..100).map(|_| sample(&area, &mut rng)).collect();
        let t = tree_of(&nodes);
        for _ in 0..200 {
            let q = sample(&area, &mut rng);
            // independent oracle: sort by (distance, id)
            let mut scored: Vec<(f64, usize)> = nodes
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let dth = (n.theta - q.theta).rem_euclid(TAU);
                    (0.2 * ((n.x - q.x).powi(2) + (n.y - q.y).powi(2)).sqrt() + 0.8 * dth.min(TAU - dth), i)
                })
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            assert_eq!(nearest_neighbour(&t, &q).unwrap(), scored[0].1);
        }
    }

    #[test]
    fn extend_examples() {
        let set = prims();
        let checker = open_checker();
        let tree = Tree::with_root(Configuration::default());
        // force forward_straight at fraction 1 through the public pieces
        let fs = set.get(PrimitiveId::ForwardStraight).unwrap();
        let wps = place_in_frame(&truncate(fs, 1.0).unwrap(), &Pose2::IDENTITY);
        let end = wps.last().unwrap();
        assert_abs_diff_eq!(end.px, 3.0, epsilon = 0.05);
        assert_eq!((end.py, end.psi), (0.0, 0.0));

        let mut a = ChaCha8Rng::seed_from_u64(77);
        let mut b = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let ea = extend(&tree, 0, &set, &mut a, &checker, 0.1).unwrap().unwrap();
            let eb = extend(&tree, 0, &set, &mut b, &checker, 0.1).unwrap().unwrap();
            assert_eq!(ea, eb);
            assert!(ea.1.fraction >= 0.1 && ea.1.fraction <= 1.0);
            assert_eq!(ea.1.waypoints[0], Pose2::IDENTITY);
            assert_eq!(ea.0.pose(), *ea.1.waypoints.last().unwrap());
            assert_eq!(ea.0.v, 0.0);
        }

        let boxed = CollisionChecker::virtual_world(
            ObstacleWorld::new(bounds((-20.0, -20.0), (20.0, 20.0)), pen(Point2::new(-1.2 + 1.285, 0.0), 1.75, 0.75, 0.3)).unwrap(),
            VehicleFootprint::default(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start = Tree::with_root(Configuration::new(-1.2, 0.0, 0.0));
        assert!(!boxed.config_in_collision(&start.nodes[0].config.pose()));
        for _ in 0..50 {
            assert!(extend(&start, 0, &set, &mut rng, &boxed, 0.1).unwrap().is_none());
        }
    }

    /// Closed square wall of inner half-size `r` around `c`.
    fn ring(c: Point2, r: f64, t: f64) -> Vec<Polygon> {
        pen(c, r, r, t)
    }

    /// Closed rectangular wall of inner half-sizes `hx`, `hy` around `c`.
    fn pen(c: Point2, hx: f64, hy: f64, t: f64) -> Vec<Polygon> {
        vec![
            Polygon::rectangle(Pose2::new(c.x, c.y + hy + 0.5 * t, 0.0), 2.0 * (hx + t), t),
            Polygon::rectangle(Pose2::new(c.x, c.y - hy - 0.5 * t, 0.0), 2.0 * (hx + t), t),
            Polygon::rectangle(Pose2::new(c.x + hx + 0.5 * t, c.y, 0.0), t, 2.0 * hy),
            Polygon::rectangle(Pose2::new(c.x - hx - 0.5 * t, c.y, 0.0), t, 2.0 * hy),
        ]
    }

    #[test]
    fn goal_at_start_gives_empty_plan() {
        let set = prims();
        let checker = open_checker();
        let params = PlannerParams::new(bounds((-10.0, -10.0), (10.0, 10.0)), 1);
        let out = plan(Configuration::default(), Configuration::new(0.1, 0.0, 0.0), &set, &checker, params).unwrap();
        let p = out.plan.unwrap();
        assert!(p.segments.is_empty());
        assert_eq!(out.stats.iterations, 0);
    }

    const FOUND_WITHIN_FIFTY: usize = 59;

    #[test]
    fn straight_goal_within_fifty_iterations() {
        let set = prims();
        let checker = open_checker();
        let goal = Configuration::new(3.0, 0.0, 0.0);
        let mut found = 0;
        for seed in 0..100 {
            let params = PlannerParams { max_iters: 50, ..PlannerParams::new(bounds((-10.0, -10.0), (10.0, 10.0)), seed) };
            let out = plan(Configuration::default(), goal, &set, &checker, params).unwrap();
            if let Some(p) = out.plan {
                assert!(distance(&p.end(), &goal) <= 0.2);
                found += 1;
            }
        }
        // A root extension hits the goal only with forward_straight at fraction above 2/3,
        // so the 50-iteration success rate sits well below certainty. Frozen from seeded runs.
        assert_eq!(found, FOUND_WITHIN_FIFTY);
    }

    #[test]
    fn sealed_goal_fails_cleanly() {
        let set = prims();
        let world = ObstacleWorld::new(bounds((-30.0, -30.0), (30.0, 30.0)), ring(Point2::new(10.0, 0.0), 2.5, 0.3)).unwrap();
        let checker = CollisionChecker::virtual_world(world, VehicleFootprint::default());
        let params = PlannerParams { max_iters: 300, ..PlannerParams::new(bounds((-20.0, -20.0), (20.0, 20.0)), 3) };
        let out = plan(Configuration::default(), Configuration::new(10.0, 0.0, 0.0), &set, &checker, params).unwrap();
        assert!(out.plan.is_none());
        assert_eq!(out.stats.iterations, 300);
        assert!(out.tree.len() <= 300);
    }

    #[test]
    fn start_in_collision_is_an_error() {
        let set = prims();
        let world = ObstacleWorld::new(bounds((-30.0, -30.0), (30.0, 30.0)), vec![Polygon::rectangle(Pose2::IDENTITY, 2.0, 2.0)]).unwrap();
        let checker = CollisionChecker::virtual_world(world, VehicleFootprint::default());
        let params = PlannerParams::new(bounds((-10.0, -10.0), (10.0, 10.0)), 0);
        assert!(matches!(
            plan(Configuration::default(), Configuration::new(5.0, 5.0, 0.0), &set, &checker, params),
            Err(PlanError::StartInCollision)
        ));
    }

    #[test]
    fn tree_search_orders_segments() {
        let root = Configuration::default();
        let mut t = Tree::with_root(root);
        let mk = |p: PrimitiveId| EdgeRecord { primitive: p, fraction: 0.5, waypoints: vec![] };
        let a = t.push(0, Configuration::new(1.0, 0.0, 0.0), mk(PrimitiveId::ForwardLeft));
        let b = t.push(a, Configuration::new(2.0, 0.0, 0.0), mk(PrimitiveId::ReverseRight));
        assert!(tree_search(&t, 0).unwrap().segments.is_empty());
        let p = tree_search(&t, b).unwrap();
        assert_eq!(p.primitive_sequence(), vec![PrimitiveId::ForwardLeft, PrimitiveId::ReverseRight]);
        assert!(matches!(tree_search(&t, 9), Err(PlanError::BadNode(9))));
    }

    fn obstacle_course() -> CollisionChecker {
        let world = ObstacleWorld::new(
            bounds((-20.0, -20.0), (20.0, 20.0)),
            vec![
                Polygon::rectangle(Pose2::new(5.0, 0.0, 0.3), 1.0, 4.0),
                Polygon::rectangle(Pose2::new(2.0, 6.0, 0.0), 6.0, 0.5),
            ],
        )
        .unwrap();
        CollisionChecker::virtual_world(world, VehicleFootprint::default())
    }

    #[test]
    fn plans_chain_and_are_collision_free_and_deterministic() {
        let set = prims();
        let checker = obstacle_course();
        let goal = Configuration::new(9.0, 3.0, FRAC_PI_2);
        let mut found = 0;
        for seed in 0..5 {
            let params = PlannerParams::new(bounds((-5.0, -8.0), (14.0, 10.0)), seed);
            let a = plan(Configuration::default(), goal, &set, &checker, params).unwrap();
            let b = plan(Configuration::default(), goal, &set, &checker, params).unwrap();
            assert_eq!(a.tree, b.tree);
            assert_eq!(a.plan, b.plan);
            let Some(p) = a.plan else { continue };
            found += 1;
            assert!(distance(&p.end(), &goal) <= 0.2);
            let mut prev = p.start.pose();
            for s in &p.segments {
                assert_eq!(s.waypoints[0], prev);
                assert!(!checker.edge_in_collision(&s.waypoints));
                prev = *s.waypoints.last().unwrap();
            }
            // tree edges start at their parent and end at their node
            for n in &a.tree.nodes[1..] {
                let e = n.edge.as_ref().unwrap();
                let parent = &a.tree.nodes[n.parent.unwrap()];
                assert_eq!(e.waypoints[0], parent.config.pose());
                assert_eq!(*e.waypoints.last().unwrap(), n.config.pose());
            }
        }
        assert!(found >= 4, "{found}");
    }

    #[test]
    fn tree_grows_by_one_per_success() {
        let set = prims();
        let checker = obstacle_course();
        let params = PlannerParams::new(bounds((-5.0, -8.0), (14.0, 10.0)), 42);
        let mut planner = Planner::new(Configuration::default(), Configuration::new(100.0, 0.0, 0.0), &set, &checker, params).unwrap();
        let mut targeted = 0;
        for _ in 0..400 {
            let before = planner.tree().len();
            let out = planner.step().unwrap();
            targeted += out.toward_goal() as usize;
            match out {
                StepOutcome::Rejected { .. } => assert_eq!(planner.tree().len(), before),
                _ => assert_eq!(planner.tree().len(), before + 1),
            }
        }
        assert_eq!(targeted, planner.goal_targeted());
    }

    #[test]
    fn plan_document_round_trips() {
        let set = prims();
        let checker = open_checker();
        let goal = Configuration::new(-2.0, 3.0, 1.0);
        let params = PlannerParams::new(bounds((-10.0, -10.0), (10.0, 10.0)), 8);
        let out = plan(Configuration::default(), goal, &set, &checker, params).unwrap();
        let p = out.plan.unwrap();
        let doc = PlanDocument::new(&p, goal, out.stats);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        doc.save(&path).unwrap();
        let back = PlanDocument::load(&path).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.plan(), p);
        let mut csv = Vec::new();
        out.tree.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), out.tree.len() + 1);
    }

    fn config() -> impl Strategy<Value = Configuration> {
        (-50.0..50.0f64, -50.0..50.0f64, -PI..PI).prop_map(|(x, y, t)| Configuration::new(x, y, t))
    }

    proptest! {
        #[test]
        fn metric_axioms(a in config(), b in config(), c in config()) {
            let ab = distance(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(distance(&a, &a), 0.0);
            prop_assert_eq!(ab, distance(&b, &a));
            prop_assert!(distance(&a, &c) <= ab + distance(&b, &c) + 1e-12);
            let s = so2_distance(a.theta, b.theta);
            prop_assert!((0.0..=PI).contains(&s));
        }
    }
}
