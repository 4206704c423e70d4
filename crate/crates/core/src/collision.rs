//! Vehicle collision checking against polygon worlds or occupancy grids.

use crate::geom::{normalize_angle, Point2, Pose2};
use crate::grid::{CellState, OccupancyGrid};
use crate::polygon::Polygon;
use crate::world::ObstacleWorld;
use serde::{Deserialize, Serialize};

/// Rectangular vehicle outline. `reference_offset` is the signed distance
/// from the rectangle center to the pose reference point along the vehicle
/// x-axis; the rear-axle reference of a car sits behind the center, so the
/// default is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleFootprint {
    pub length: f64,
    pub width: f64,
    pub reference_offset: f64,
}

impl Default for VehicleFootprint {
    fn default() -> Self {
        Self {
            length: 3.4,
            width: 1.4,
            reference_offset: -1.285,
        }
    }
}

impl VehicleFootprint {
    pub fn centered(length: f64, width: f64) -> Self {
        Self {
            length,
            width,
            reference_offset: 0.0,
        }
    }

    /// Pose of the rectangle center for a vehicle at `pose`.
    pub fn center_pose(&self, pose: &Pose2) -> Pose2 {
        let c = pose.apply(Point2::new(-self.reference_offset, 0.0));
        Pose2 { px: c.x, py: c.y, psi: pose.psi }
    }

    pub fn polygon(&self, pose: &Pose2) -> Polygon {
        Polygon::rectangle(self.center_pose(pose), self.length, self.width)
    }

    /// Corners of the rectangle in the vehicle frame, counter-clockwise from front left.
    fn local_corners(&self) -> [Point2; 4] {
        let (hl, hw) = (0.5 * self.length, 0.5 * self.width);
        let cx = -self.reference_offset;
        [
            Point2::new(cx + hl, hw),
            Point2::new(cx - hl, hw),
            Point2::new(cx - hl, -hw),
            Point2::new(cx + hl, -hw),
        ]
    }
}

/// Number of perimeter points queried by the grid checker.
pub const FOOTPRINT_POINTS: usize = 16;

/// The four corners plus the 1/4, 1/2 and 3/4 stations of every edge.
pub fn footprint_points(pose: &Pose2, fp: &VehicleFootprint) -> [Point2; FOOTPRINT_POINTS] {
    let corners = fp.local_corners();
    let mut out = [Point2::default(); FOOTPRINT_POINTS];
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        for m in 0..4 {
            let t = m as f64 / 4.0;
            out[4 * k + m] = pose.apply(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub enum CheckerVariant {
    /// Exact footprint against simulated obstacle polygons.
    Virtual(ObstacleWorld),
    /// Perimeter points against a map. With `strict_unknown` unexplored cells block.
    Mapped { grid: OccupancyGrid, strict_unknown: bool },
}

#[derive(Debug, Clone)]
pub struct CollisionChecker {
    pub variant: CheckerVariant,
    pub footprint: VehicleFootprint,
    /// Edge discretization step, m.
    pub epsilon: f64,
}

pub const DEFAULT_EPSILON: f64 = 0.1;

impl CollisionChecker {
    pub fn virtual_world(world: ObstacleWorld, footprint: VehicleFootprint) -> Self {
        Self {
            variant: CheckerVariant::Virtual(world),
            footprint,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn mapped(grid: OccupancyGrid, footprint: VehicleFootprint, strict_unknown: bool) -> Self {
        Self {
            variant: CheckerVariant::Mapped { grid, strict_unknown },
            footprint,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "edge resolution must be positive");
        self.epsilon = epsilon;
        self
    }

    pub fn config_in_collision(&self, pose: &Pose2) -> bool {
        match &self.variant {
            CheckerVariant::Virtual(world) => {
                let body = self.footprint.polygon(pose);
                world.obstacles().iter().any(|o| body.intersects(o))
            }
            CheckerVariant::Mapped { grid, strict_unknown } => {
                footprint_points(pose, &self.footprint).iter().any(|&p| match grid.state_at(p) {
                    None | Some(CellState::Occupied) => true,
                    Some(CellState::Unexplored) => *strict_unknown,
                    Some(CellState::Free) => false,
                })
            }
        }
    }

    /// Checks poses interpolated every `epsilon` of arc length along the
    /// waypoint polyline, always including the first and last waypoint.
    pub fn edge_in_collision(&self, waypoints: &[Pose2]) -> bool {
        edge_stations(waypoints, self.epsilon).any(|p| self.config_in_collision(&p))
    }
}

/// Poses at arc-length `0, ε, 2ε, …` along the waypoint polyline, then the last waypoint.
pub fn edge_stations(waypoints: &[Pose2], epsilon: f64) -> impl Iterator<Item = Pose2> + '_ {
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    let mut k = 0usize;
    let mut done = waypoints.is_empty();
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let target = k as f64 * epsilon;
        k += 1;
        while seg + 1 < waypoints.len() {
            let a = &waypoints[seg];
            let b = &waypoints[seg + 1];
            let len = a.position().distance(&b.position());
            if target <= seg_start + len {
                let t = if len > 0.0 { (target - seg_start) / len } else { 0.0 };
                return Some(interpolate(a, b, t));
            }
            seg_start += len;
            seg += 1;
        }
        done = true;
        waypoints.last().copied()
    })
}

/// Linear in position, shortest-arc in heading.
pub fn interpolate(a: &Pose2, b: &Pose2, t: f64) -> Pose2 {
    let dpsi = normalize_angle(b.psi - a.psi);
    Pose2::new(
        a.px + t * (b.px - a.px),
        a.py + t * (b.py - a.py),
        a.psi + t * dpsi,
    )
}
