//! Fixtures shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use primnav::geom::{Point2, Pose2};
use primnav::grid::OccupancyGrid;
use primnav::polygon::{Aabb, Polygon};
use primnav::world::{scan_world, LidarScan, ObstacleWorld};
use rand::Rng;
use std::f64::consts::{PI, TAU};

/// A random walled room with a few boxes, plus a sensor pose clear of them.
pub struct SyntheticRoom {
    pub world: ObstacleWorld,
    pub truth: Pose2,
}

pub fn random_room<R: Rng>(rng: &mut R) -> SyntheticRoom {
    let w = rng.gen_range(6.0..12.0);
    let h = rng.gen_range(5.0..10.0);
    let place = Pose2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-PI..PI));
    let rect = |x: f64, y: f64, psi: f64, l: f64, wd: f64| Polygon::rectangle(place.compose(&Pose2::new(x, y, psi)), l, wd);
    let t = 0.2;
    let mut obstacles = vec![
        rect(0.0, 0.5 * (h + t), 0.0, w + 2.0 * t, t),
        rect(0.0, -0.5 * (h + t), 0.0, w + 2.0 * t, t),
        rect(0.5 * (w + t), 0.0, 0.0, t, h),
        rect(-0.5 * (w + t), 0.0, 0.0, t, h),
    ];
    let local_truth = Point2::new(rng.gen_range(-0.25 * w..0.25 * w), rng.gen_range(-0.25 * h..0.25 * h));
    let n_boxes = rng.gen_range(2..=4);
    let mut placed = 0;
    while placed < n_boxes {
        let c = Point2::new(rng.gen_range(-0.4 * w..0.4 * w), rng.gen_range(-0.4 * h..0.4 * h));
        if c.distance(&local_truth) < 1.5 {
            continue;
        }
        obstacles.push(rect(c.x, c.y, rng.gen_range(-PI..PI), rng.gen_range(0.4..1.2), rng.gen_range(0.4..1.2)));
        placed += 1;
    }
    let truth_pt = place.apply(local_truth);
    let truth = Pose2::new(truth_pt.x, truth_pt.y, rng.gen_range(-PI..PI));
    let r = 0.5 * (w * w + h * h).sqrt() + 2.0;
    let bounds = Aabb::new(Point2::new(-r - 1.0, -r - 1.0), Point2::new(r + 1.0, r + 1.0));
    SyntheticRoom {
        world: ObstacleWorld::new(bounds, obstacles).expect("room is valid"),
        truth,
    }
}

impl SyntheticRoom {
    pub fn scan(&self, pose: &Pose2) -> LidarScan {
        scan_world(&self.world, pose, 360, TAU, 30.0).expect("sensor inside bounds")
    }

    /// Grid mapped from the true pose with repeated identical scans.
    pub fn mapped_grid(&self, delta: f64, passes: usize) -> OccupancyGrid {
        let b = self.world.bounds();
        let mut grid = OccupancyGrid::covering(b.min, b.max, delta).unwrap();
        let scan = self.scan(&self.truth);
        for _ in 0..passes {
            grid.integrate_scan(&self.truth, &scan);
        }
        grid
    }
}
