//! Gauss–Newton scan-to-map alignment.
//!
//! Finds the pose `ξ = (px, py, ψ)` that minimizes `Σ [1 − M(Sᵢ(ξ))]²`, where
//! `Sᵢ(ξ)` is scan endpoint `i` moved into the world by `ξ` and `M` is the
//! interpolated map value.

use crate::geom::{Point2, Pose2};
use crate::grid::{MapField, OccupancyGrid};
use crate::world::LidarScan;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Beams needed before a step is attempted.
pub const MIN_BEAMS: usize = 3;
const RIDGE: f64 = 1e-9;
const MAX_HALVINGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("scan is empty")]
    EmptyScan,
    #[error("only {0} beams hit mapped space")]
    TooFewBeams(usize),
    #[error("normal matrix is singular")]
    Singular,
}

/// `∂Sᵢ/∂ξ`, rows `(x, y)`, columns `(px, py, ψ)`.
pub type Jacobian2x3 = [[f64; 3]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    pub max_iters: usize,
    pub tol: f64,
    pub backtrack: bool,
    /// Resolution levels; 1 matches on the given grid only.
    pub levels: usize,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-4,
            backtrack: true,
            levels: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pose: Pose2,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn jacobian_row(psi: f64, s: Point2) -> Jacobian2x3 {
    let (sn, cs) = psi.sin_cos();
    [
        [1.0, 0.0, -sn * s.x - cs * s.y],
        [0.0, 1.0, cs * s.x - sn * s.y],
    ]
}

/// `Σ [1 − M(Sᵢ(ξ))]²` over all endpoints; endpoints off the map count as 0.5.
pub fn residual<F: MapField + ?Sized>(field: &F, points: &[Point2], xi: &Pose2) -> f64 {
    points
        .iter()
        .map(|&s| {
            let r = 1.0 - field.sample(xi.apply(s)).value;
            r * r
        })
        .sum()
}

/// Normal equations `(H, g)` of one linearization and the number of beams used.
pub fn normal_equations<F: MapField + ?Sized>(
    field: &F,
    points: &[Point2],
    xi: &Pose2,
) -> (Matrix3<f64>, Vector3<f64>, usize) {
    let mut h = Matrix3::zeros();
    let mut g = Vector3::zeros();
    let mut used = 0;
    for &s in points {
        let sample = field.sample(xi.apply(s));
        if !sample.in_map || sample.unknown {
            continue;
        }
        let j = jacobian_row(xi.psi, s);
        let [gx, gy] = sample.gradient;
        let row = Vector3::new(
            gx * j[0][0] + gy * j[1][0],
            gx * j[0][1] + gy * j[1][1],
            gx * j[0][2] + gy * j[1][2],
        );
        h += row * row.transpose();
        g += row * (1.0 - sample.value);
        used += 1;
    }
    (h, g, used)
}

/// One Gauss–Newton update `Δξ = H⁻¹ Σ (∇M·J)ᵀ (1 − M)`.
pub fn gauss_newton_step<F: MapField + ?Sized>(
    field: &F,
    scan: &LidarScan,
    xi: &Pose2,
) -> Result<[f64; 3], MatchError> {
    let points: Vec<Point2> = scan.endpoints().collect();
    if points.is_empty() {
        return Err(MatchError::EmptyScan);
    }
    step_from_points(field, &points, xi)
}

fn step_from_points<F: MapField + ?Sized>(
    field: &F,
    points: &[Point2],
    xi: &Pose2,
) -> Result<[f64; 3], MatchError> {
    let (h, g, used) = normal_equations(field, points, xi);
    if used < MIN_BEAMS {
        return Err(MatchError::TooFewBeams(used));
    }
    solve_regularized(h, g)
}

fn solve_regularized(mut h: Matrix3<f64>, g: Vector3<f64>) -> Result<[f64; 3], MatchError> {
    let trace = h.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(MatchError::Singular);
    }
    let lambda = RIDGE * trace / 3.0;
    for k in 0..3 {
        h[(k, k)] += lambda;
    }
    let chol = h.cholesky().ok_or(MatchError::Singular)?;
    let d = chol.solve(&g);
    if !d.iter().all(|v| v.is_finite()) {
        return Err(MatchError::Singular);
    }
    Ok([d[0], d[1], d[2]])
}

fn add(xi: &Pose2, d: &[f64; 3], scale: f64) -> Pose2 {
    Pose2::new(xi.px + scale * d[0], xi.py + scale * d[1], xi.psi + scale * d[2])
}

fn norm(d: &[f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Aligns `scan` to `grid` starting from `xi0`.
///
/// Gauss–Newton runs coarse to fine over `params.levels` successive halvings
/// of the grid, each level starting where the previous one stopped. A start
/// that is already a stationary point of the full-resolution map is returned
/// after a single step. `iterations` counts steps over all levels.
pub fn match_scan(grid: &OccupancyGrid, scan: &LidarScan, xi0: &Pose2, params: &MatchParams) -> MatchResult {
    let points: Vec<Point2> = scan.endpoints().collect();
    if params.levels <= 1 {
        return match_points(grid, &points, xi0, params);
    }
    let probe = match_points(grid, &points, xi0, &MatchParams { max_iters: 1, ..*params });
    if probe.converged || probe.iterations == 0 || params.max_iters <= 1 {
        return probe;
    }
    let mut pyramid = vec![grid.downsample()];
    for _ in 2..params.levels {
        let next = pyramid.last().unwrap().downsample();
        pyramid.push(next);
    }
    let mut xi = *xi0;
    let mut total = probe.iterations;
    for (k, level) in pyramid.iter().enumerate().rev() {
        let budget = (params.max_iters - total) / (k + 2);
        let res = match_points(level, &points, &xi, &MatchParams { max_iters: budget, ..*params });
        total += res.iterations;
        xi = res.pose;
    }
    let mut res = match_points(grid, &points, &xi, &MatchParams { max_iters: params.max_iters - total, ..*params });
    res.iterations += total;
    res
}

/// `match_scan` that fails when the scan cannot constrain the pose at `xi0`
/// (no returns, or fewer than `MIN_BEAMS` endpoints on mapped cells).
pub fn try_match_scan(
    grid: &OccupancyGrid,
    scan: &LidarScan,
    xi0: &Pose2,
    params: &MatchParams,
) -> Result<MatchResult, MatchError> {
    gauss_newton_step(grid, scan, xi0)?;
    Ok(match_scan(grid, scan, xi0, params))
}

/// Single-resolution Gauss–Newton on endpoints in the sensor frame, returning
/// the lowest-residual iterate.
pub fn match_points<F: MapField + ?Sized>(
    field: &F,
    points: &[Point2],
    xi0: &Pose2,
    params: &MatchParams,
) -> MatchResult {
    let mut xi = *xi0;
    let mut r = residual(field, points, &xi);
    let mut best = MatchResult {
        pose: xi,
        iterations: 0,
        residual: r,
        converged: false,
    };
    for it in 1..=params.max_iters {
        best.iterations = it;
        let d = match step_from_points(field, points, &xi) {
            Ok(d) => d,
            Err(_) => break,
        };
        let mut next = add(&xi, &d, 1.0);
        let mut r_next = residual(field, points, &next);
        let mut scale = 1.0;
        if params.backtrack {
            let mut halvings = 0;
            while r_next > r && halvings < MAX_HALVINGS {
                scale *= 0.5;
                next = add(&xi, &d, scale);
                r_next = residual(field, points, &next);
                halvings += 1;
            }
            if r_next > r {
                // no descent along this direction; the current iterate is a local minimum
                best.converged = norm(&d) * scale < params.tol;
                break;
            }
        }
        xi = next;
        r = r_next;
        if r <= best.residual {
            best.pose = xi;
            best.residual = r;
        }
        if norm(&d) * scale < params.tol {
            best.converged = true;
            break;
        }
    }
    best
}
