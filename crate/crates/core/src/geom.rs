//! Planar rigid-body math: poses, points and angle wrapping.
//!
//! Angles are wrapped to the half-open interval `[-π, π)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),
}

/// A point in the plane, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Rigid transform / vehicle pose `(px, py, psi)`. `psi` is kept wrapped.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub px: f64,
    pub py: f64,
    pub psi: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        px: 0.0,
        py: 0.0,
        psi: 0.0,
    };

    pub fn new(px: f64, py: f64, psi: f64) -> Self {
        Self {
            px,
            py,
            psi: normalize_angle(psi),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.px, self.py)
    }

    pub fn apply(&self, pt: Point2) -> Point2 {
        se2_apply(self, pt)
    }

    pub fn compose(&self, other: &Pose2) -> Pose2 {
        se2_compose(self, other)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.psi.sin_cos();
        Pose2::new(
            -(c * self.px + s * self.py),
            s * self.px - c * self.py,
            -self.psi,
        )
    }

    /// Maps a world point into this pose's local frame.
    pub fn inverse_apply(&self, pt: Point2) -> Point2 {
        let (s, c) = self.psi.sin_cos();
        let dx = pt.x - self.px;
        let dy = pt.y - self.py;
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }
}

/// `R(psi) * pt + (px, py)` with the standard counter-clockwise rotation.
pub fn se2_apply(pose: &Pose2, pt: Point2) -> Point2 {
    let (s, c) = pose.psi.sin_cos();
    Point2::new(c * pt.x - s * pt.y + pose.px, s * pt.x + c * pt.y + pose.py)
}

/// `a ∘ b`: first `b`, then `a`.
pub fn se2_compose(a: &Pose2, b: &Pose2) -> Pose2 {
    let t = se2_apply(a, Point2::new(b.px, b.py));
    Pose2::new(t.x, t.y, a.psi + b.psi)
}

/// Wraps an angle to `[-π, π)`, rejecting NaN and infinities.
pub fn wrap_angle(theta: f64) -> Result<f64, GeomError> {
    if !theta.is_finite() {
        return Err(GeomError::NonFiniteAngle(theta));
    }
    Ok(normalize_angle(theta))
}

/// Infallible variant of [`wrap_angle`]; non-finite input is returned as is.
///
/// Values already inside `[-π, π)` are returned untouched, which keeps the
/// function idempotent bit for bit.
pub fn normalize_angle(theta: f64) -> f64 {
    if !theta.is_finite() || (-PI..PI).contains(&theta) {
        return theta;
    }
    let mut r = (theta + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r -= TAU;
    }
    if r < -PI {
        r = -PI;
    }
    r
}
