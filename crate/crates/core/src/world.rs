//! Arena geometry and UAV motion.
//!
//! The ally follows a Bezier curve (evaluated with de Casteljau's algorithm
//! and re-parameterized by arc length so it flies at constant speed). The
//! opponent either patrols a closed pattern (triangle, circle, rectangle) or
//! follows waypoints handed to it by the planner. All motion goes through
//! [`step_motion`], which enforces the speed limit and clamps into the arena.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Vec3, u: f64) -> Vec3 {
        self * (1.0 - u) + other * u
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        v.to_array()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Axis-aligned arena `[0, x_max] × [0, y_max] × [0, z_max]` in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldBounds {
    pub x_max: f64,
    pub y_max: f64,
    pub z_max: f64,
}

impl Default for WorldBounds {
    fn default() -> Self {
        Self {
            x_max: 1500.0,
            y_max: 1500.0,
            z_max: 600.0,
        }
    }
}

impl WorldBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("x_max", self.x_max), ("y_max", self.y_max), ("z_max", self.z_max)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("world.bounds.{name}"), "must be positive"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0.0..=self.x_max).contains(&p.x)
            && (0.0..=self.y_max).contains(&p.y)
            && (0.0..=self.z_max).contains(&p.z)
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(0.0, self.x_max),
            p.y.clamp(0.0, self.y_max),
            p.z.clamp(0.0, self.z_max),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionLimits {
    /// m/s
    pub max_speed: f64,
    /// seconds per simulation step
    pub dt: f64,
}

impl Default for MotionLimits {
    fn default() -> Self {
        Self {
            max_speed: 10.0,
            dt: 1.0,
        }
    }
}

impl MotionLimits {
    pub fn step_length(&self) -> f64 {
        self.max_speed * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_speed.is_finite() && self.max_speed > 0.0) {
            return Err(Error::config("world.limits.max_speed", "must be positive"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::config("world.limits.dt", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Bezier {
        control_points: Vec<Vec3>,
        #[serde(default = "default_true")]
        round_trip: bool,
    },
    Triangle {
        vertices: [Vec3; 3],
    },
    Circle {
        center: Vec3,
        radius: f64,
    },
    Rectangle {
        corners: [Vec3; 4],
    },
    /// Waypoints supplied at runtime by the named path source (the planner).
    Planned {
        source: String,
    },
}

fn default_true() -> bool {
    true
}

impl TrajectorySpec {
    pub fn validate(&self, bounds: &WorldBounds) -> Result<()> {
        let outside = |p: &Vec3| !(p.is_finite() && bounds.contains(*p));
        match self {
            TrajectorySpec::Bezier { control_points, .. } => {
                if control_points.len() < 2 {
                    return Err(Error::InvalidTrajectory(
                        "bezier needs at least 2 control points".into(),
                    ));
                }
                if control_points.iter().any(outside) {
                    return Err(Error::InvalidTrajectory(
                        "bezier control point outside bounds".into(),
                    ));
                }
            }
            TrajectorySpec::Triangle { vertices } => {
                if vertices.iter().any(outside) {
                    return Err(Error::InvalidTrajectory("triangle vertex outside bounds".into()));
                }
            }
            TrajectorySpec::Rectangle { corners } => {
                if corners.iter().any(outside) {
                    return Err(Error::InvalidTrajectory("rectangle corner outside bounds".into()));
                }
            }
            TrajectorySpec::Circle { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidTrajectory("circle radius must be positive".into()));
                }
                let lo = Vec3::new(center.x - radius, center.y - radius, center.z);
                let hi = Vec3::new(center.x + radius, center.y + radius, center.z);
                if outside(&lo) || outside(&hi) {
                    return Err(Error::InvalidTrajectory("circle leaves the arena".into()));
                }
            }
            TrajectorySpec::Planned { .. } => {}
        }
        Ok(())
    }

    /// Perimeter of a closed pattern; `None` for open or runtime trajectories.
    pub fn perimeter(&self) -> Option<f64> {
        match self {
            TrajectorySpec::Triangle { vertices } => Some(polygon_perimeter(vertices)),
            TrajectorySpec::Rectangle { corners } => Some(polygon_perimeter(corners)),
            TrajectorySpec::Circle { radius, .. } => Some(TAU * radius),
            _ => None,
        }
    }
}

fn polygon_perimeter(pts: &[Vec3]) -> f64 {
    (0..pts.len())
        .map(|i| pts[i].distance(pts[(i + 1) % pts.len()]))
        .sum()
}

/// De Casteljau evaluation of the Bezier curve defined by `controls` at `u`.
pub fn bezier_point(controls: &[Vec3], u: f64) -> Result<Vec3> {
    if controls.is_empty() {
        return Err(Error::InvalidTrajectory("empty control list".into()));
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("bezier parameter {u} outside [0, 1]")));
    }
    let mut pts = controls.to_vec();
    for level in (1..pts.len()).rev() {
        for i in 0..level {
            pts[i] = pts[i].lerp(pts[i + 1], u);
        }
    }
    Ok(pts[0])
}

/// Point at arc length `s` along a closed pattern, wrapping at the perimeter.
///
/// Polygons are traversed through their vertices in listed order; circles run
/// counterclockwise from angle 0 in the plane `z = center.z`.
pub fn pattern_waypoint(spec: &TrajectorySpec, s: f64) -> Result<Vec3> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::Domain(format!("arc length {s} must be non-negative")));
    }
    let perimeter = spec
        .perimeter()
        .ok_or_else(|| Error::InvalidTrajectory("not a closed pattern".into()))?;
    if !(perimeter > 0.0) {
        return Err(Error::InvalidTrajectory("pattern has zero perimeter".into()));
    }
    let s = s.rem_euclid(perimeter);
    match spec {
        TrajectorySpec::Circle { center, radius } => {
            let angle = s / radius;
            Ok(Vec3::new(
                center.x + radius * angle.cos(),
                center.y + radius * angle.sin(),
                center.z,
            ))
        }
        TrajectorySpec::Triangle { vertices } => Ok(walk_polygon(vertices, s)),
        TrajectorySpec::Rectangle { corners } => Ok(walk_polygon(corners, s)),
        _ => unreachable!("perimeter() is only Some for closed patterns"),
    }
}

fn walk_polygon(pts: &[Vec3], mut s: f64) -> Vec3 {
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
        let len = a.distance(b);
        if s <= len && len > 0.0 {
            return a.lerp(b, s / len);
        }
        s -= len;
    }
    pts[0]
}

/// Moves from `pos` toward `desired` by at most `max_speed * dt`, then clamps
/// into the arena.
pub fn step_motion(pos: Vec3, desired: Vec3, limits: &MotionLimits, bounds: &WorldBounds) -> Vec3 {
    let delta = desired - pos;
    let dist = delta.norm();
    if dist == 0.0 {
        return pos;
    }
    let reach = limits.step_length();
    let next = if dist <= reach {
        desired
    } else {
        pos + delta * (reach / dist)
    };
    bounds.clamp(next)
}

/// Bezier curve re-parameterized by arc length through a sampled lookup table.
#[derive(Clone, Debug)]
pub struct BezierPath {
    controls: Vec<Vec3>,
    round_trip: bool,
    // cumulative arc length at u = i / SEGMENTS
    cumulative: Vec<f64>,
}

impl BezierPath {
    const SEGMENTS: usize = 2048;

    pub fn new(controls: Vec<Vec3>, round_trip: bool) -> Result<Self> {
        if controls.len() < 2 {
            return Err(Error::InvalidTrajectory(
                "bezier needs at least 2 control points".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(Self::SEGMENTS + 1);
        cumulative.push(0.0);
        let mut prev = controls[0];
        for i in 1..=Self::SEGMENTS {
            let p = bezier_point(&controls, i as f64 / Self::SEGMENTS as f64)?;
            let last = *cumulative.last().unwrap();
            cumulative.push(last + prev.distance(p));
            prev = p;
        }
        Ok(Self {
            controls,
            round_trip,
            cumulative,
        })
    }

    pub fn from_spec(spec: &TrajectorySpec) -> Result<Self> {
        match spec {
            TrajectorySpec::Bezier {
                control_points,
                round_trip,
            } => Self::new(control_points.clone(), *round_trip),
            _ => Err(Error::InvalidTrajectory("expected a bezier trajectory".into())),
        }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn start(&self) -> Vec3 {
        self.controls[0]
    }

    /// Position after flying `s` meters. Round trips reverse at the far end;
    /// one-way paths hold the final control point.
    pub fn position_at(&self, s: f64) -> Vec3 {
        let len = self.length();
        if len == 0.0 {
            return self.controls[0];
        }
        let s = s.max(0.0);
        let along = if self.round_trip {
            let m = s.rem_euclid(2.0 * len);
            if m > len {
                2.0 * len - m
            } else {
                m
            }
        } else {
            s.min(len)
        };
        let u = self.param_at(along);
        // u is within [0, 1] by construction
        bezier_point(&self.controls, u).unwrap_or(self.controls[0])
    }

    fn param_at(&self, along: f64) -> f64 {
        let idx = self.cumulative.partition_point(|&c| c < along);
        if idx == 0 {
            return 0.0;
        }
        if idx > Self::SEGMENTS {
            return 1.0;
        }
        let (c0, c1) = (self.cumulative[idx - 1], self.cumulative[idx]);
        let frac = if c1 > c0 { (along - c0) / (c1 - c0) } else { 0.0 };
        ((idx - 1) as f64 + frac) / Self::SEGMENTS as f64
    }
}
