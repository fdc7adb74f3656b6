use std::f64::consts::{FRAC_PI_2, PI};
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::LoopCourse;
use crate::geometry::Pose;
use crate::preprocess::ImuSample;
use crate::{Error, Result};

const GRAVITY: f64 = 9.81;
/// Step for numeric differentiation of the trajectory.
const DIFF_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectorySample {
    pub timestamp: f64,
    pub pose: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryPreset {
    Static,
    Line,
    CorridorLoop,
    FigureEight,
}

impl FromStr for TrajectoryPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "line" => Ok(Self::Line),
            "corridor-loop" => Ok(Self::CorridorLoop),
            "figure-eight" => Ok(Self::FigureEight),
            other => Err(Error::Config(format!(
                "unknown trajectory preset {other:?} (expected static, line, corridor-loop or figure-eight)"
            ))),
        }
    }
}

impl std::fmt::Display for TrajectoryPreset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::Line => "line",
            Self::CorridorLoop => "corridor-loop",
            Self::FigureEight => "figure-eight",
        })
    }
}

/// Smooth body trajectory at constant height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Trajectory {
    pub preset: TrajectoryPreset,
    /// Meters per second along the path.
    pub speed: f64,
    pub height: f64,
    pub course: LoopCourse,
    /// Half width of the figure eight, meters.
    pub eight_radius: f64,
}

impl Trajectory {
    pub fn new(preset: TrajectoryPreset, speed: f64) -> Result<Self> {
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(Error::Config(format!(
                "trajectory speed must be finite and non-negative, got {speed}"
            )));
        }
        Ok(Self {
            preset,
            speed,
            height: 1.0,
            course: LoopCourse::default(),
            eight_radius: 2.0,
        })
    }

    pub fn with_course(mut self, course: LoopCourse) -> Self {
        self.course = course;
        self
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let s = self.speed * t;
        let (x, y, yaw) = match self.preset {
            TrajectoryPreset::Static => (0.0, 0.0, 0.0),
            TrajectoryPreset::Line => (s, 0.0, 0.0),
            TrajectoryPreset::CorridorLoop => loop_point(&self.course, s),
            TrajectoryPreset::FigureEight => {
                // Gerono lemniscate, traversed at roughly the requested speed.
                let a = self.eight_radius;
                let w = self.speed / (1.2 * a);
                let th = w * t;
                let (x, y) = (a * th.sin(), a * th.sin() * th.cos());
                let (dx, dy) = (a * th.cos(), a * (2.0 * th).cos());
                (x, y, dy.atan2(dx))
            }
        };
        Pose::from_euler(0.0, 0.0, yaw, Vector3::new(x, y, self.height))
    }

    pub fn samples(&self, t0: f64, period: f64, frames: usize) -> Vec<TrajectorySample> {
        (0..frames)
            .map(|i| {
                let timestamp = t0 + period * i as f64;
                TrajectorySample {
                    timestamp,
                    pose: self.pose_at(timestamp),
                }
            })
            .collect()
    }

    /// Body-frame angular velocity.
    pub fn angular_velocity(&self, t: f64) -> Vector3<f64> {
        let (a, b) = (self.pose_at(t - DIFF_STEP), self.pose_at(t + DIFF_STEP));
        (a.rotation().inverse() * b.rotation()).scaled_axis() / (2.0 * DIFF_STEP)
    }

    /// Body-frame specific force, as an accelerometer would report it.
    pub fn specific_force(&self, t: f64) -> Vector3<f64> {
        let h = 1e-3;
        let p = |t: f64| *self.pose_at(t).translation();
        let acc = (p(t + h) - 2.0 * p(t) + p(t - h)) / (h * h);
        self.pose_at(t).rotation().inverse() * (acc + Vector3::new(0.0, 0.0, GRAVITY))
    }

    /// Gyro and accelerometer samples at `rate` Hz covering `[t0, t1]`.
    pub fn imu(&self, t0: f64, t1: f64, rate: f64) -> Vec<ImuSample> {
        let n = ((t1 - t0) * rate).ceil().max(0.0) as usize;
        (0..=n)
            .map(|i| {
                let t = t0 + i as f64 / rate;
                ImuSample {
                    timestamp: t,
                    angular_velocity: self.angular_velocity(t),
                    linear_acceleration: self.specific_force(t),
                }
            })
            .collect()
    }
}

/// Position and heading at arc length `s` on the rounded rectangle. The
/// path starts at `(0, -r)` heading along +x and runs counter-clockwise.
fn loop_point(c: &LoopCourse, s: f64) -> (f64, f64, f64) {
    let (l, w, r) = (c.length, c.width, c.corner_radius);
    let arc = FRAC_PI_2 * r;
    let mut u = s.rem_euclid(c.perimeter());
    // (straight length, straight start, heading, corner center)
    let legs = [
        (l, (0.0, -r), 0.0, (l, 0.0)),
        (w, (l + r, 0.0), FRAC_PI_2, (l, w)),
        (l, (l, w + r), PI, (0.0, w)),
        (w, (-r, w), 3.0 * FRAC_PI_2, (0.0, 0.0)),
    ];
    for (len, (sx, sy), heading, (cx, cy)) in legs {
        if u < len {
            return (sx + u * heading.cos(), sy + u * heading.sin(), heading);
        }
        u -= len;
        if u < arc {
            let phi = heading - FRAC_PI_2 + u / r;
            return (cx + r * phi.cos(), cy + r * phi.sin(), phi + FRAC_PI_2);
        }
        u -= arc;
    }
    (0.0, -r, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loop_is_continuous_and_closed() {
        let traj = Trajectory::new(TrajectoryPreset::CorridorLoop, 1.0).unwrap();
        let per = traj.course.perimeter();
        let mut prev = traj.pose_at(0.0);
        let mut t = 0.05;
        while t <= per {
            let p = traj.pose_at(t);
            let (dt, dr) = prev.difference(&p);
            assert!(dt < 0.051 && dr < 0.02, "jump at t={t}: {dt} m {dr} rad");
            prev = p;
            t += 0.05;
        }
        let (dt, dr) = traj.pose_at(0.0).difference(&traj.pose_at(per));
        assert!(dt < 1e-9 && dr < 1e-9);
    }

    #[test]
    fn gyro_matches_turn_rate() {
        let traj = Trajectory::new(TrajectoryPreset::CorridorLoop, 2.0).unwrap();
        let r = traj.course.corner_radius;
        // Middle of the first corner.
        let t = (traj.course.length + FRAC_PI_2 * r / 2.0) / 2.0;
        let w = traj.angular_velocity(t);
        assert!((w.z - 2.0 / r).abs() < 1e-6, "{w}");
        let still = Trajectory::new(TrajectoryPreset::Static, 0.0).unwrap();
        let f = still.specific_force(1.0);
        assert!((f - Vector3::new(0.0, 0.0, GRAVITY)).norm() < 1e-6);
    }

    #[test]
    fn line_moves_at_speed() {
        let traj = Trajectory::new(TrajectoryPreset::Line, 1.5).unwrap();
        let s = traj.samples(0.0, 0.1, 11);
        assert!((s[10].pose.translation().x - 1.5).abs() < 1e-12);
        assert!(Trajectory::new(TrajectoryPreset::Line, -1.0).is_err());
        assert_eq!(
            "figure-eight".parse::<TrajectoryPreset>().unwrap(),
            TrajectoryPreset::FigureEight
        );
    }
}
