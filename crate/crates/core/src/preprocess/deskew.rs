use nalgebra::{UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Offsets this far outside the scan interval are still accepted.
const TIME_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    /// Seconds.
    pub timestamp: f64,
    /// rad/s, body frame.
    pub angular_velocity: Vector3<f64>,
    /// m/s^2. Not used by de-skew.
    pub linear_acceleration: Vector3<f64>,
}

impl ImuSample {
    pub fn gyro(timestamp: f64, angular_velocity: Vector3<f64>) -> Self {
        Self {
            timestamp,
            angular_velocity,
            linear_acceleration: Vector3::zeros(),
        }
    }
}

/// Piecewise-constant gyro integration over `[start, end]`. Each IMU rate is
/// held until the next sample; the first sample's rate also covers any gap
/// before it.
struct GyroTrack {
    knots: Vec<f64>,
    rates: Vec<Vector3<f64>>,
    /// Sensor orientation at each knot relative to the frame at `start`.
    orientations: Vec<UnitQuaternion<f64>>,
}

impl GyroTrack {
    fn new(imu: &[ImuSample], start: f64, end: f64) -> Self {
        let rate_at = |t: f64| {
            let i = imu.partition_point(|s| s.timestamp <= t);
            imu[i.saturating_sub(1)].angular_velocity
        };
        let mut knots = vec![start];
        knots.extend(
            imu.iter()
                .map(|s| s.timestamp)
                .filter(|&t| t > start && t < end),
        );
        let rates: Vec<_> = knots.iter().map(|&t| rate_at(t)).collect();
        let mut orientations = Vec::with_capacity(knots.len() + 1);
        let mut q = UnitQuaternion::identity();
        orientations.push(q);
        for i in 1..knots.len() {
            q *= UnitQuaternion::from_scaled_axis(rates[i - 1] * (knots[i] - knots[i - 1]));
            orientations.push(q);
        }
        Self {
            knots,
            rates,
            orientations,
        }
    }

    fn orientation(&self, t: f64) -> UnitQuaternion<f64> {
        let i = self.knots.partition_point(|&k| k <= t).saturating_sub(1);
        self.orientations[i] * UnitQuaternion::from_scaled_axis(self.rates[i] * (t - self.knots[i]))
    }
}

/// Rotates every point into the sensor frame at `scan_end` using integrated
/// gyro rates. Point timestamps are offsets from `scan_start`.
///
/// Only rotation is corrected. With no IMU samples the scan is returned as is.
pub fn motion_deskew(
    scan: &PointCloud,
    imu: &[ImuSample],
    scan_start: f64,
    scan_end: f64,
) -> Result<PointCloud> {
    if !(scan_start.is_finite() && scan_end.is_finite()) || scan_end < scan_start {
        return Err(Error::invalid(format!(
            "bad scan interval [{scan_start}, {scan_end}]"
        )));
    }
    let stamps = scan
        .timestamps()
        .ok_or_else(|| Error::invalid("de-skew needs per-point timestamps"))?;
    let duration = scan_end - scan_start;
    if let Some(bad) = stamps
        .iter()
        .find(|&&t| !(t >= -TIME_SLACK && t <= duration + TIME_SLACK))
    {
        return Err(Error::invalid(format!(
            "point offset {bad} s lies outside the scan interval of {duration} s"
        )));
    }
    if imu.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::invalid("IMU timestamps must be strictly increasing"));
    }
    if imu.is_empty() {
        return Ok(scan.clone());
    }

    let track = GyroTrack::new(imu, scan_start, scan_end);
    let end_inv = track.orientation(scan_end).inverse();
    let mut out = scan.clone();
    let rotations: Vec<UnitQuaternion<f64>> = stamps
        .iter()
        .map(|&dt| end_inv * track.orientation((scan_start + dt).clamp(scan_start, scan_end)))
        .collect();
    for (p, r) in out.points_mut().iter_mut().zip(&rotations) {
        *p = r * *p;
    }
    if let Some(normals) = out.normals_mut() {
        for (n, r) in normals.iter_mut().zip(&rotations) {
            if let Some(n) = n {
                *n = n.rotated(r);
            }
        }
    }
    Ok(out)
}
