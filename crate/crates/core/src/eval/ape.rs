use serde::{Deserialize, Serialize};

use crate::sim::TrajectorySample;
use crate::{Error, Result};

/// Slack on the association window, absorbing timestamp rounding in CSV files.
const ASSOCIATION_SLACK: f64 = 1e-6;

/// Absolute pose error after aligning the first associated pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApeStats {
    pub max_m: f64,
    pub mean_m: f64,
    pub max_rot_deg: f64,
    pub mean_rot_deg: f64,
    /// Translational error of the last associated pair.
    pub final_m: f64,
    /// Ground-truth path length between the first and last associated pair.
    pub distance_m: f64,
    pub pairs: usize,
}

impl ApeStats {
    /// Final translational error as a percentage of distance traveled.
    pub fn final_error_pct(&self) -> f64 {
        if self.distance_m > 0.0 {
            100.0 * self.final_m / self.distance_m
        } else {
            0.0
        }
    }
}

/// APE with the association window set to half the median ground-truth
/// sample period.
pub fn ape(est: &[TrajectorySample], gt: &[TrajectorySample]) -> Result<ApeStats> {
    check_increasing(gt, "ground truth")?;
    let mut gaps: Vec<f64> = gt
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    gaps.sort_by(f64::total_cmp);
    let half_period = gaps.get(gaps.len() / 2).map_or(0.0, |g| g / 2.0);
    ape_within(est, gt, half_period)
}

/// APE over samples whose timestamps lie within `max_dt` of a ground-truth
/// sample. Each estimate is paired with its nearest ground-truth sample.
pub fn ape_within(
    est: &[TrajectorySample],
    gt: &[TrajectorySample],
    max_dt: f64,
) -> Result<ApeStats> {
    check_increasing(est, "estimate")?;
    check_increasing(gt, "ground truth")?;
    if !(max_dt >= 0.0) {
        return Err(Error::invalid(format!(
            "association window must be non-negative, got {max_dt}"
        )));
    }
    let pairs: Vec<(&TrajectorySample, &TrajectorySample)> = est
        .iter()
        .filter_map(|e| {
            let i = gt.partition_point(|g| g.timestamp < e.timestamp);
            [i.checked_sub(1), Some(i)]
                .into_iter()
                .flatten()
                .filter_map(|j| gt.get(j))
                .min_by(|a, b| {
                    (a.timestamp - e.timestamp)
                        .abs()
                        .total_cmp(&(b.timestamp - e.timestamp).abs())
                })
                .filter(|g| (g.timestamp - e.timestamp).abs() <= max_dt + ASSOCIATION_SLACK)
                .map(|g| (e, g))
        })
        .collect();
    let Some(&(e0, g0)) = pairs.first() else {
        return Err(Error::invalid(
            "estimate and ground truth share no timestamps",
        ));
    };
    let align = g0.pose * e0.pose.inverse();

    let mut stats = ApeStats {
        max_m: 0.0,
        mean_m: 0.0,
        max_rot_deg: 0.0,
        mean_rot_deg: 0.0,
        final_m: 0.0,
        distance_m: 0.0,
        pairs: pairs.len(),
    };
    let mut previous = g0.pose.translation();
    for (e, g) in &pairs {
        let (dt, dr) = g.pose.difference(&(align * e.pose));
        let dr = dr.to_degrees();
        stats.max_m = stats.max_m.max(dt);
        stats.max_rot_deg = stats.max_rot_deg.max(dr);
        stats.mean_m += dt;
        stats.mean_rot_deg += dr;
        stats.final_m = dt;
        stats.distance_m += (g.pose.translation() - previous).norm();
        previous = g.pose.translation();
    }
    stats.mean_m /= pairs.len() as f64;
    stats.mean_rot_deg /= pairs.len() as f64;
    Ok(stats)
}

fn check_increasing(samples: &[TrajectorySample], what: &str) -> Result<()> {
    if samples
        .iter()
        .any(|s| !s.timestamp.is_finite() || !s.pose.is_finite())
    {
        return Err(Error::invalid(format!(
            "{what} trajectory has non-finite values"
        )));
    }
    if samples.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::invalid(format!(
            "{what} timestamps must be strictly increasing"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use nalgebra::Vector3;

    fn line(n: usize) -> Vec<TrajectorySample> {
        (0..n)
            .map(|i| TrajectorySample {
                timestamp: 0.1 * i as f64,
                pose: Pose::from_euler(0.0, 0.0, 0.3, Vector3::new(2.0 + 0.5 * i as f64, 1.0, 1.0)),
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let gt = line(20);
        let s = ape(&gt, &gt).unwrap();
        assert!(s.max_m < 1e-12 && s.mean_m < 1e-12);
        assert!(s.max_rot_deg < 1e-12 && s.mean_rot_deg < 1e-12);
        assert_eq!(s.pairs, 20);
        assert!((s.distance_m - 9.5).abs() < 1e-12);
    }

    #[test]
    fn constant_shift_after_first_pose() {
        let gt = line(10);
        let mut est = gt.clone();
        for s in est.iter_mut().skip(1) {
            s.pose = Pose::from_translation(Vector3::new(0.0, 0.5, 0.0)) * s.pose;
        }
        let s = ape(&est, &gt).unwrap();
        assert!((s.max_m - 0.5).abs() < 1e-12);
        assert!((s.mean_m - 0.45).abs() < 1e-12);
        assert!((s.final_m - 0.5).abs() < 1e-12);
        assert!((s.final_error_pct() - 100.0 * 0.5 / 4.5).abs() < 1e-9);
    }

    #[test]
    fn yaw_offset_grows_with_lever_arm() {
        let gt = line(11);
        let p0 = gt[0].pose;
        let yaw = Pose::from_euler(0.0, 0.0, 1f64.to_radians(), Vector3::zeros());
        let mut est = gt.clone();
        for s in est.iter_mut().skip(1) {
            s.pose = p0 * yaw * p0.inverse() * s.pose;
        }
        let s = ape(&est, &gt).unwrap();
        // Rotating about the first pose moves a point at distance d by 2 d sin(theta / 2).
        let chord = 2.0 * (0.5f64.to_radians()).sin();
        assert!((s.max_m - chord * 5.0).abs() < 1e-9, "{s:?}");
        assert!((s.mean_m - chord * 0.5 * (0..11).sum::<usize>() as f64 / 11.0).abs() < 1e-9);
        assert!((s.max_rot_deg - 1.0).abs() < 1e-9);
        assert!((s.mean_rot_deg - 10.0 / 11.0).abs() < 1e-9);
    }

    #[test]
    fn aligns_on_the_first_pair_only() {
        let gt = line(5);
        let offset = Pose::from_euler(0.1, -0.2, 1.0, Vector3::new(-3.0, 7.0, 2.0));
        let est: Vec<_> = gt
            .iter()
            .map(|s| TrajectorySample {
                timestamp: s.timestamp,
                pose: offset * s.pose,
            })
            .collect();
        let s = ape(&est, &gt).unwrap();
        assert!(s.max_m < 1e-9 && s.max_rot_deg < 1e-6);
    }

    #[test]
    fn association_window() {
        let gt = line(10);
        let est: Vec<_> = gt
            .iter()
            .map(|s| TrajectorySample {
                timestamp: s.timestamp + 0.04,
                pose: s.pose,
            })
            .collect();
        assert_eq!(ape(&est, &gt).unwrap().pairs, 10);
        let late: Vec<_> = gt
            .iter()
            .map(|s| TrajectorySample {
                timestamp: s.timestamp + 0.5,
                pose: s.pose,
            })
            .collect();
        assert_eq!(ape(&late, &gt).unwrap().pairs, 5);
        let disjoint: Vec<_> = late
            .iter()
            .map(|s| TrajectorySample {
                timestamp: s.timestamp + 100.0,
                ..*s
            })
            .collect();
        assert!(ape(&disjoint, &gt).is_err());
        assert!(ape_within(&gt, &gt, -1.0).is_err());
        let mut unsorted = gt.clone();
        unsorted.swap(2, 3);
        assert!(ape(&unsorted, &gt).is_err());
    }
}
