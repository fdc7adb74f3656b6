//! Rigid-body math, point-cloud containers and the plane-to-plane covariance
//! built from a stored surface normal.

use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// A 3D point in meters.
pub type Point3 = Vector3<f64>;

/// Tolerance on `|n| = 1` for a [`Normal3`].
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Default variance along the surface normal for plane-to-plane covariances.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// A unit surface normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normal3(Vector3<f64>);

impl Normal3 {
    /// Wraps a vector that must already have unit length.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("normal has non-finite components"));
        }
        if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!(
                "normal is not unit length (|n| = {})",
                v.norm()
            )));
        }
        Ok(Self(v))
    }

    /// Normalizes an arbitrary non-zero finite vector.
    pub fn normalize(v: Vector3<f64>) -> Result<Self> {
        let norm = v.norm();
        if !norm.is_finite() || norm <= f64::MIN_POSITIVE {
            return Err(Error::invalid(
                "cannot normalize a zero or non-finite vector",
            ));
        }
        Ok(Self(v / norm))
    }

    pub fn x_axis() -> Self {
        Self(Vector3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vector3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vector3::z())
    }

    #[inline]
    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    #[inline]
    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    /// Rotates the normal; the result stays unit length up to rounding.
    pub fn rotated(&self, rotation: &UnitQuaternion<f64>) -> Self {
        let v = rotation * self.0;
        Self(v / v.norm())
    }

    pub fn flipped(&self) -> Self {
        Self(-self.0)
    }
}

/// Symmetric 3x3 covariance used as the GICP surface model. Dimensionless.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CovarianceMatrix(pub Matrix3<f64>);

impl CovarianceMatrix {
    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }
}

/// Returns two unit vectors spanning the plane orthogonal to `n` such that
/// `{n, u2, u3}` is right handed and `u3 = n x u2`.
///
/// The axis least aligned with `n` is projected onto the plane, so the
/// construction has no singular direction.
pub fn plane_basis(n: &Normal3) -> (Normal3, Normal3) {
    let (u2, u3) = plane_basis_raw(n.as_vector());
    (Normal3(u2), Normal3(u3))
}

pub(crate) fn plane_basis_raw(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let abs = n.abs();
    let axis = if abs.x <= abs.y && abs.x <= abs.z {
        Vector3::x()
    } else if abs.y <= abs.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let projected = axis - n * n.dot(&axis);
    let u2 = projected / projected.norm();
    let u3 = n.cross(&u2);
    (u2, u3)
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!(
            "epsilon must lie in (0, 1), got {eps}"
        )));
    }
    Ok(())
}

/// Plane-to-plane covariance `C = I + (eps - 1) n n^T` for a unit normal.
///
/// `C n = eps n` and `C v = v` for every `v` orthogonal to `n`.
pub fn covariance_from_normal(n: &Normal3, eps: f64) -> Result<CovarianceMatrix> {
    check_epsilon(eps)?;
    Ok(CovarianceMatrix(plane_covariance(n.as_vector(), eps)))
}

/// The same covariance assembled term by term from an in-plane basis:
/// `eps n n^T + u2 u2^T + u3 u3^T`.
pub fn covariance_from_normal_explicit(n: &Normal3, eps: f64) -> Result<CovarianceMatrix> {
    check_epsilon(eps)?;
    Ok(CovarianceMatrix(plane_covariance_explicit(
        n.as_vector(),
        eps,
    )))
}

#[inline]
pub(crate) fn plane_covariance(n: &Vector3<f64>, eps: f64) -> Matrix3<f64> {
    Matrix3::identity() + (n * n.transpose()) * (eps - 1.0)
}

#[inline]
pub(crate) fn plane_covariance_explicit(n: &Vector3<f64>, eps: f64) -> Matrix3<f64> {
    let (u2, u3) = plane_basis_raw(n);
    n * n.transpose() * eps + u2 * u2.transpose() + u3 * u3.transpose()
}

/// Skew-symmetric matrix such that `hat(a) * b = a x b`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid transform in SE(3). Maps points by `R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from a rotation matrix, rejecting matrices that are not
    /// orthonormal with determinant +1 (within 1e-9).
    pub fn from_matrix_parts(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if !rotation.iter().all(|v| v.is_finite()) || ortho > 1e-9 {
            return Err(Error::invalid("rotation is not orthonormal"));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rotation determinant is not +1"));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        let rot = Rotation3::from_matrix_unchecked(*rotation);
        Ok(Self::new(
            UnitQuaternion::from_rotation_matrix(&rot),
            translation,
        ))
    }

    /// Rotation about roll/pitch/yaw (radians) followed by a translation.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        Self::new(
            UnitQuaternion::from_euler_angles(roll, pitch, yaw),
            translation,
        )
    }

    #[inline]
    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    #[inline]
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let inv = self.rotation.inverse();
        Self::new(inv, -(inv * self.translation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Re-projects the quaternion onto the unit sphere after long compositions.
    pub fn renormalized(&self) -> Self {
        Self::new(
            UnitQuaternion::new_normalize(self.rotation.into_inner()),
            self.translation,
        )
    }

    /// Exponential map from a twist `[omega; v]` (rotation first, radians then
    /// meters).
    pub fn exp(xi: &Vector6<f64>) -> Self {
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let v = Vector3::new(xi[3], xi[4], xi[5]);
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = hat(&omega);
        let (b, c) = if theta < 1e-5 {
            // Taylor expansions of (1 - cos)/t^2 and (t - sin)/t^3.
            (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
        } else {
            (
                (1.0 - theta.cos()) / theta2,
                (theta - theta.sin()) / (theta2 * theta),
            )
        };
        let jac = Matrix3::identity() + w * b + w * w * c;
        Self::new(UnitQuaternion::from_scaled_axis(omega), jac * v)
    }

    /// Logarithm map, inverse of [`Pose::exp`] for rotation angles below pi.
    pub fn log(&self) -> Vector6<f64> {
        let omega = self.rotation.scaled_axis();
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = hat(&omega);
        let d = if theta < 1e-5 {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2
        };
        let jac_inv = Matrix3::identity() - w * 0.5 + w * w * d;
        let v = jac_inv * self.translation;
        Vector6::new(omega.x, omega.y, omega.z, v.x, v.y, v.z)
    }

    /// Translation distance and rotation angle between two poses.
    pub fn difference(&self, other: &Pose) -> (f64, f64) {
        let delta = self.inverse() * *other;
        (
            (self.translation - other.translation).norm(),
            delta.rotation_angle(),
        )
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        *self * *rhs
    }
}

/// Points plus optional per-point normals and acquisition offsets.
///
/// A normal entry of `None` marks a point whose neighborhood could not
/// support a plane fit; such points are skipped by registration and mapping.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Option<Normal3>>>,
    timestamps: Option<Vec<f64>>,
    frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: None,
            timestamps: None,
            frame_id: String::new(),
        }
    }

    /// Validates that every coordinate is finite.
    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!(
                "point {i} has non-finite coordinates"
            )));
        }
        Ok(Self::new(points))
    }

    pub fn with_frame_id(mut self, frame_id: impl Into<String>) -> Self {
        self.frame_id = frame_id.into();
        self
    }

    pub fn with_timestamps(mut self, timestamps: Vec<f64>) -> Result<Self> {
        if timestamps.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "{} timestamps for {} points",
                timestamps.len(),
                self.points.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Option<Normal3>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::invalid(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    /// Convenience for clouds whose normals are all known to be valid.
    pub fn with_valid_normals(self, normals: Vec<Normal3>) -> Result<Self> {
        self.with_normals(normals.into_iter().map(Some).collect())
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn normals(&self) -> Option<&[Option<Normal3>]> {
        self.normals.as_deref()
    }

    #[inline]
    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    #[inline]
    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points carrying a valid normal.
    pub fn valid_normal_count(&self) -> usize {
        self.normals
            .as_ref()
            .map_or(0, |n| n.iter().filter(|n| n.is_some()).count())
    }

    /// Keeps the points for which `keep(index)` is true, preserving order and
    /// the parallel attribute lists.
    pub fn retain_indices(&self, mut keep: impl FnMut(usize) -> bool) -> PointCloud {
        let mask: Vec<bool> = (0..self.len()).map(&mut keep).collect();
        let pick = |i: &usize| mask[*i];
        let idx: Vec<usize> = (0..self.len()).filter(pick).collect();
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| idx.iter().map(|&i| n[i]).collect()),
            timestamps: self
                .timestamps
                .as_ref()
                .map(|t| idx.iter().map(|&i| t[i]).collect()),
            frame_id: self.frame_id.clone(),
        }
    }

    /// Appends another cloud. Attribute lists survive only if both sides have them.
    pub fn extend_from(&mut self, other: &PointCloud) {
        let was_empty = self.points.is_empty();
        self.normals = match (self.normals.take(), other.normals.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.timestamps = match (self.timestamps.take(), other.timestamps.as_ref()) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            (None, Some(b)) if was_empty => Some(b.clone()),
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
    }

    pub(crate) fn points_mut(&mut self) -> &mut Vec<Point3> {
        &mut self.points
    }

    pub(crate) fn normals_mut(&mut self) -> Option<&mut Vec<Option<Normal3>>> {
        self.normals.as_mut()
    }
}

/// Maps every point by `R p + t` and every normal by `R n`. Timestamps are kept.
pub fn se3_apply(pose: &Pose, cloud: &PointCloud) -> PointCloud {
    let mut out = cloud.clone();
    for p in out.points_mut() {
        *p = pose.transform_point(p);
    }
    if let Some(normals) = out.normals_mut() {
        for n in normals.iter_mut().flatten() {
            *n = n.rotated(pose.rotation());
        }
    }
    out
}
