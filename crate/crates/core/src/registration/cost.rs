//! Per-correspondence plane-to-plane cost and its derivatives.
//!
//! For a pair `(a, b)` and pose `T = (R, t)`:
//!
//! ```text
//! d = b - (R a + t)
//! M = C_b + R C_a R^T
//! f = d^T M^-1 d
//! ```
//!
//! Derivatives are taken with respect to a left perturbation
//! `T' = exp(xi) T`, `xi = [omega; v]`.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::geometry::{hat, Point3, Pose};

/// Cost of one pair; `None` if `M` is singular.
pub fn pair_cost(
    a: &Point3,
    b: &Point3,
    cov_a: &Matrix3<f64>,
    cov_b: &Matrix3<f64>,
    pose: &Pose,
) -> Option<f64> {
    let r = pose.rotation_matrix();
    let m = cov_b + r * cov_a * r.transpose();
    let w = m.try_inverse()?;
    let d = b - pose.transform_point(a);
    Some(d.dot(&(w * d)))
}

/// Linearization of one pair at a pose.
#[derive(Clone, Copy, Debug)]
pub struct PairTerms {
    pub cost: f64,
    /// Exact gradient of the cost with respect to `xi`.
    pub gradient: Vector6<f64>,
    /// Gauss-Newton approximation `J^T M^-1 J`, with `M` held fixed.
    pub hessian: Matrix6<f64>,
}

pub fn pair_terms(
    a: &Point3,
    b: &Point3,
    cov_a: &Matrix3<f64>,
    cov_b: &Matrix3<f64>,
    pose: &Pose,
) -> Option<PairTerms> {
    let rot = pose.rotation_matrix();
    let s = rot * cov_a * rot.transpose();
    let w = (cov_b + s).try_inverse()?;
    let q = pose.transform_point(a);
    let d = b - q;
    let r = w * d;
    let cost = d.dot(&r);

    // d(xi) ~ d + hat(q) omega - v
    let j_rot = hat(&q);
    let s_r = s * r;
    let g_rot: Vector3<f64> = (j_rot.transpose() * r - s_r.cross(&r)) * 2.0;
    let g_trans: Vector3<f64> = -r * 2.0;

    let mut jac = nalgebra::Matrix3x6::zeros();
    jac.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_rot);
    jac.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-Matrix3::identity()));
    let hessian = jac.transpose() * w * jac;

    Some(PairTerms {
        cost,
        gradient: Vector6::new(g_rot.x, g_rot.y, g_rot.z, g_trans.x, g_trans.y, g_trans.z),
        hessian,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{plane_covariance, Normal3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Normal3::normalize(v).unwrap().into_inner()
    }

    #[test]
    fn zero_residual_has_zero_cost_and_gradient() {
        let a = Point3::new(1.0, 2.0, 3.0);
        let pose = Pose::from_euler(0.1, 0.2, 0.3, Vector3::new(0.5, -0.2, 0.1));
        let b = pose.transform_point(&a);
        let c = plane_covariance(&Vector3::z(), 1e-3);
        let t = pair_terms(&a, &b, &c, &c, &pose).unwrap();
        assert_eq!(t.cost, 0.0);
        assert!(t.gradient.norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..120 {
            let pose = Pose::from_euler(
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(-3.0..3.0),
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
            );
            let a = Point3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let b = pose.transform_point(&a)
                + Vector3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.3..0.3),
                );
            let ca = plane_covariance(&random_unit(&mut rng), 1e-3);
            let cb = plane_covariance(&random_unit(&mut rng), 1e-3);
            let analytic = pair_terms(&a, &b, &ca, &cb, &pose).unwrap().gradient;
            let h = 1e-6;
            for k in 0..6 {
                let mut e = Vector6::zeros();
                e[k] = h;
                let fp = pair_cost(&a, &b, &ca, &cb, &(Pose::exp(&e) * pose)).unwrap();
                let fm = pair_cost(&a, &b, &ca, &cb, &(Pose::exp(&-e) * pose)).unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                let scale = analytic.norm().max(1e-8);
                assert!(
                    (numeric - analytic[k]).abs() / scale < 1e-4,
                    "k={k}: {numeric} vs {}",
                    analytic[k]
                );
            }
        }
    }
}
