//! Per-point surface normals from k-nearest-neighbor PCA.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::{Normal3, Point3, PointCloud};
use crate::index::StaticKdTree;
use crate::parallel::par_map;

pub const DEFAULT_NORMAL_K: usize = 10;

/// Relative eigenvalue floor below which a neighborhood counts as degenerate.
const RANK_TOLERANCE: f64 = 1e-12;

/// Computes a normal for each point from the scatter of its `k` nearest
/// neighbors (the point itself plus `k` others), oriented towards
/// `viewpoint`.
///
/// Neighborhoods whose two smallest eigenvalues are both below `1e-12` of
/// the trace (collinear or coincident points) get `None`.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Point3) -> Result<PointCloud> {
    NormalEstimator::new(k).estimate(cloud, viewpoint)
}

pub fn estimate_normals_threaded(
    cloud: &PointCloud,
    k: usize,
    viewpoint: &Point3,
    threads: usize,
) -> Result<PointCloud> {
    NormalEstimator {
        threads,
        ..NormalEstimator::new(k)
    }
    .estimate(cloud, viewpoint)
}

/// Normal estimation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalEstimator {
    pub k: usize,
    pub threads: usize,
    /// Neighborhoods with `lambda_min / trace` above this are treated as
    /// non-planar and get no normal. `None` keeps every non-degenerate fit.
    pub max_surface_variation: Option<f64>,
}

impl NormalEstimator {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            threads: 1,
            max_surface_variation: None,
        }
    }

    pub fn estimate(&self, cloud: &PointCloud, viewpoint: &Point3) -> Result<PointCloud> {
        let k = self.k;
        if k < 3 {
            return Err(Error::invalid(format!(
                "normal estimation needs k >= 3, got {k}"
            )));
        }
        if cloud.len() < k + 1 {
            return Err(Error::invalid(format!(
                "normal estimation with k = {k} needs at least {} points, got {}",
                k + 1,
                cloud.len()
            )));
        }
        let tree = StaticKdTree::build(cloud.points());
        let pts = cloud.points();
        let max_var = self.max_surface_variation.unwrap_or(f64::INFINITY);
        let normals = par_map(pts.len(), self.threads.max(1), |i| {
            let hood = tree.knn(&pts[i], k + 1);
            fit_normal(hood.iter().map(|n| &n.point), &pts[i], viewpoint, max_var)
        });
        cloud.clone().with_normals(normals)
    }
}

fn fit_normal<'a>(
    hood: impl Iterator<Item = &'a Point3> + Clone,
    point: &Point3,
    viewpoint: &Point3,
    max_variation: f64,
) -> Option<Normal3> {
    let n = hood.clone().count() as f64;
    let mean = hood.clone().fold(Point3::zeros(), |acc, p| acc + p) / n;
    let scatter = hood.fold(Matrix3::zeros(), |acc, p| {
        let d = p - mean;
        acc + d * d.transpose()
    });
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let trace = scatter.trace();
    if !(trace > 0.0) || eig.eigenvalues[order[1]] < RANK_TOLERANCE * trace {
        return None;
    }
    if eig.eigenvalues[order[0]] / trace > max_variation {
        return None;
    }
    let normal = Normal3::normalize(eig.eigenvectors.column(order[0]).into_owned()).ok()?;
    if normal.as_vector().dot(&(viewpoint - point)) < 0.0 {
        Some(normal.flipped())
    } else {
        Some(normal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_apply, Pose};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_plane(f: impl Fn(f64, f64) -> Point3) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pts.push(f(i as f64 * 0.1, j as f64 * 0.13));
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn floor_normals_point_up() {
        let c = grid_plane(|a, b| Point3::new(a, b, 0.0));
        let out = estimate_normals(&c, 10, &Point3::new(0.0, 0.0, 10.0)).unwrap();
        for n in out.normals().unwrap() {
            let n = n.unwrap();
            assert!((n.as_vector() - Vector3::z()).norm() < 1e-6);
        }
    }

    #[test]
    fn wall_normals_face_viewpoint() {
        let c = grid_plane(|a, b| Point3::new(5.0, a, b));
        let out = estimate_normals(&c, 10, &Point3::zeros()).unwrap();
        for n in out.normals().unwrap() {
            assert!((n.unwrap().as_vector() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_point_inward() {
        // Fibonacci lattice on the unit sphere.
        let n = 3000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Point3> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let th = golden * i as f64;
                Point3::new(r * th.cos(), r * th.sin(), z)
            })
            .collect();
        let out = estimate_normals(&PointCloud::new(pts.clone()), 10, &Point3::zeros()).unwrap();
        for (p, n) in pts.iter().zip(out.normals().unwrap()) {
            let cos = n.unwrap().as_vector().dot(&(-p));
            assert!(
                cos > 2f64.to_radians().cos(),
                "angle {} deg",
                cos.acos().to_degrees()
            );
        }
    }

    #[test]
    fn collinear_neighborhoods_are_flagged() {
        let c = PointCloud::new((0..30).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect());
        let out = estimate_normals(&c, 5, &Point3::new(0.0, 0.0, 5.0)).unwrap();
        assert!(out.normals().unwrap().iter().all(|n| n.is_none()));
    }

    #[test]
    fn too_few_points_is_an_error() {
        let c = PointCloud::new(vec![Point3::zeros(); 5]);
        assert!(estimate_normals(&c, 5, &Point3::zeros()).is_err());
        assert!(estimate_normals(&c, 2, &Point3::zeros()).is_err());
    }

    #[test]
    fn rotation_equivariant_and_oriented() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // a box corner scene: three orthogonal noisy-free patches
        let mut pts = Vec::new();
        for _ in 0..400 {
            let (a, b) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
            pts.push(Point3::new(a, b, 0.0));
            pts.push(Point3::new(a, 0.0, b + 0.3));
            pts.push(Point3::new(0.0, a + 0.3, b + 0.3));
        }
        let cloud = PointCloud::new(pts);
        let view = Point3::new(1.0, 1.5, 1.2);
        let base = estimate_normals(&cloud, 10, &view).unwrap();
        let pose = Pose::from_euler(0.4, -0.2, 1.1, Vector3::new(3.0, -1.0, 2.0));
        let moved =
            estimate_normals(&se3_apply(&pose, &cloud), 10, &pose.transform_point(&view)).unwrap();
        let mut compared = 0;
        for i in 0..cloud.len() {
            let (Some(a), Some(b)) = (base.normals().unwrap()[i], moved.normals().unwrap()[i])
            else {
                continue;
            };
            let p = cloud.points()[i];
            assert!((a.as_vector().norm() - 1.0).abs() < 1e-9);
            assert!(a.as_vector().dot(&(view - p)) >= 0.0);
            // skip points whose orientation is nearly tangent to the view ray
            if a.as_vector().dot(&(view - p)).abs() < 1e-3 {
                continue;
            }
            let ra = pose.rotation() * a.as_vector();
            assert!((ra - b.as_vector()).norm() < 1e-6, "point {i}");
            compared += 1;
        }
        assert!(compared > 1000);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let c = grid_plane(|a, b| Point3::new(a, b, (a * 3.0).sin() * 0.2));
        let a = estimate_normals_threaded(&c, 10, &Point3::new(0.0, 0.0, 5.0), 1).unwrap();
        let b = estimate_normals_threaded(&c, 10, &Point3::new(0.0, 0.0, 5.0), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surface_variation_cutoff_drops_edges() {
        // Two perpendicular half planes meeting along the y axis.
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let (a, b) = (i as f64 * 0.05, j as f64 * 0.05);
                pts.push(Point3::new(a, b, 0.0));
                pts.push(Point3::new(0.0, b, a + 0.05));
            }
        }
        let cloud = PointCloud::new(pts);
        let all = estimate_normals(&cloud, 10, &Point3::new(1.0, 1.0, 1.0)).unwrap();
        let strict = NormalEstimator {
            max_surface_variation: Some(0.01),
            ..NormalEstimator::new(10)
        }
        .estimate(&cloud, &Point3::new(1.0, 1.0, 1.0))
        .unwrap();
        assert!(strict.valid_normal_count() < all.valid_normal_count());
        // Far from the crease both agree.
        let far = cloud
            .points()
            .iter()
            .position(|p| p.x > 0.8 && p.z == 0.0)
            .unwrap();
        assert_eq!(strict.normals().unwrap()[far], all.normals().unwrap()[far]);
    }
}
