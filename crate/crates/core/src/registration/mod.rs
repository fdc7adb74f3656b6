//! Plane-to-plane GICP. Every point carries the covariance of a thin disc
//! around its surface normal; pairs are weighted by the combined covariance
//! of both discs.

mod cost;

pub use cost::{pair_cost, pair_terms, PairTerms};

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    plane_covariance, plane_covariance_explicit, Normal3, Point3, PointCloud, Pose, DEFAULT_EPSILON,
};
use crate::index::StaticKdTree;
use crate::map::MapStore;
use crate::parallel::par_map;
use crate::{Error, Result};

/// Minimum valid source normals accepted by [`gicp_align`].
pub const MIN_SOURCE_NORMALS: usize = 20;
/// Fewer pairs than this in any iteration fails the solve.
pub const MIN_CORRESPONDENCES: usize = 6;

const INITIAL_LAMBDA: f64 = 1e-6;
const MAX_LAMBDA: f64 = 1e12;

/// How per-point covariances are formed from normals. Both variants give
/// the same matrix up to rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    /// `I + (eps - 1) n n^T`
    #[default]
    ClosedForm,
    /// `eps n n^T + u u^T + w w^T` with an explicit in-plane basis.
    ExplicitBasis,
}

impl CovarianceModel {
    fn matrix(self, n: &Normal3, eps: f64) -> Matrix3<f64> {
        match self {
            CovarianceModel::ClosedForm => plane_covariance(n.as_vector(), eps),
            CovarianceModel::ExplicitBasis => plane_covariance_explicit(n.as_vector(), eps),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GicpConfig {
    pub epsilon: f64,
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the squared norm of the twist update.
    pub step_tolerance: f64,
    /// Radians. Bound on the rotation the scan-to-map stage may apply on top of its seed.
    pub rot_fitness_threshold: f64,
    pub rotational_gate: bool,
    pub threads: usize,
    pub covariance: CovarianceModel,
}

impl Default for GicpConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_corr_dist: 0.3,
            max_iterations: 20,
            step_tolerance: 1e-10,
            rot_fitness_threshold: 0.005,
            rotational_gate: true,
            threads: 1,
            covariance: CovarianceModel::ClosedForm,
        }
    }
}

impl GicpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("max_corr_dist", self.max_corr_dist),
            ("step_tolerance", self.step_tolerance),
            ("rot_fitness_threshold", self.rot_fitness_threshold),
        ];
        for (name, v) in positive {
            // NaN fails both comparisons
            if !(v > 0.0) {
                return Err(Error::Config(format!(
                    "gicp.{name} must be positive, got {v}"
                )));
            }
        }
        if self.epsilon >= 1.0 {
            return Err(Error::Config(format!(
                "gicp.epsilon must be below 1, got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config(
                "gicp.max_iterations must be at least 1".into(),
            ));
        }
        if self.threads == 0 {
            return Err(Error::Config("gicp.threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nearest neighbor in a registration target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetHit {
    pub index: u64,
    pub point: Point3,
    pub normal: Normal3,
    pub sq_dist: f64,
}

/// A point set with normals that answers nearest-neighbor queries. It must
/// not change while a solve is running.
pub trait NormalTarget: Sync {
    fn nearest(&self, q: &Point3) -> Option<TargetHit>;
    fn is_empty(&self) -> bool;
}

/// A single scan prepared as a registration target. Points without a valid
/// normal are left out.
#[derive(Debug)]
pub struct ScanTarget {
    source_index: Vec<usize>,
    normals: Vec<Normal3>,
    tree: StaticKdTree,
}

impl ScanTarget {
    pub fn new(cloud: &PointCloud) -> Result<Self> {
        let normals = cloud
            .normals()
            .ok_or_else(|| Error::invalid("target cloud has no normals"))?;
        let mut source_index = Vec::new();
        let mut points = Vec::new();
        let mut valid = Vec::new();
        for (i, (p, n)) in cloud.points().iter().zip(normals).enumerate() {
            if let Some(n) = n {
                source_index.push(i);
                points.push(*p);
                valid.push(*n);
            }
        }
        Ok(Self {
            source_index,
            normals: valid,
            tree: StaticKdTree::build(&points),
        })
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.len() == 0
    }
}

impl NormalTarget for ScanTarget {
    fn nearest(&self, q: &Point3) -> Option<TargetHit> {
        let (i, sq_dist) = self.tree.nearest(q)?;
        Some(TargetHit {
            index: self.source_index[i] as u64,
            point: self.tree.points()[i],
            normal: self.normals[i],
            sq_dist,
        })
    }

    fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

impl NormalTarget for MapStore {
    fn nearest(&self, q: &Point3) -> Option<TargetHit> {
        MapStore::nearest(self, q).map(|n| TargetHit {
            index: n.id,
            point: n.point,
            normal: n.payload,
            sq_dist: n.sq_dist,
        })
    }

    fn is_empty(&self) -> bool {
        MapStore::is_empty(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correspondence {
    pub source_index: usize,
    pub target_index: u64,
    pub target_point: Point3,
    pub target_normal: Normal3,
    pub sq_dist: f64,
}

/// One Gauss-Newton iteration as seen by the solver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationTrace {
    pub correspondences: usize,
    /// Cost at the iteration's starting pose.
    pub cost: f64,
    /// Cost after the step; equals `cost` when every attempt was rejected.
    pub cost_after: f64,
    pub accepted: bool,
    pub lambda: f64,
    pub step_sq_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    /// Maps the source frame into the target frame.
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    pub final_cost: f64,
    /// Mean squared correspondence distance at the final pose, m².
    pub fitness: f64,
    /// Rotation between seed and result, radians.
    pub rotation_change: f64,
    pub correspondences: usize,
    pub failure: Option<String>,
    pub trace: Vec<IterationTrace>,
}

impl RegistrationResult {
    pub fn is_success(&self) -> bool {
        self.failure.is_none()
    }
}

struct SourcePoint {
    index: usize,
    point: Point3,
    cov: Matrix3<f64>,
}

struct Pair {
    a: Point3,
    b: Point3,
    cov_a: Matrix3<f64>,
    cov_b: Matrix3<f64>,
}

fn prepare_source(source: &PointCloud, cfg: &GicpConfig) -> Result<Vec<SourcePoint>> {
    let normals = source
        .normals()
        .ok_or_else(|| Error::invalid("source cloud has no normals"))?;
    let out: Vec<SourcePoint> = source
        .points()
        .iter()
        .zip(normals)
        .enumerate()
        .filter_map(|(index, (p, n))| {
            n.map(|n| SourcePoint {
                index,
                point: *p,
                cov: cfg.covariance.matrix(&n, cfg.epsilon),
            })
        })
        .collect();
    if out.len() < MIN_SOURCE_NORMALS {
        return Err(Error::invalid(format!(
            "source has {} valid normals, need at least {MIN_SOURCE_NORMALS}",
            out.len()
        )));
    }
    Ok(out)
}

fn associate<T: NormalTarget + ?Sized>(
    src: &[SourcePoint],
    target: &T,
    pose: &Pose,
    max_sq: f64,
    threads: usize,
) -> Vec<Option<(usize, TargetHit)>> {
    par_map(src.len(), threads, |i| {
        let q = pose.transform_point(&src[i].point);
        target
            .nearest(&q)
            .filter(|h| h.sq_dist <= max_sq)
            .map(|h| (i, h))
    })
}

fn total_cost(pairs: &[Pair], pose: &Pose, threads: usize) -> f64 {
    par_map(pairs.len(), threads, |i| {
        let p = &pairs[i];
        pair_cost(&p.a, &p.b, &p.cov_a, &p.cov_b, pose).unwrap_or(f64::NAN)
    })
    .into_iter()
    .sum()
}

fn failure(
    seed: &Pose,
    pose: Pose,
    iterations: usize,
    trace: Vec<IterationTrace>,
    reason: String,
) -> RegistrationResult {
    RegistrationResult {
        rotation_change: rotation_between(seed, &pose),
        pose,
        converged: false,
        iterations,
        final_cost: f64::INFINITY,
        fitness: f64::INFINITY,
        correspondences: trace.last().map_or(0, |t| t.correspondences),
        failure: Some(reason),
        trace,
    }
}

fn rotation_between(a: &Pose, b: &Pose) -> f64 {
    a.rotation().angle_to(b.rotation())
}

fn solve_damped(h: &Matrix6<f64>, g: &Vector6<f64>, lambda: f64) -> Option<Vector6<f64>> {
    let mut a = *h;
    for k in 0..6 {
        a[(k, k)] += lambda * h[(k, k)].max(1e-12);
    }
    let rhs = -g;
    a.cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| a.lu().solve(&rhs))
        .filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Aligns `source` to `target` starting from `seed`.
///
/// Input errors (missing normals, too few valid normals, empty target,
/// bad config) are returned as `Err`. Numerical trouble during the solve
/// comes back as a result with `failure` set.
pub fn gicp_align<T: NormalTarget + ?Sized>(
    source: &PointCloud,
    target: &T,
    seed: &Pose,
    cfg: &GicpConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::invalid("registration target is empty"));
    }
    let src = prepare_source(source, cfg)?;
    let max_sq = cfg.max_corr_dist * cfg.max_corr_dist;
    let threads = cfg.threads;

    let mut pose = *seed;
    let mut lambda = INITIAL_LAMBDA;
    let mut trace = Vec::new();
    let mut converged = false;

    for iter in 1..=cfg.max_iterations {
        let pairs: Vec<Pair> = associate(&src, target, &pose, max_sq, threads)
            .into_iter()
            .flatten()
            .map(|(i, h)| Pair {
                a: src[i].point,
                b: h.point,
                cov_a: src[i].cov,
                cov_b: cfg.covariance.matrix(&h.normal, cfg.epsilon),
            })
            .collect();
        if pairs.len() < MIN_CORRESPONDENCES {
            return Ok(failure(
                seed,
                pose,
                iter,
                trace,
                format!("only {} correspondences in iteration {iter}", pairs.len()),
            ));
        }

        let terms = par_map(pairs.len(), threads, |i| {
            let p = &pairs[i];
            pair_terms(&p.a, &p.b, &p.cov_a, &p.cov_b, &pose)
        });
        let mut cost = 0.0;
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for t in terms {
            let Some(t) = t else {
                return Ok(failure(
                    seed,
                    pose,
                    iter,
                    trace,
                    "singular pair covariance".into(),
                ));
            };
            cost += t.cost;
            h += t.hessian;
            g += t.gradient;
        }
        if !cost.is_finite() {
            return Ok(failure(seed, pose, iter, trace, "non-finite cost".into()));
        }
        // cost is d^T W d; gradient and J^T W J are for that cost, so the
        // Gauss-Newton system is (J^T W J) x = -g / 2.
        let g = g / 2.0;

        let mut record = IterationTrace {
            correspondences: pairs.len(),
            cost,
            cost_after: cost,
            accepted: false,
            lambda,
            step_sq_norm: 0.0,
        };
        loop {
            let Some(step) = solve_damped(&h, &g, lambda) else {
                lambda *= 10.0;
                if lambda > MAX_LAMBDA {
                    break;
                }
                continue;
            };
            let step_sq = step.norm_squared();
            let candidate = (Pose::exp(&step) * pose).renormalized();
            let new_cost = total_cost(&pairs, &candidate, threads);
            record.lambda = lambda;
            record.step_sq_norm = step_sq;
            if new_cost <= cost {
                pose = candidate;
                record.accepted = true;
                record.cost_after = new_cost;
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            if step_sq < cfg.step_tolerance {
                // Rejected but already below tolerance: nothing left to gain.
                break;
            }
            lambda *= 10.0;
            if lambda > MAX_LAMBDA {
                break;
            }
        }
        let small = record.step_sq_norm < cfg.step_tolerance;
        trace.push(record);
        if small || !record.accepted {
            converged = true;
            break;
        }
    }

    if !pose.is_finite() {
        let n = trace.len();
        return Ok(failure(seed, pose, n, trace, "non-finite pose".into()));
    }
    let iterations = trace.len();
    let fit = fitness(source, target, &pose, cfg);
    let final_cost = trace.last().map_or(0.0, |t| t.cost_after);
    Ok(RegistrationResult {
        rotation_change: rotation_between(seed, &pose),
        pose,
        converged,
        iterations,
        final_cost,
        fitness: fit.value,
        correspondences: fit.inliers,
        failure: None,
        trace,
    })
}

/// Mean squared distance over inlier correspondences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fitness {
    /// `+inf` when there are no inliers.
    pub value: f64,
    pub inliers: usize,
}

impl Fitness {
    pub fn has_overlap(&self) -> bool {
        self.inliers > 0
    }
}

/// Inliers are source points with a valid normal whose nearest target
/// neighbor lies within `max_corr_dist`.
pub fn fitness<T: NormalTarget + ?Sized>(
    source: &PointCloud,
    target: &T,
    pose: &Pose,
    cfg: &GicpConfig,
) -> Fitness {
    let max_sq = cfg.max_corr_dist * cfg.max_corr_dist;
    let normals = source.normals();
    let valid = |i: usize| normals.is_none_or(|n| n[i].is_some());
    let pts = source.points();
    let hits = par_map(pts.len(), cfg.threads.max(1), |i| {
        if !valid(i) {
            return None;
        }
        target
            .nearest(&pose.transform_point(&pts[i]))
            .filter(|h| h.sq_dist <= max_sq)
            .map(|h| h.sq_dist)
    });
    let (sum, n) = hits
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    Fitness {
        value: if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        },
        inliers: n,
    }
}

/// Correspondences of `source` under `pose`, in source order.
pub fn correspondences<T: NormalTarget + ?Sized>(
    source: &PointCloud,
    target: &T,
    pose: &Pose,
    cfg: &GicpConfig,
) -> Result<Vec<Correspondence>> {
    let src = prepare_source(source, cfg)?;
    let max_sq = cfg.max_corr_dist * cfg.max_corr_dist;
    Ok(associate(&src, target, pose, max_sq, cfg.threads.max(1))
        .into_iter()
        .flatten()
        .map(|(i, h)| Correspondence {
            source_index: src[i].index,
            target_index: h.index,
            target_point: h.point,
            target_normal: h.normal,
            sq_dist: h.sq_dist,
        })
        .collect())
}

/// Whether a scan-to-map result may replace its seed. Always true with the
/// gate switched off.
pub fn rotational_gate(result: &RegistrationResult, cfg: &GicpConfig) -> bool {
    !cfg.rotational_gate || result.rotation_change <= cfg.rot_fitness_threshold
}
