//! End-to-end acceptance suite. Every criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use loam_kit::config::Config;
use loam_kit::eval::{self, simulate_dataset, Runner};
use loam_kit::geometry::{
    covariance_from_normal, covariance_from_normal_explicit, se3_apply, Normal3, Point3,
    PointCloud, Pose,
};
use loam_kit::index::{Aabb, IncrementalKdTree, Neighbor};
use loam_kit::map::{MapBackendKind, MapConfig, MapStore};
use loam_kit::preprocess::{adaptive_voxel_filter, AdaptiveVoxelState};
use loam_kit::registration::{
    gicp_align, pair_cost, pair_terms, CovarianceModel, GicpConfig, ScanTarget,
};
use loam_kit::sim::LoopCourse;
use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize()
}

fn random_pose(rng: &mut impl Rng, max_t: f64, max_deg: f64) -> Pose {
    let rot =
        UnitQuaternion::from_scaled_axis(unit(rng) * rng.random_range(0.0..max_deg).to_radians());
    Pose::new(rot, unit(rng) * rng.random_range(0.0..max_t))
}

/// Jittered grid samples on the six faces of a box. Normals point inward,
/// or outward when `outside` is set.
fn box_faces(
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    step: f64,
    outside: bool,
    rng: &mut impl Rng,
    out: &mut Vec<(Point3, Normal3)>,
) {
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for (side, wall) in [(1.0, lo[axis]), (-1.0, hi[axis])] {
            let mut n = Vector3::zeros();
            n[axis] = if outside { -side } else { side };
            let mut a = lo[u];
            while a < hi[u] {
                let mut b = lo[v];
                while b < hi[v] {
                    let mut p = Vector3::zeros();
                    p[axis] = wall;
                    p[u] = (a + rng.random_range(0.0..step)).min(hi[u]);
                    p[v] = (b + rng.random_range(0.0..step)).min(hi[v]);
                    out.push((p, Normal3::new(n).unwrap()));
                    b += step;
                }
                a += step;
            }
        }
    }
}

/// Densely sampled furnished room, constrained in all six directions, in the
/// frame of a sensor 1.2 m above the floor.
fn dense_room(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    box_faces(
        Vector3::new(-2.5, -2.0, 0.0),
        Vector3::new(2.5, 2.0, 2.6),
        0.08,
        false,
        &mut rng,
        &mut samples,
    );
    for (lo, hi) in [
        (Vector3::new(0.8, 0.4, 0.0), Vector3::new(1.8, 1.2, 0.8)),
        (Vector3::new(-2.0, -1.5, 0.0), Vector3::new(-1.2, -0.4, 1.5)),
        (Vector3::new(0.2, -1.6, 0.0), Vector3::new(0.5, -1.3, 2.6)),
    ] {
        box_faces(lo, hi, 0.05, true, &mut rng, &mut samples);
    }
    let sensor = Vector3::new(0.0, 0.0, 1.2);
    let (points, normals): (Vec<_>, Vec<_>) =
        samples.into_iter().map(|(p, n)| (p - sensor, n)).unzip();
    PointCloud::new(points).with_valid_normals(normals).unwrap()
}

/// Independent Gaussian jitter on every coordinate; normals are kept.
fn jitter(cloud: &PointCloud, sigma: f64, rng: &mut impl Rng) -> PointCloud {
    let points = cloud
        .points()
        .iter()
        .map(|p| p + Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    PointCloud::new(points)
        .with_normals(cloud.normals().unwrap().to_vec())
        .unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_pair, mut worst_eig) = (0.0f64, 0.0f64);
    for i in 0..10_000 {
        let eps = if i % 2 == 0 {
            1e-3
        } else {
            rng.random_range(1e-6..0.9)
        };
        let n = unit(&mut rng);
        let closed = covariance_from_normal(&Normal3::new(n).unwrap(), eps)
            .unwrap()
            .0;
        let explicit = covariance_from_normal_explicit(&Normal3::new(n).unwrap(), eps)
            .unwrap()
            .0;
        // Eigen-reconstruction from a Gram-Schmidt basis seeded by a random vector.
        let mut seed = unit(&mut rng);
        while seed.cross(&n).norm() < 0.1 {
            seed = unit(&mut rng);
        }
        let u = (seed - n * n.dot(&seed)).normalize();
        let w = n.cross(&u);
        let q = Matrix3::from_columns(&[n, u, w]);
        let eigen = q * Matrix3::from_diagonal(&Vector3::new(eps, 1.0, 1.0)) * q.transpose();
        for (a, b) in [(&closed, &explicit), (&closed, &eigen), (&explicit, &eigen)] {
            worst_pair = worst_pair.max((a - b).amax());
        }
        let mut values: Vec<f64> = SymmetricEigen::new(closed)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        for (got, want) in values.iter().zip([eps, 1.0, 1.0]) {
            worst_eig = worst_eig.max((got - want).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_pair <= 1e-12 && worst_eig <= 1e-9 && secs < 5.0,
        format!("max pairwise {worst_pair:.2e}, max eigenvalue error {worst_eig:.2e}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let clouds: Vec<PointCloud> = (0..5).map(dense_room).collect();
    let closed_cfg = GicpConfig::default();
    let explicit_cfg = GicpConfig {
        covariance: CovarianceModel::ExplicitBasis,
        ..GicpConfig::default()
    };
    let (mut worst_cost, mut worst_t, mut worst_r) = (0.0f64, 0.0f64, 0.0f64);
    let mut length_mismatch = 0;
    for i in 0..50 {
        let target_cloud = &clouds[i % clouds.len()];
        let truth = random_pose(&mut rng, 0.2, 10.0);
        let source = jitter(&se3_apply(&truth.inverse(), target_cloud), 0.005, &mut rng);
        let target = ScanTarget::new(target_cloud).unwrap();
        let a = gicp_align(&source, &target, &Pose::identity(), &closed_cfg).unwrap();
        let b = gicp_align(&source, &target, &Pose::identity(), &explicit_cfg).unwrap();
        if a.trace.len() != b.trace.len() {
            length_mismatch += 1;
        }
        for (x, y) in a.trace.iter().zip(&b.trace) {
            for (p, q) in [(x.cost, y.cost), (x.cost_after, y.cost_after)] {
                worst_cost = worst_cost.max((p - q).abs() / p.abs().max(1e-300));
            }
        }
        let (dt, dr) = a.pose.difference(&b.pose);
        worst_t = worst_t.max(dt);
        worst_r = worst_r.max(dr.to_degrees());
    }
    check(
        length_mismatch == 0 && worst_cost <= 1e-10 && worst_t <= 1e-9 && worst_r <= 1e-7,
        format!(
            "max relative cost gap {worst_cost:.2e}, pose gap {worst_t:.2e} m / {worst_r:.2e} deg, \
             {length_mismatch} trace length mismatches"
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let clouds: Vec<PointCloud> = (10..15).map(dense_room).collect();
    let cfg = GicpConfig::default();
    let (mut worst_t, mut worst_r, mut max_iter, mut failures) = (0.0f64, 0.0f64, 0, 0);
    for i in 0..100 {
        let target_cloud = &clouds[i % clouds.len()];
        let truth = random_pose(&mut rng, 0.2, 10.0);
        let source = se3_apply(&truth.inverse(), target_cloud);
        let target = ScanTarget::new(target_cloud).unwrap();
        let r = gicp_align(&source, &target, &Pose::identity(), &cfg).unwrap();
        let (dt, dr) = r.pose.difference(&truth);
        worst_t = worst_t.max(dt);
        worst_r = worst_r.max(dr.to_degrees());
        max_iter = max_iter.max(r.iterations);
        if !r.converged || dt > 1e-3 || dr.to_degrees() > 0.1 || r.iterations > 20 {
            failures += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        failures == 0 && secs < 60.0,
        format!(
            "{failures}/100 failed, worst {worst_t:.2e} m / {worst_r:.2e} deg, \
             max {max_iter} iterations, {secs:.1} s"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut samples = 0;
    while samples < 500 {
        let pose = random_pose(&mut rng, 1.0, 30.0);
        let a = Point3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let b = pose.transform_point(&a) + unit(&mut rng) * rng.random_range(0.0..0.2);
        let eps = rng.random_range(1e-3..0.5);
        let cov_a = covariance_from_normal(&Normal3::new(unit(&mut rng)).unwrap(), eps)
            .unwrap()
            .0;
        let cov_b = covariance_from_normal(&Normal3::new(unit(&mut rng)).unwrap(), eps)
            .unwrap()
            .0;
        let terms = pair_terms(&a, &b, &cov_a, &cov_b, &pose).unwrap();
        let mut fd = Vector6::zeros();
        for k in 0..6 {
            let mut xi = Vector6::zeros();
            xi[k] = h;
            let plus = pair_cost(&a, &b, &cov_a, &cov_b, &(Pose::exp(&xi) * pose)).unwrap();
            let minus = pair_cost(&a, &b, &cov_a, &cov_b, &(Pose::exp(&-xi) * pose)).unwrap();
            fd[k] = (plus - minus) / (2.0 * h);
        }
        let scale = terms.gradient.norm();
        if scale < 1e-3 {
            continue;
        }
        worst = worst.max((terms.gradient - fd).norm() / scale);
        samples += 1;
    }
    check(
        worst <= 1e-4,
        format!("{samples} samples, max relative gradient error {worst:.2e}"),
    )
}

/// `count` points scattered uniformly over the surfaces of a 10 x 8 x 3 room.
fn surface_sample(count: usize, rng: &mut impl Rng) -> PointCloud {
    let (lx, ly, lz) = (10.0, 8.0, 3.0);
    let faces = [lx * ly, lx * ly, lx * lz, lx * lz, ly * lz, ly * lz];
    let total: f64 = faces.iter().sum();
    let points = (0..count)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut face = 0;
            while pick > faces[face] && face < 5 {
                pick -= faces[face];
                face += 1;
            }
            let (u, v) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            match face {
                0 => Point3::new(u * lx, v * ly, 0.0),
                1 => Point3::new(u * lx, v * ly, lz),
                2 => Point3::new(u * lx, 0.0, v * lz),
                3 => Point3::new(u * lx, ly, v * lz),
                4 => Point3::new(0.0, u * ly, v * lz),
                _ => Point3::new(lx, u * ly, v * lz),
            }
        })
        .collect();
    PointCloud::new(points)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut details = Vec::new();
    let mut ok = true;
    for n_desired in [1000usize, 3000, 10000] {
        let mut state = AdaptiveVoxelState::new(0.25, n_desired, 0.01, 2.0, 0.5).unwrap();
        // Sparse enough that the occupied-cell count tracks the raw density.
        let low = n_desired * 3 / 2;
        let mut settle = Vec::new();
        for raw in [low, low * 4, low] {
            let mut counts = Vec::new();
            for _ in 0..15 {
                let (out, next) = adaptive_voxel_filter(&surface_sample(raw, &mut rng), &state);
                counts.push(out.len());
                state = next;
            }
            let in_band = |n: usize| (n as f64 - n_desired as f64).abs() <= 0.2 * n_desired as f64;
            let first = counts
                .iter()
                .position(|&n| in_band(n))
                .unwrap_or(counts.len());
            let stays = counts[first..].iter().all(|&n| in_band(n));
            ok &= first <= 5 && stays;
            settle.push(format!("{first}{}", if stays { "" } else { "!" }));
        }
        details.push(format!(
            "N={n_desired}: settles after [{}] frames",
            settle.join(", ")
        ));
    }

    // Exact properties of the leaf law.
    let mut violations = 0;
    for _ in 0..100_000 {
        let d_min = rng.random_range(0.01..0.2);
        let d_max = d_min + rng.random_range(0.0..3.0);
        let s = AdaptiveVoxelState::new(
            rng.random_range(d_min..=d_max),
            rng.random_range(1..100_000),
            d_min,
            d_max,
            rng.random_range(0.05..=1.0),
        )
        .unwrap();
        if s.next_leaf(s.n_desired) != s.d_leaf {
            violations += 1;
        }
        let (a, b) = (rng.random_range(0..200_000), rng.random_range(0..200_000));
        let (lo, hi) = (a.min(b), a.max(b));
        if s.next_leaf(lo) > s.next_leaf(hi) {
            violations += 1;
        }
    }
    details.push(format!("{violations} fixed-point/monotonicity violations"));
    check(ok && violations == 0, details.join("; "))
}

/// Brute-force stand-in for every spatial index under test.
#[derive(Default)]
struct Oracle {
    points: Vec<(u64, Point3)>,
    next_id: u64,
}

impl Oracle {
    fn insert(&mut self, p: Point3) {
        self.points.push((self.next_id, p));
        self.next_id += 1;
    }

    fn inside(b: &Aabb, p: &Point3) -> bool {
        (0..3).all(|i| b.min[i] <= p[i] && p[i] <= b.max[i])
    }

    fn delete_box(&mut self, b: &Aabb) {
        self.points.retain(|(_, p)| !Self::inside(b, p));
    }

    fn delete_outside(&mut self, b: &Aabb) {
        self.points.retain(|(_, p)| Self::inside(b, p));
    }

    fn ranked(&self, q: &Point3) -> Vec<(f64, u64, Point3)> {
        let mut v: Vec<(f64, u64, Point3)> = self
            .points
            .iter()
            .map(|(id, p)| ((p - q).norm_squared(), *id, *p))
            .collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        v
    }

    fn knn(&self, q: &Point3, k: usize) -> Vec<(f64, u64, Point3)> {
        let mut v = self.ranked(q);
        v.truncate(k);
        v
    }

    fn radius(&self, q: &Point3, r: f64) -> Vec<(f64, u64, Point3)> {
        self.ranked(q)
            .into_iter()
            .filter(|(d, _, _)| *d <= r * r)
            .collect()
    }
}

fn flatten<T>(v: &[Neighbor<T>]) -> Vec<(f64, u64, Point3)> {
    v.iter().map(|n| (n.sq_dist, n.id, n.point)).collect()
}

/// Random point near `center`; every third one snapped to a coarse grid so
/// equal distances occur and tie-breaking is exercised.
fn index_point(rng: &mut impl Rng, center: &Point3, spread: f64) -> Point3 {
    let p = center + Point3::from_fn(|_, _| rng.random_range(-spread..spread));
    if rng.random_range(0..3) == 0 {
        p.map(|c| (c * 2.0).round() / 2.0)
    } else {
        p
    }
}

fn random_box(rng: &mut impl Rng, center: &Point3, spread: f64) -> Aabb {
    let a = index_point(rng, center, spread);
    let half = Point3::from_fn(|_, _| rng.random_range(0.5..4.0));
    Aabb::new(a - half, a + half)
}

fn ikd_sequence(seed: u64) -> std::result::Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin = Point3::zeros();
    let mut oracle = Oracle::default();
    let initial: Vec<Point3> = (0..200)
        .map(|_| index_point(&mut rng, &origin, 10.0))
        .collect();
    for p in &initial {
        oracle.insert(*p);
    }
    let mut tree = IncrementalKdTree::build(initial.iter().map(|p| (*p, ())));
    let mut ops = 0;
    while ops < 1200 {
        ops += 1;
        let q = index_point(&mut rng, &origin, 12.0);
        match rng.random_range(0..100) {
            0..=39 => {
                tree.insert(q, ());
                oracle.insert(q);
            }
            40..=44 => {
                let b = random_box(&mut rng, &origin, 10.0);
                tree.delete_box(&b);
                oracle.delete_box(&b);
            }
            45..=46 => {
                let b = random_box(&mut rng, &origin, 4.0);
                let b = Aabb::new(b.min * 2.5, b.max * 2.5);
                tree.delete_outside(&b);
                oracle.delete_outside(&b);
            }
            47 => {
                tree.rebuild_if_needed();
            }
            48..=75 => {
                let k = rng.random_range(1..12);
                if flatten(&tree.knn(&q, k)) != oracle.knn(&q, k) {
                    return Err(format!("ikd seed {seed}: knn mismatch at op {ops}"));
                }
            }
            _ => {
                let r = rng.random_range(0.1..3.0);
                if flatten(&tree.radius_search(&q, r)) != oracle.radius(&q, r) {
                    return Err(format!("ikd seed {seed}: radius mismatch at op {ops}"));
                }
            }
        }
        if tree.len() != oracle.points.len() {
            return Err(format!("ikd seed {seed}: size mismatch at op {ops}"));
        }
        tree.audit()
            .map_err(|e| format!("ikd seed {seed}: audit failed at op {ops}: {e}"))?;
    }
    Ok(ops)
}

fn map_sequence(seed: u64, backend: MapBackendKind) -> std::result::Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = MapConfig {
        backend,
        window_half_extent: 10.0,
        slide_margin: Some(2.0),
        ..MapConfig::default()
    };
    let mut robot = Point3::zeros();
    let mut map = MapStore::new(config, robot).unwrap();
    let mut oracle = Oracle::default();
    let mut center = robot;
    let (half, margin) = (10.0, 2.0);
    let mut ops = 0;
    while ops < 1200 {
        ops += 1;
        let q = index_point(&mut rng, &robot, 12.0);
        match rng.random_range(0..100) {
            0..=29 => {
                let count = rng.random_range(1..40);
                let pts: Vec<Point3> = (0..count)
                    .map(|_| index_point(&mut rng, &robot, 14.0))
                    .collect();
                let normals = vec![Normal3::z_axis(); count];
                map.insert_scan(
                    &PointCloud::new(pts.clone())
                        .with_valid_normals(normals)
                        .unwrap(),
                )
                .unwrap();
                let window = Aabb::cube(&center, half);
                for p in pts.into_iter().filter(|p| Oracle::inside(&window, p)) {
                    oracle.insert(p);
                }
            }
            30..=44 => {
                robot += Point3::from_fn(|_, _| rng.random_range(-3.0..3.0));
                let slid = map.slide_window(&robot);
                let near = (0..3).any(|i| (robot[i] - center[i]).abs() >= half - margin);
                if slid != near {
                    return Err(format!(
                        "{backend} seed {seed}: slide decision differs at op {ops}"
                    ));
                }
                if near {
                    center = robot;
                    oracle.delete_outside(&Aabb::cube(&center, half));
                }
            }
            45..=49 => match rng.random_range(0..2) {
                0 => map.force_rebuild(),
                _ => map.wait_for_rebuild(),
            },
            50..=79 => {
                let k = rng.random_range(1..12);
                if flatten(&map.query_neighbors(&q, k)) != oracle.knn(&q, k) {
                    return Err(format!("{backend} seed {seed}: knn mismatch at op {ops}"));
                }
            }
            _ => {
                let r = rng.random_range(0.1..3.0);
                if flatten(&map.radius_search(&q, r)) != oracle.radius(&q, r) {
                    return Err(format!(
                        "{backend} seed {seed}: radius mismatch at op {ops}"
                    ));
                }
            }
        }
        if map.len() != oracle.points.len() {
            return Err(format!("{backend} seed {seed}: size mismatch at op {ops}"));
        }
    }
    Ok(ops)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut ops = 0;
    for seed in 0..20 {
        ops += ikd_sequence(600 + seed)?;
        ops += map_sequence(700 + seed, MapBackendKind::Ikd)?;
        ops += map_sequence(800 + seed, MapBackendKind::Mto)?;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        secs < 120.0,
        format!("60 sequences, {ops} ops identical to brute force, {secs:.1} s"),
    )
}

fn memory_config(bounded: bool) -> Config {
    let mut cfg = eval::preset("corridor-loop").unwrap();
    cfg.sim.frames = 500;
    cfg.sim.speed = 3.0;
    cfg.sim.lidar.horizontal_resolution = 0.4f64.to_radians();
    cfg.map.backend = MapBackendKind::Mto;
    cfg.map.window_half_extent = 25.0;
    cfg.map.bounded = bounded;
    cfg
}

fn criterion_7() -> Outcome {
    let cfg = memory_config(true);
    let dataset = simulate_dataset(&cfg).map_err(|e| e.to_string())?;
    let mut runner = Runner::new(cfg.pipeline(), &dataset).map_err(|e| e.to_string())?;
    // Every point ever accepted by the map, in world coordinates.
    let mut replica: Vec<Point3> = Vec::new();
    let (mut over, mut not_compacted, mut slides, mut peak, mut exact) = (0, 0, 0, 0, 0);
    let mut bounded_alive = Vec::new();
    while !runner.is_done() {
        let before = runner.state().map().unwrap().window().bounds();
        let report = runner.step().map_err(|e| e.to_string())?.unwrap().clone();
        let scan = runner.state().last_scan().unwrap();
        let normals = scan.normals().unwrap();
        for (p, n) in scan.points().iter().zip(normals) {
            let w = report.pose.transform_point(p);
            if n.is_some() && Oracle::inside(&before, &w) {
                replica.push(w);
            }
        }
        let map = runner.state_mut().map_mut().unwrap();
        let window = map.window().bounds();
        let in_window = replica
            .iter()
            .filter(|p| Oracle::inside(&window, p))
            .count();
        let alive = map.memory_stats().alive;
        over += usize::from(alive > in_window);
        exact += usize::from(alive == in_window);
        if report.slid {
            slides += 1;
            map.wait_for_rebuild();
            let stats = map.memory_stats();
            not_compacted += usize::from(stats.allocated != stats.alive);
        }
        peak = peak.max(alive);
        bounded_alive.push(alive);
    }

    let cfg = memory_config(false);
    let dataset = simulate_dataset(&cfg).map_err(|e| e.to_string())?;
    let mut runner = Runner::new(cfg.pipeline(), &dataset).map_err(|e| e.to_string())?;
    let mut unbounded = Vec::new();
    while let Some(r) = runner.step().map_err(|e| e.to_string())? {
        unbounded.push(r.map.alive);
    }
    let monotone = unbounded.windows(2).all(|w| w[0] <= w[1]);
    let ratio = *unbounded.last().unwrap() as f64 / *bounded_alive.last().unwrap() as f64;
    check(
        over == 0 && not_compacted == 0 && slides > 0 && monotone && ratio >= 2.0,
        format!(
            "{over} frames above replica ({exact}/500 equal), {slides} slides, \
             {not_compacted} not compacted, bounded peak {peak} final {}, \
             unbounded final {} (monotone {monotone}), ratio {ratio:.2}",
            bounded_alive.last().unwrap(),
            unbounded.last().unwrap()
        ),
    )
}

/// Configuration used for the accuracy runs: a tight plane covariance and a
/// planarity cut on normals.
fn accuracy_config(preset: &str, frames: usize) -> Config {
    let mut cfg = eval::preset(preset).unwrap();
    cfg.sim.frames = frames;
    cfg.gicp.epsilon = 1e-4;
    cfg.normals.max_surface_variation = Some(0.01);
    cfg
}

fn run_accuracy(cfg: &Config) -> std::result::Result<eval::ApeStats, String> {
    let dataset = simulate_dataset(cfg).map_err(|e| e.to_string())?;
    let out = Runner::new(cfg.pipeline(), &dataset)
        .and_then(Runner::finish)
        .map_err(|e| e.to_string())?;
    out.ape.ok_or_else(|| "no APE".to_string())
}

fn criterion_8() -> Outcome {
    let corridor = run_accuracy(&accuracy_config("corridor", 100))?;

    let mut cfg = accuracy_config("corridor-loop", 200);
    cfg.sim.course = LoopCourse {
        length: 10.0,
        width: 6.0,
        corner_radius: 3.0,
        half_width: 2.0,
    };
    cfg.sim.speed = 1.0;
    let looped = run_accuracy(&cfg)?;

    let still = run_accuracy(&accuracy_config("static", 100))?;

    let good = |a: &eval::ApeStats| a.final_error_pct() < 1.0 && a.mean_m < 0.05;
    check(
        good(&corridor) && good(&looped) && still.max_m < 1e-4,
        format!(
            "corridor {:.3}% / mean {:.4} m over {:.1} m; loop {:.3}% / mean {:.4} m over {:.1} m; \
             static max drift {:.2e} m",
            corridor.final_error_pct(),
            corridor.mean_m,
            corridor.distance_m,
            looped.final_error_pct(),
            looped.mean_m,
            looped.distance_m,
            still.max_m
        ),
    )
}

fn criterion_9() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut summaries = Vec::new();
    for dir in &dirs {
        let mut cfg = eval::preset("corridor-loop").unwrap();
        cfg.sim.frames = 60;
        cfg.sim.seed = 9;
        cfg.map.backend = MapBackendKind::Mto;
        cfg.run.out = dir.path().to_path_buf();
        eval::run(&cfg).map_err(|e| e.to_string())?;
        summaries.push(std::fs::read(dir.path().join("summary.json")).unwrap());
    }
    check(
        summaries[0] == summaries[1] && !summaries[0].is_empty(),
        format!(
            "summary.json {} bytes, identical: {}",
            summaries[0].len(),
            summaries[0] == summaries[1]
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let config = MapConfig {
        backend: MapBackendKind::Mto,
        window_half_extent: 10.0,
        ..MapConfig::default()
    };
    let mut map = MapStore::new(config, Point3::zeros()).unwrap();
    let mut oracle = Oracle::default();
    let origin = Point3::zeros();
    let insert = |map: &mut MapStore, oracle: &mut Oracle, rng: &mut ChaCha8Rng| {
        let pts: Vec<Point3> = (0..200).map(|_| index_point(rng, &origin, 9.0)).collect();
        for p in &pts {
            oracle.insert(*p);
        }
        let n = vec![Normal3::z_axis(); pts.len()];
        map.insert_scan(&PointCloud::new(pts).with_valid_normals(n).unwrap())
            .unwrap();
    };
    let (mut partial, mut regressions, mut wrong, mut lost, mut queries) = (0, 0, 0, 0, 0);
    let mut last_generation = 0;
    for _ in 0..100 {
        insert(&mut map, &mut oracle, &mut rng);
        let before: Vec<(u64, Point3)> = map.alive_points();
        map.force_rebuild();
        for _ in 0..10 {
            insert(&mut map, &mut oracle, &mut rng);
            let q = index_point(&mut rng, &origin, 10.0);
            let (hits, generation, complete) = map.query_with_generation(&q, 5);
            queries += 1;
            partial += usize::from(!complete);
            regressions += usize::from(generation < last_generation);
            last_generation = generation;
            wrong += usize::from(flatten(&hits) != oracle.knn(&q, 5));
        }
        map.wait_for_rebuild();
        let after: BTreeMap<u64, Point3> = map.alive_points().into_iter().collect();
        lost += before
            .iter()
            .filter(|(id, p)| after.get(id) != Some(p))
            .count();
    }
    let status = map.mto_status().unwrap();
    let audit = status.swaps == 100
        && status.active_generation == 100
        && status.requested_generation == 100
        && status.active_complete
        && !status.rebuild_in_flight;
    check(
        partial == 0 && regressions == 0 && wrong == 0 && lost == 0 && audit,
        format!(
            "{queries} queries: {partial} partial, {regressions} generation regressions, \
             {wrong} wrong answers; {lost} points lost across swaps; status {status:?}"
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("covariance equivalence", criterion_1),
        ("solver-path equivalence", criterion_2),
        ("transform recovery", criterion_3),
        ("gradient correctness", criterion_4),
        ("adaptive voxel regulation", criterion_5),
        ("index oracle equivalence", criterion_6),
        ("bounded memory", criterion_7),
        ("odometry accuracy", criterion_8),
        ("determinism", criterion_9),
        ("octree swap contract", criterion_10),
    ];
    // ACCEPTANCE_ONLY=3,7 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{tag}] {:>2}. {name} ({secs:.1} s): {detail}", i + 1);
        if outcome.is_err() {
            failed.push(i + 1);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
