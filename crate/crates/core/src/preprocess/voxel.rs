use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Leaf-size controller state for the adaptive voxel filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveVoxelState {
    /// Current leaf size in meters.
    pub d_leaf: f64,
    pub n_desired: usize,
    pub d_min: f64,
    pub d_max: f64,
    /// Damping exponent; 1.0 is the plain proportional law.
    pub alpha: f64,
}

impl AdaptiveVoxelState {
    pub fn new(d_init: f64, n_desired: usize, d_min: f64, d_max: f64, alpha: f64) -> Result<Self> {
        if !(d_min > 0.0 && d_min <= d_max && d_max.is_finite()) {
            return Err(Error::invalid(format!(
                "bad leaf clamps [{d_min}, {d_max}]"
            )));
        }
        if !(d_init >= d_min && d_init <= d_max) {
            return Err(Error::invalid(format!(
                "initial leaf {d_init} outside [{d_min}, {d_max}]"
            )));
        }
        if n_desired == 0 {
            return Err(Error::invalid("n_desired must be positive"));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            d_leaf: d_init,
            n_desired,
            d_min,
            d_max,
            alpha,
        })
    }

    /// `clamp(d_leaf * (n_scan / n_desired)^alpha, d_min, d_max)`.
    pub fn next_leaf(&self, n_scan: usize) -> f64 {
        let ratio = n_scan as f64 / self.n_desired as f64;
        (self.d_leaf * ratio.powf(self.alpha)).clamp(self.d_min, self.d_max)
    }
}

#[derive(Default)]
struct Cell {
    sum: Point3,
    t_sum: f64,
    count: usize,
}

/// Replaces the points of each occupied `leaf`-sized cell by their centroid.
///
/// Cells are indexed by `floor(coordinate / leaf)` and emitted in order of
/// first occupancy. Timestamps are averaged; normals are dropped.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> PointCloud {
    assert!(leaf > 0.0, "voxel leaf must be positive");
    let mut lookup: HashMap<[i64; 3], usize> = HashMap::with_capacity(cloud.len());
    let mut cells: Vec<Cell> = Vec::new();
    let stamps = cloud.timestamps();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = [
            (p.x / leaf).floor() as i64,
            (p.y / leaf).floor() as i64,
            (p.z / leaf).floor() as i64,
        ];
        let slot = *lookup.entry(key).or_insert_with(|| {
            cells.push(Cell::default());
            cells.len() - 1
        });
        let c = &mut cells[slot];
        c.sum += p;
        c.count += 1;
        if let Some(ts) = stamps {
            c.t_sum += ts[i];
        }
    }
    let points = cells.iter().map(|c| c.sum / c.count as f64).collect();
    let out = PointCloud::new(points).with_frame_id(cloud.frame_id());
    match stamps {
        Some(_) => out
            .with_timestamps(cells.iter().map(|c| c.t_sum / c.count as f64).collect())
            .expect("one stamp per cell"),
        None => out,
    }
}

/// Downsamples at the current leaf size, then feeds the output count back
/// into the leaf size for the next scan.
pub fn adaptive_voxel_filter(
    cloud: &PointCloud,
    state: &AdaptiveVoxelState,
) -> (PointCloud, AdaptiveVoxelState) {
    if cloud.is_empty() {
        return (cloud.clone(), *state);
    }
    let filtered = voxel_downsample(cloud, state.d_leaf);
    let next = AdaptiveVoxelState {
        d_leaf: state.next_leaf(filtered.len()),
        ..*state
    };
    (filtered, next)
}
