//! Robot-centered bounded map.
//!
//! All points live inside a cube window. Once the robot comes within the
//! slide margin of the window boundary the window recenters on the robot
//! and everything outside it is dropped. Two interchangeable backends hold
//! the points:
//!
//! * [`MapBackendKind::Ikd`]: incremental kd-tree, points outside the new
//!   window are lazily labeled deleted.
//! * [`MapBackendKind::Mto`]: two octree buffers; a worker thread rebuilds
//!   the idle one around the robot and the two are swapped when it is done.
//!   Points outside the window are hidden from queries until then.
//!
//! Both backends assign ids in insertion order, so query results (including
//! tie order) are identical for identical operation sequences.

mod mto;
mod octree;

use std::mem::size_of;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use mto::{MtoOctree, MtoStatus};

use crate::error::{Error, Result};
use crate::geometry::{Normal3, Point3, PointCloud};
use crate::index::{Aabb, IncrementalKdTree, Neighbor};
use octree::MapEntry;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapBackendKind {
    Mto,
    Ikd,
}

impl FromStr for MapBackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mto" => Ok(Self::Mto),
            "ikd" => Ok(Self::Ikd),
            other => Err(Error::Config(format!("unknown map backend `{other}`"))),
        }
    }
}

impl std::fmt::Display for MapBackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mto => "mto",
            Self::Ikd => "ikd",
        })
    }
}

/// Axis-aligned cube window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapWindow {
    pub center: Point3,
    pub half_extent: f64,
}

impl MapWindow {
    pub fn new(center: Point3, half_extent: f64) -> Result<Self> {
        if !(half_extent > 0.0) {
            return Err(Error::invalid(format!(
                "window half extent must be positive, got {half_extent}"
            )));
        }
        Ok(Self {
            center,
            half_extent,
        })
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::cube(&self.center, self.half_extent)
    }

    /// True when `p` is within `margin` of the boundary, or outside.
    pub fn near_boundary(&self, p: &Point3, margin: f64) -> bool {
        (p - self.center).amax() >= self.half_extent - margin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    #[serde(rename = "map_backend")]
    pub backend: MapBackendKind,
    #[serde(rename = "window_half_extent_m")]
    pub window_half_extent: f64,
    /// Defaults to a fifth of the half extent.
    #[serde(rename = "slide_margin_m")]
    pub slide_margin: Option<f64>,
    #[serde(rename = "octree_leaf_m")]
    pub octree_leaf: f64,
    /// When false the window never slides and nothing is dropped.
    pub bounded: bool,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            backend: MapBackendKind::Ikd,
            window_half_extent: 25.0,
            slide_margin: None,
            octree_leaf: 0.01,
            bounded: true,
        }
    }
}

impl MapConfig {
    pub fn margin(&self) -> f64 {
        self.slide_margin.unwrap_or(self.window_half_extent / 5.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MemoryStats {
    pub alive: usize,
    /// Alive plus points still held in memory but no longer visible.
    pub allocated: usize,
    pub bytes: usize,
}

enum Backend {
    Ikd(IncrementalKdTree<Normal3>),
    Mto(Box<MtoOctree>),
}

pub struct MapStore {
    config: MapConfig,
    window: MapWindow,
    backend: Backend,
    next_id: u64,
    slides: usize,
    /// Whether the most recent slide ended with allocated == alive.
    last_slide_compacted: bool,
}

impl std::fmt::Debug for MapStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MapStore")
            .field("config", &self.config)
            .field("window", &self.window)
            .field("stats", &self.memory_stats())
            .finish()
    }
}

impl MapStore {
    pub fn new(config: MapConfig, center: Point3) -> Result<Self> {
        let window = MapWindow::new(center, config.window_half_extent)?;
        if !(config.octree_leaf > 0.0) {
            return Err(Error::invalid("octree leaf size must be positive"));
        }
        if !(config.margin() >= 0.0 && config.margin() < config.window_half_extent) {
            return Err(Error::invalid("slide margin must lie in [0, half extent)"));
        }
        let backend = match config.backend {
            MapBackendKind::Ikd => Backend::Ikd(IncrementalKdTree::new()),
            MapBackendKind::Mto => Backend::Mto(Box::new(MtoOctree::new(
                center,
                config.window_half_extent,
                config.octree_leaf,
            ))),
        };
        Ok(Self {
            config,
            window,
            backend,
            next_id: 0,
            slides: 0,
            last_slide_compacted: false,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn window(&self) -> &MapWindow {
        &self.window
    }

    pub fn slide_count(&self) -> usize {
        self.slides
    }

    pub fn last_slide_compacted(&self) -> bool {
        self.last_slide_compacted
    }

    fn filter(&self) -> Option<Aabb> {
        self.config.bounded.then(|| self.window.bounds())
    }

    /// Adds the points of a world-frame cloud that fall inside the window.
    /// Points without a valid normal are skipped. Returns how many were added.
    pub fn insert_scan(&mut self, cloud_world: &PointCloud) -> Result<usize> {
        let normals = cloud_world
            .normals()
            .ok_or_else(|| Error::invalid("map insertion needs a cloud with normals"))?;
        let filter = self.filter();
        let mut added = 0;
        for (p, n) in cloud_world.points().iter().zip(normals) {
            let Some(n) = n else { continue };
            if filter.as_ref().is_some_and(|f| !f.contains(p)) {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            match &mut self.backend {
                Backend::Ikd(t) => {
                    t.insert(*p, *n);
                }
                Backend::Mto(m) => m.insert(MapEntry {
                    point: *p,
                    normal: *n,
                    id,
                }),
            }
            added += 1;
        }
        Ok(added)
    }

    /// Recenters the window on the robot when it gets within the slide
    /// margin of the boundary. Returns whether a slide happened.
    pub fn slide_window(&mut self, robot_position: &Point3) -> bool {
        if let Backend::Mto(m) = &mut self.backend {
            m.poll();
        }
        if !self.config.bounded
            || !self
                .window
                .near_boundary(robot_position, self.config.margin())
        {
            return false;
        }
        self.window.center = *robot_position;
        let keep = self.window.bounds();
        self.last_slide_compacted = match &mut self.backend {
            Backend::Ikd(t) => {
                t.delete_outside(&keep);
                t.rebuild_if_needed()
            }
            Backend::Mto(m) => {
                m.start_rebuild(&keep);
                false
            }
        };
        self.slides += 1;
        true
    }

    /// Blocks until a pending octree rebuild has been swapped in. No-op for
    /// the kd-tree backend.
    pub fn wait_for_rebuild(&mut self) {
        let filter = self.filter();
        if let Backend::Mto(m) = &mut self.backend {
            m.wait_for_rebuild();
            self.last_slide_compacted = m.allocated() == m.count_inside(filter.as_ref());
        }
    }

    /// Starts a rebuild around the current window without sliding it.
    pub fn force_rebuild(&mut self) {
        let keep = self.window.bounds();
        match &mut self.backend {
            Backend::Ikd(t) => {
                t.delete_outside(&keep);
                t.compact();
            }
            Backend::Mto(m) => m.start_rebuild(&keep),
        }
    }

    /// Exact k nearest alive points with their stored normals.
    pub fn query_neighbors(&self, q: &Point3, k: usize) -> Vec<Neighbor<Normal3>> {
        match &self.backend {
            Backend::Ikd(t) => t.knn(q, k),
            Backend::Mto(m) => m.knn(q, k, self.filter().as_ref()),
        }
    }

    pub fn nearest(&self, q: &Point3) -> Option<Neighbor<Normal3>> {
        self.query_neighbors(q, 1).into_iter().next()
    }

    pub fn radius_search(&self, q: &Point3, r: f64) -> Vec<Neighbor<Normal3>> {
        match &self.backend {
            Backend::Ikd(t) => t.radius_search(q, r),
            Backend::Mto(m) => m.radius_search(q, r, self.filter().as_ref()),
        }
    }

    pub fn len(&self) -> usize {
        match &self.backend {
            Backend::Ikd(t) => t.len(),
            Backend::Mto(m) => m.count_inside(self.filter().as_ref()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn memory_stats(&self) -> MemoryStats {
        match &self.backend {
            Backend::Ikd(t) => MemoryStats {
                alive: t.len(),
                allocated: t.allocated(),
                bytes: t.allocated() * ikd_node_bytes(),
            },
            Backend::Mto(m) => MemoryStats {
                alive: m.count_inside(self.filter().as_ref()),
                allocated: m.allocated(),
                // entry plus its u32 slot in a leaf
                bytes: m.allocated() * (size_of::<MapEntry>() + size_of::<u32>()),
            },
        }
    }

    /// Generation info of the octree backend, `None` for the kd-tree.
    pub fn mto_status(&self) -> Option<MtoStatus> {
        match &self.backend {
            Backend::Mto(m) => Some(m.status()),
            Backend::Ikd(_) => None,
        }
    }

    /// kNN plus the generation and completeness flag of the answering
    /// octree buffer. Generation is 0 and the flag true for the kd-tree.
    pub fn query_with_generation(
        &self,
        q: &Point3,
        k: usize,
    ) -> (Vec<Neighbor<Normal3>>, u64, bool) {
        match &self.backend {
            Backend::Ikd(t) => (t.knn(q, k), 0, true),
            Backend::Mto(m) => m.knn_with_generation(q, k, self.filter().as_ref()),
        }
    }

    /// Alive points, in id order.
    pub fn alive_points(&self) -> Vec<(u64, Point3)> {
        let filter = self.filter();
        let mut v: Vec<(u64, Point3)> = match &self.backend {
            Backend::Ikd(t) => t
                .alive_items()
                .into_iter()
                .map(|(p, _, id)| (id, p))
                .collect(),
            Backend::Mto(m) => m
                .active_entries()
                .iter()
                .filter(|e| filter.as_ref().is_none_or(|f| f.contains(&e.point)))
                .map(|e| (e.id, e.point))
                .collect(),
        };
        v.sort_by_key(|(id, _)| *id);
        v
    }
}

fn ikd_node_bytes() -> usize {
    // point, normal, id, bbox, two child pointers, counters and flags
    size_of::<Point3>() * 3
        + size_of::<Normal3>()
        + size_of::<u64>()
        + 2 * size_of::<usize>() * 3
        + 8
}
