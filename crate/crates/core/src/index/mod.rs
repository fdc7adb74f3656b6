//! Nearest-neighbor machinery: a frozen kd-tree for correspondence search,
//! an incremental kd-tree with lazy deletion for maps, and a brute-force
//! reference index.
//!
//! All indices order results by `(squared distance, id)`, where `id` is the
//! insertion order, so equal-distance ties resolve the same way everywhere.

mod brute;
mod ikd;
mod static_kdtree;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub use brute::BruteForceIndex;
pub use ikd::{IncrementalKdTree, RebuildPolicy};
pub use static_kdtree::StaticKdTree;

use crate::geometry::Point3;

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// Cube of half side `half_extent` around `center`.
    pub fn cube(center: &Point3, half_extent: f64) -> Self {
        let h = Point3::repeat(half_extent);
        Self::new(center - h, center + h)
    }

    pub fn empty() -> Self {
        Self::new(
            Point3::repeat(f64::INFINITY),
            Point3::repeat(f64::NEG_INFINITY),
        )
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn merge(&mut self, other: &Aabb) {
        self.min = self.min.inf(&other.min);
        self.max = self.max.sup(&other.max);
    }

    #[inline]
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// True if `self` lies entirely inside `other`.
    #[inline]
    pub fn is_inside(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] >= other.min[i] && self.max[i] <= other.max[i])
    }

    #[inline]
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && self.max[i] >= other.min[i])
    }

    /// Squared distance from `p` to the box (0 inside).
    #[inline]
    pub fn sq_dist(&self, p: &Point3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }

    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }
}

/// One query result.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub point: Point3,
    pub sq_dist: f64,
    /// Insertion order (or source index for frozen trees).
    pub id: u64,
    pub payload: T,
}

#[inline]
pub(crate) fn sq_dist(a: &Point3, b: &Point3) -> f64 {
    (a - b).norm_squared()
}

/// Sorts by `(sq_dist, id)`.
pub(crate) fn sort_neighbors<T>(v: &mut [Neighbor<T>]) {
    v.sort_by(|a, b| a.sq_dist.total_cmp(&b.sq_dist).then(a.id.cmp(&b.id)));
}

struct HeapItem<T>(Neighbor<T>);

impl<T> HeapItem<T> {
    fn key(&self) -> (f64, u64) {
        (self.0.sq_dist, self.0.id)
    }
}

impl<T> PartialEq for HeapItem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T> Eq for HeapItem<T> {}

impl<T> PartialOrd for HeapItem<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for HeapItem<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        let (da, ia) = self.key();
        let (db, ib) = other.key();
        da.total_cmp(&db).then(ia.cmp(&ib))
    }
}

/// Bounded max-heap keeping the `k` smallest `(sq_dist, id)` candidates.
pub(crate) struct KnnHeap<T> {
    k: usize,
    heap: BinaryHeap<HeapItem<T>>,
}

impl<T> KnnHeap<T> {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub(crate) fn is_full(&self) -> bool {
        self.heap.len() >= self.k
    }

    /// A region at squared distance `bound` can be skipped when this is true.
    #[inline]
    pub(crate) fn can_prune(&self, bound: f64) -> bool {
        self.is_full() && self.heap.peek().is_some_and(|w| bound > w.0.sq_dist)
    }

    #[inline]
    pub(crate) fn would_accept(&self, sq_dist: f64, id: u64) -> bool {
        if !self.is_full() {
            return self.k > 0;
        }
        let w = self.heap.peek().expect("full heap");
        sq_dist.total_cmp(&w.0.sq_dist).then(id.cmp(&w.0.id)) == Ordering::Less
    }

    pub(crate) fn push(&mut self, n: Neighbor<T>) {
        if !self.would_accept(n.sq_dist, n.id) {
            return;
        }
        self.heap.push(HeapItem(n));
        if self.heap.len() > self.k {
            self.heap.pop();
        }
    }

    pub(crate) fn into_sorted(self) -> Vec<Neighbor<T>> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|h| h.0)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aabb_closed_containment() {
        let b = Aabb::cube(&Point3::zeros(), 1.0);
        assert!(b.contains(&Point3::new(1.0, 0.0, 0.0)));
        assert!(!b.contains(&Point3::new(1.0 + 1e-12, 0.0, 0.0)));
        assert_eq!(b.sq_dist(&Point3::new(3.0, 0.0, 0.0)), 4.0);
        assert_eq!(b.sq_dist(&Point3::new(0.5, 0.5, 0.5)), 0.0);
    }

    #[test]
    fn heap_breaks_ties_by_id() {
        let mut h = KnnHeap::new(2);
        for id in [5u64, 1, 3] {
            h.push(Neighbor {
                point: Point3::zeros(),
                sq_dist: 1.0,
                id,
                payload: (),
            });
        }
        let ids: Vec<u64> = h.into_sorted().iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 3]);
    }
}
