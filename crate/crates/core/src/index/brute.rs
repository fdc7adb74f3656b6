use super::{sort_neighbors, sq_dist, Aabb, Neighbor};
use crate::geometry::Point3;

#[derive(Clone, Debug)]
struct Entry<T> {
    point: Point3,
    payload: T,
    id: u64,
    alive: bool,
}

/// Flat list scanned linearly on every query. Exact by construction; used
/// as the reference the tree indices are checked against.
#[derive(Clone, Debug)]
pub struct BruteForceIndex<T> {
    entries: Vec<Entry<T>>,
    next_id: u64,
}

impl<T> Default for BruteForceIndex<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            next_id: 0,
        }
    }
}

impl<T: Clone> BruteForceIndex<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, point: Point3, payload: T) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.entries.push(Entry {
            point,
            payload,
            id,
            alive: true,
        });
        id
    }

    pub fn delete_box(&mut self, b: &Aabb) -> usize {
        self.delete_where(|p| b.contains(p))
    }

    pub fn delete_outside(&mut self, keep: &Aabb) -> usize {
        self.delete_where(|p| !keep.contains(p))
    }

    fn delete_where(&mut self, pred: impl Fn(&Point3) -> bool) -> usize {
        let mut n = 0;
        for e in self.entries.iter_mut().filter(|e| e.alive) {
            if pred(&e.point) {
                e.alive = false;
                n += 1;
            }
        }
        n
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|e| e.alive).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn alive_neighbors(&self, q: &Point3) -> impl Iterator<Item = Neighbor<T>> + '_ {
        let q = *q;
        self.entries
            .iter()
            .filter(|e| e.alive)
            .map(move |e| Neighbor {
                point: e.point,
                sq_dist: sq_dist(&e.point, &q),
                id: e.id,
                payload: e.payload.clone(),
            })
    }

    pub fn knn(&self, q: &Point3, k: usize) -> Vec<Neighbor<T>> {
        let mut all: Vec<_> = self.alive_neighbors(q).collect();
        sort_neighbors(&mut all);
        all.truncate(k);
        all
    }

    pub fn radius_search(&self, q: &Point3, r: f64) -> Vec<Neighbor<T>> {
        let r2 = r * r;
        let mut all: Vec<_> = self
            .alive_neighbors(q)
            .filter(|n| n.sq_dist <= r2)
            .collect();
        sort_neighbors(&mut all);
        all
    }

    pub fn alive_points(&self) -> impl Iterator<Item = (&Point3, &T)> {
        self.entries
            .iter()
            .filter(|e| e.alive)
            .map(|e| (&e.point, &e.payload))
    }
}
