use crate::geometry::{Normal3, Point3};
use crate::index::{sort_neighbors, sq_dist, Aabb, KnnHeap, Neighbor};

/// Leaf cells split once they hold more than this many points, unless the
/// children would be smaller than the leaf size.
const BUCKET: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct MapEntry {
    pub point: Point3,
    pub normal: Normal3,
    pub id: u64,
}

#[derive(Debug)]
enum OctNode {
    Leaf(Vec<u32>),
    Branch(Box<[OctNode; 8]>),
}

impl OctNode {
    fn empty_branch() -> Self {
        OctNode::Branch(Box::new(std::array::from_fn(|_| OctNode::Leaf(Vec::new()))))
    }
}

#[inline]
fn octant(center: &Point3, p: &Point3) -> usize {
    usize::from(p.x >= center.x)
        | usize::from(p.y >= center.y) << 1
        | usize::from(p.z >= center.z) << 2
}

#[inline]
fn child_center(center: &Point3, half: f64, i: usize) -> Point3 {
    let q = half / 2.0;
    let s = |bit: usize| if i & bit != 0 { q } else { -q };
    center + Point3::new(s(1), s(2), s(4))
}

/// Point-region octree over a flat entry buffer. Cells never get smaller
/// than `leaf_size`; a leaf at that size keeps any number of points.
#[derive(Debug)]
pub(crate) struct Octree {
    leaf_size: f64,
    entries: Vec<MapEntry>,
    root: OctNode,
    center: Point3,
    half: f64,
}

impl Octree {
    pub fn new(center: Point3, half: f64, leaf_size: f64) -> Self {
        Self {
            leaf_size,
            entries: Vec::new(),
            root: OctNode::Leaf(Vec::new()),
            center,
            half: half.max(leaf_size),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }

    pub fn clear(&mut self, center: Point3, half: f64) {
        self.entries.clear();
        self.root = OctNode::Leaf(Vec::new());
        self.center = center;
        self.half = half.max(self.leaf_size);
    }

    fn bounds(&self) -> Aabb {
        Aabb::cube(&self.center, self.half)
    }

    /// Doubles the root cube towards `p` until it is covered.
    fn grow_to(&mut self, p: &Point3) {
        while !self.bounds().contains(p) {
            let dir = (p - self.center).map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let new_center = self.center + dir * self.half;
            let old_root = std::mem::replace(&mut self.root, OctNode::empty_branch());
            let slot = octant(&new_center, &self.center);
            if let OctNode::Branch(children) = &mut self.root {
                children[slot] = old_root;
            }
            self.center = new_center;
            self.half *= 2.0;
        }
    }

    pub fn insert(&mut self, e: MapEntry) {
        self.grow_to(&e.point);
        let idx = self.entries.len() as u32;
        let p = e.point;
        self.entries.push(e);
        let (leaf_size, entries) = (self.leaf_size, &self.entries);
        let mut node = &mut self.root;
        let mut center = self.center;
        let mut half = self.half;
        loop {
            match node {
                OctNode::Branch(children) => {
                    let i = octant(&center, &p);
                    center = child_center(&center, half, i);
                    half /= 2.0;
                    node = &mut children[i];
                }
                OctNode::Leaf(ids) => {
                    ids.push(idx);
                    if ids.len() > BUCKET && half >= leaf_size {
                        let ids = std::mem::take(ids);
                        *node = split(ids, &center, entries);
                    }
                    return;
                }
            }
        }
    }

    pub fn knn(&self, q: &Point3, k: usize, filter: Option<&Aabb>) -> Vec<Neighbor<Normal3>> {
        if k == 0 || self.entries.is_empty() {
            return Vec::new();
        }
        let mut heap = KnnHeap::new(k);
        self.knn_rec(&self.root, &self.center, self.half, q, filter, &mut heap);
        heap.into_sorted()
    }

    fn knn_rec(
        &self,
        node: &OctNode,
        center: &Point3,
        half: f64,
        q: &Point3,
        filter: Option<&Aabb>,
        heap: &mut KnnHeap<Normal3>,
    ) {
        let cell = Aabb::cube(center, half);
        if heap.can_prune(cell.sq_dist(q)) || filter.is_some_and(|f| !cell.intersects(f)) {
            return;
        }
        match node {
            OctNode::Leaf(ids) => {
                for &i in ids {
                    let e = &self.entries[i as usize];
                    if filter.is_some_and(|f| !f.contains(&e.point)) {
                        continue;
                    }
                    let d = sq_dist(&e.point, q);
                    if heap.would_accept(d, e.id) {
                        heap.push(Neighbor {
                            point: e.point,
                            sq_dist: d,
                            id: e.id,
                            payload: e.normal,
                        });
                    }
                }
            }
            OctNode::Branch(children) => {
                let mut order: [(f64, usize); 8] = std::array::from_fn(|i| {
                    let c = child_center(center, half, i);
                    (Aabb::cube(&c, half / 2.0).sq_dist(q), i)
                });
                order.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (_, i) in order {
                    let c = child_center(center, half, i);
                    self.knn_rec(&children[i], &c, half / 2.0, q, filter, heap);
                }
            }
        }
    }

    pub fn radius_search(
        &self,
        q: &Point3,
        r: f64,
        filter: Option<&Aabb>,
    ) -> Vec<Neighbor<Normal3>> {
        let mut out = Vec::new();
        self.radius_rec(
            &self.root,
            &self.center,
            self.half,
            q,
            r * r,
            filter,
            &mut out,
        );
        sort_neighbors(&mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn radius_rec(
        &self,
        node: &OctNode,
        center: &Point3,
        half: f64,
        q: &Point3,
        r2: f64,
        filter: Option<&Aabb>,
        out: &mut Vec<Neighbor<Normal3>>,
    ) {
        let cell = Aabb::cube(center, half);
        if cell.sq_dist(q) > r2 || filter.is_some_and(|f| !cell.intersects(f)) {
            return;
        }
        match node {
            OctNode::Leaf(ids) => {
                for &i in ids {
                    let e = &self.entries[i as usize];
                    let d = sq_dist(&e.point, q);
                    if d <= r2 && filter.is_none_or(|f| f.contains(&e.point)) {
                        out.push(Neighbor {
                            point: e.point,
                            sq_dist: d,
                            id: e.id,
                            payload: e.normal,
                        });
                    }
                }
            }
            OctNode::Branch(children) => {
                for (i, child) in children.iter().enumerate() {
                    let c = child_center(center, half, i);
                    self.radius_rec(child, &c, half / 2.0, q, r2, filter, out);
                }
            }
        }
    }
}

fn split(ids: Vec<u32>, center: &Point3, entries: &[MapEntry]) -> OctNode {
    let mut node = OctNode::empty_branch();
    if let OctNode::Branch(children) = &mut node {
        for i in ids {
            let o = octant(center, &entries[i as usize].point);
            if let OctNode::Leaf(v) = &mut children[o] {
                v.push(i);
            }
        }
    }
    node
}
