use super::{sort_neighbors, sq_dist, Aabb, KnnHeap, Neighbor};
use crate::geometry::Point3;

const NONE: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    index: u32,
    left: u32,
    right: u32,
    bbox: Aabb,
}

/// Balanced kd-tree over a frozen point set. Each node splits at the median
/// along the longest extent of its points. Results carry the source index
/// as both `id` and payload.
#[derive(Clone, Debug, Default)]
pub struct StaticKdTree {
    points: Vec<Point3>,
    nodes: Vec<Node>,
    root: Option<u32>,
}

impl StaticKdTree {
    pub fn build(points: &[Point3]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: None,
        };
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        if !order.is_empty() {
            let root = tree.build_rec(&mut order);
            tree.root = Some(root);
        }
        tree
    }

    fn build_rec(&mut self, idx: &mut [u32]) -> u32 {
        let bbox = Aabb::from_points(idx.iter().map(|&i| &self.points[i as usize]));
        let axis = bbox.longest_axis();
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            pts[a as usize][axis]
                .total_cmp(&pts[b as usize][axis])
                .then(a.cmp(&b))
        });
        let node_id = self.nodes.len() as u32;
        self.nodes.push(Node {
            index: idx[mid],
            left: NONE,
            right: NONE,
            bbox,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let hi = &mut rest[1..];
        if !lo.is_empty() {
            let l = self.build_rec(lo);
            self.nodes[node_id as usize].left = l;
        }
        if !hi.is_empty() {
            let r = self.build_rec(hi);
            self.nodes[node_id as usize].right = r;
        }
        node_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &StaticKdTree, n: u32) -> usize {
            if n == NONE {
                return 0;
            }
            let node = &t.nodes[n as usize];
            1 + rec(t, node.left).max(rec(t, node.right))
        }
        self.root.map_or(0, |r| rec(self, r))
    }

    /// The `k` nearest points, sorted by `(squared distance, index)`.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor<usize>> {
        let Some(root) = self.root else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let mut heap = KnnHeap::new(k);
        self.knn_rec(root, query, &mut heap);
        heap.into_sorted()
    }

    /// Nearest point only; cheaper than `knn(q, 1)`.
    pub fn nearest(&self, query: &Point3) -> Option<(usize, f64)> {
        let root = self.root?;
        let mut best = (usize::MAX, f64::INFINITY);
        self.nearest_rec(root, query, &mut best);
        Some(best)
    }

    fn nearest_rec(&self, n: u32, q: &Point3, best: &mut (usize, f64)) {
        let node = &self.nodes[n as usize];
        if node.bbox.sq_dist(q) > best.1 {
            return;
        }
        let i = node.index as usize;
        let d = sq_dist(&self.points[i], q);
        if d < best.1 || (d == best.1 && i < best.0) {
            *best = (i, d);
        }
        self.visit_children(node, q, |c| self.nearest_rec(c, q, best));
    }

    fn visit_children(&self, node: &Node, q: &Point3, mut f: impl FnMut(u32)) {
        let dl = self.child_bound(node.left, q);
        let dr = self.child_bound(node.right, q);
        let (first, second) = if dl <= dr {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if first != NONE {
            f(first);
        }
        if second != NONE {
            f(second);
        }
    }

    fn child_bound(&self, c: u32, q: &Point3) -> f64 {
        if c == NONE {
            f64::INFINITY
        } else {
            self.nodes[c as usize].bbox.sq_dist(q)
        }
    }

    fn knn_rec(&self, n: u32, q: &Point3, heap: &mut KnnHeap<usize>) {
        let node = &self.nodes[n as usize];
        if heap.can_prune(node.bbox.sq_dist(q)) {
            return;
        }
        let i = node.index as usize;
        heap.push(Neighbor {
            point: self.points[i],
            sq_dist: sq_dist(&self.points[i], q),
            id: i as u64,
            payload: i,
        });
        self.visit_children(node, q, |c| self.knn_rec(c, q, heap));
    }

    /// Every point within distance `radius` (closed ball), sorted.
    pub fn radius_search(&self, query: &Point3, radius: f64) -> Vec<Neighbor<usize>> {
        let mut out = Vec::new();
        if let Some(root) = self.root {
            self.radius_rec(root, query, radius * radius, &mut out);
        }
        sort_neighbors(&mut out);
        out
    }

    fn radius_rec(&self, n: u32, q: &Point3, r2: f64, out: &mut Vec<Neighbor<usize>>) {
        let node = &self.nodes[n as usize];
        if node.bbox.sq_dist(q) > r2 {
            return;
        }
        let i = node.index as usize;
        let d = sq_dist(&self.points[i], q);
        if d <= r2 {
            out.push(Neighbor {
                point: self.points[i],
                sq_dist: d,
                id: i as u64,
                payload: i,
            });
        }
        if node.left != NONE {
            self.radius_rec(node.left, q, r2, out);
        }
        if node.right != NONE {
            self.radius_rec(node.right, q, r2, out);
        }
    }
}
