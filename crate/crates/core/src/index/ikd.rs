use super::{sort_neighbors, sq_dist, Aabb, KnnHeap, Neighbor};
use crate::geometry::Point3;

/// Thresholds that trigger a subtree rebuild.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RebuildPolicy {
    /// Rebuild when `alive(child) / alive(node)` exceeds this.
    pub alpha_bal: f64,
    /// Rebuild when `invalid(node) / size(node)` exceeds this.
    pub alpha_del: f64,
    /// Subtrees smaller than this skip the balance check.
    pub min_balance_size: usize,
}

impl Default for RebuildPolicy {
    fn default() -> Self {
        Self {
            alpha_bal: 0.7,
            alpha_del: 0.5,
            min_balance_size: 10,
        }
    }
}

#[derive(Clone, Debug)]
struct Node<T> {
    point: Point3,
    payload: T,
    id: u64,
    axis: usize,
    left: Option<Box<Node<T>>>,
    right: Option<Box<Node<T>>>,
    /// Nodes in this subtree, deleted ones included.
    size: usize,
    /// Deleted nodes in this subtree.
    invalid: usize,
    deleted: bool,
    /// Lazy label: every node below is deleted, children not yet updated.
    tree_deleted: bool,
    bbox: Aabb,
}

impl<T> Node<T> {
    fn leaf(point: Point3, payload: T, id: u64, axis: usize) -> Self {
        Self {
            point,
            payload,
            id,
            axis,
            left: None,
            right: None,
            size: 1,
            invalid: 0,
            deleted: false,
            tree_deleted: false,
            bbox: Aabb::new(point, point),
        }
    }

    #[inline]
    fn alive(&self) -> usize {
        self.size - self.invalid
    }

    fn push_down(&mut self) {
        if !self.tree_deleted {
            return;
        }
        for child in [&mut self.left, &mut self.right].into_iter().flatten() {
            child.tree_deleted = true;
            child.deleted = true;
            child.invalid = child.size;
        }
        self.tree_deleted = false;
    }

    fn child_alive(c: &Option<Box<Node<T>>>) -> usize {
        c.as_ref().map_or(0, |c| c.alive())
    }

    fn label_deleted(&mut self) -> usize {
        let newly = self.alive();
        self.tree_deleted = true;
        self.deleted = true;
        self.invalid = self.size;
        newly
    }
}

#[derive(Clone, Copy)]
enum Region<'a> {
    Inside(&'a Aabb),
    Outside(&'a Aabb),
}

impl Region<'_> {
    fn contains(&self, p: &Point3) -> bool {
        match self {
            Region::Inside(b) => b.contains(p),
            Region::Outside(b) => !b.contains(p),
        }
    }

    fn covers(&self, bbox: &Aabb) -> bool {
        match self {
            Region::Inside(b) => bbox.is_inside(b),
            Region::Outside(b) => !bbox.intersects(b),
        }
    }

    fn misses(&self, bbox: &Aabb) -> bool {
        match self {
            Region::Inside(b) => !bbox.intersects(b),
            Region::Outside(b) => bbox.is_inside(b),
        }
    }
}

/// Incremental kd-tree storing points in every node, with lazy deletion
/// labels and criterion-triggered subtree rebuilds.
///
/// Deleted points stay allocated until a rebuild touches their subtree.
/// Equal coordinates are stored as distinct entries.
#[derive(Clone, Debug)]
pub struct IncrementalKdTree<T> {
    root: Option<Box<Node<T>>>,
    policy: RebuildPolicy,
    next_id: u64,
    rebuilds: usize,
}

impl<T> Default for IncrementalKdTree<T> {
    fn default() -> Self {
        Self {
            root: None,
            policy: RebuildPolicy::default(),
            next_id: 0,
            rebuilds: 0,
        }
    }
}

type Item<T> = (Point3, T, u64);

impl<T: Clone> IncrementalKdTree<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_policy(policy: RebuildPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    /// Balanced build: median split along the longest dimension, recursively.
    pub fn build(items: impl IntoIterator<Item = (Point3, T)>) -> Self {
        let mut tree = Self::new();
        let mut v: Vec<Item<T>> = items
            .into_iter()
            .enumerate()
            .map(|(i, (p, t))| (p, t, i as u64))
            .collect();
        tree.next_id = v.len() as u64;
        tree.root = build_balanced(&mut v);
        tree
    }

    pub fn policy(&self) -> &RebuildPolicy {
        &self.policy
    }

    /// Alive point count.
    pub fn len(&self) -> usize {
        self.root.as_ref().map_or(0, |r| r.alive())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored node count, lazily deleted nodes included.
    pub fn allocated(&self) -> usize {
        self.root.as_ref().map_or(0, |r| r.size)
    }

    pub fn rebuild_count(&self) -> usize {
        self.rebuilds
    }

    pub fn depth(&self) -> usize {
        fn rec<T>(n: &Option<Box<Node<T>>>) -> usize {
            n.as_ref()
                .map_or(0, |n| 1 + rec(&n.left).max(rec(&n.right)))
        }
        rec(&self.root)
    }

    /// Inserts one point and returns its id (insertion order).
    pub fn insert(&mut self, point: Point3, payload: T) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        insert_rec(&mut self.root, Node::leaf(point, payload, id, 0));
        let policy = self.policy;
        if rebalance_path(&mut self.root, &point, &policy).is_some() {
            self.rebuilds += 1;
        }
        id
    }

    pub fn insert_points(&mut self, items: impl IntoIterator<Item = (Point3, T)>) {
        for (p, t) in items {
            self.insert(p, t);
        }
    }

    /// Lazily deletes every alive point inside the closed box. Returns the
    /// number of newly deleted points.
    pub fn delete_box(&mut self, b: &Aabb) -> usize {
        delete_rec(&mut self.root, Region::Inside(b))
    }

    /// Lazily deletes every alive point outside the closed box.
    pub fn delete_outside(&mut self, keep: &Aabb) -> usize {
        delete_rec(&mut self.root, Region::Outside(keep))
    }

    /// Rebuilds the whole tree if the root violates the balance or
    /// invalid-fraction criterion. Returns whether a rebuild happened.
    pub fn rebuild_if_needed(&mut self) -> bool {
        let fire = self
            .root
            .as_ref()
            .is_some_and(|r| needs_rebuild(r, &self.policy));
        if fire {
            self.compact();
        }
        fire
    }

    /// Unconditional rebuild from alive points; afterwards `allocated() == len()`.
    pub fn compact(&mut self) {
        rebuild(&mut self.root);
        self.rebuilds += 1;
    }

    pub fn knn(&self, q: &Point3, k: usize) -> Vec<Neighbor<T>> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = KnnHeap::new(k);
        if let Some(r) = &self.root {
            knn_rec(r, q, &mut heap);
        }
        heap.into_sorted()
    }

    pub fn radius_search(&self, q: &Point3, r: f64) -> Vec<Neighbor<T>> {
        let mut out = Vec::new();
        if let Some(root) = &self.root {
            radius_rec(root, q, r * r, &mut out);
        }
        sort_neighbors(&mut out);
        out
    }

    /// Alive points with their payloads, in no particular order.
    pub fn alive_items(&self) -> Vec<(Point3, T, u64)> {
        let mut out = Vec::with_capacity(self.len());
        if let Some(r) = &self.root {
            collect_alive(r, &mut out);
        }
        out
    }

    /// Recounts size and invalid counts and compares them to the stored
    /// counters at every node whose counters are not covered by a pending
    /// lazy label. Also checks bounding boxes.
    pub fn audit(&self) -> Result<(), String> {
        if let Some(r) = &self.root {
            audit_rec(r, false)?;
        }
        Ok(())
    }

    /// Checks the balance criterion at the root only.
    pub fn root_is_balanced(&self) -> bool {
        self.root
            .as_ref()
            .is_none_or(|r| !violates_balance(r, &self.policy))
    }
}

fn insert_rec<T>(slot: &mut Option<Box<Node<T>>>, mut new: Node<T>) {
    match slot {
        None => *slot = Some(Box::new(new)),
        Some(node) => {
            node.push_down();
            node.size += 1;
            node.bbox.grow(&new.point);
            new.axis = (node.axis + 1) % 3;
            if new.point[node.axis] < node.point[node.axis] {
                insert_rec(&mut node.left, new)
            } else {
                insert_rec(&mut node.right, new)
            }
        }
    }
}

fn violates_balance<T>(node: &Node<T>, policy: &RebuildPolicy) -> bool {
    if node.size < policy.min_balance_size {
        return false;
    }
    let alive = node.alive();
    if alive == 0 {
        return false;
    }
    let heavy = Node::child_alive(&node.left).max(Node::child_alive(&node.right));
    heavy as f64 > policy.alpha_bal * alive as f64
}

fn needs_rebuild<T>(node: &Node<T>, policy: &RebuildPolicy) -> bool {
    node.invalid as f64 > policy.alpha_del * node.size as f64 || violates_balance(node, policy)
}

/// Walks the insertion path of `p` and rebuilds the topmost violating node.
/// Returns the `(size, invalid)` counts the rebuild removed, which every
/// ancestor on the path must subtract.
fn rebalance_path<T: Clone>(
    slot: &mut Option<Box<Node<T>>>,
    p: &Point3,
    policy: &RebuildPolicy,
) -> Option<(usize, usize)> {
    let node = slot.as_mut()?;
    if needs_rebuild(node, policy) {
        let (size, invalid) = (node.size, node.invalid);
        rebuild(slot);
        let after = slot.as_ref().map_or(0, |n| n.size);
        return Some((size - after, invalid));
    }
    let next = if p[node.axis] < node.point[node.axis] {
        &mut node.left
    } else {
        &mut node.right
    };
    let removed = rebalance_path(next, p, policy)?;
    node.size -= removed.0;
    node.invalid -= removed.1;
    Some(removed)
}

fn rebuild<T: Clone>(slot: &mut Option<Box<Node<T>>>) {
    let mut items = Vec::new();
    if let Some(n) = slot.as_ref() {
        collect_alive(n, &mut items);
    }
    *slot = build_balanced(&mut items);
}

fn collect_alive<T: Clone>(node: &Node<T>, out: &mut Vec<Item<T>>) {
    if node.tree_deleted || node.invalid == node.size {
        return;
    }
    if !node.deleted {
        out.push((node.point, node.payload.clone(), node.id));
    }
    for c in [&node.left, &node.right].into_iter().flatten() {
        collect_alive(c, out);
    }
}

fn build_balanced<T: Clone>(items: &mut [Item<T>]) -> Option<Box<Node<T>>> {
    if items.is_empty() {
        return None;
    }
    let bbox = Aabb::from_points(items.iter().map(|i| &i.0));
    let axis = bbox.longest_axis();
    let mid = items.len() / 2;
    items.select_nth_unstable_by(mid, |a, b| {
        a.0[axis].total_cmp(&b.0[axis]).then(a.2.cmp(&b.2))
    });
    let (p, t, id) = items[mid].clone();
    let (lo, rest) = items.split_at_mut(mid);
    let left = build_balanced(lo);
    let right = build_balanced(&mut rest[1..]);
    Some(Box::new(Node {
        point: p,
        payload: t,
        id,
        axis,
        left,
        right,
        size: items.len(),
        invalid: 0,
        deleted: false,
        tree_deleted: false,
        bbox,
    }))
}

fn delete_rec<T>(slot: &mut Option<Box<Node<T>>>, region: Region<'_>) -> usize {
    let Some(node) = slot.as_mut() else {
        return 0;
    };
    if node.invalid == node.size || region.misses(&node.bbox) {
        return 0;
    }
    if region.covers(&node.bbox) {
        return node.label_deleted();
    }
    node.push_down();
    let mut n = 0;
    if !node.deleted && region.contains(&node.point) {
        node.deleted = true;
        n += 1;
    }
    n += delete_rec(&mut node.left, region);
    n += delete_rec(&mut node.right, region);
    node.invalid += n;
    n
}

fn knn_rec<T: Clone>(node: &Node<T>, q: &Point3, heap: &mut KnnHeap<T>) {
    if node.invalid == node.size || heap.can_prune(node.bbox.sq_dist(q)) {
        return;
    }
    if !node.deleted {
        let d = sq_dist(&node.point, q);
        if heap.would_accept(d, node.id) {
            heap.push(Neighbor {
                point: node.point,
                sq_dist: d,
                id: node.id,
                payload: node.payload.clone(),
            });
        }
    }
    let bound = |c: &Option<Box<Node<T>>>| c.as_ref().map_or(f64::INFINITY, |c| c.bbox.sq_dist(q));
    let (first, second) = if bound(&node.left) <= bound(&node.right) {
        (&node.left, &node.right)
    } else {
        (&node.right, &node.left)
    };
    for c in [first, second].into_iter().flatten() {
        knn_rec(c, q, heap);
    }
}

fn radius_rec<T: Clone>(node: &Node<T>, q: &Point3, r2: f64, out: &mut Vec<Neighbor<T>>) {
    if node.invalid == node.size || node.bbox.sq_dist(q) > r2 {
        return;
    }
    if !node.deleted {
        let d = sq_dist(&node.point, q);
        if d <= r2 {
            out.push(Neighbor {
                point: node.point,
                sq_dist: d,
                id: node.id,
                payload: node.payload.clone(),
            });
        }
    }
    for c in [&node.left, &node.right].into_iter().flatten() {
        radius_rec(c, q, r2, out);
    }
}

fn audit_rec<T>(node: &Node<T>, under_label: bool) -> Result<(usize, usize, Aabb), String> {
    let labeled = under_label || node.tree_deleted;
    let mut size = 1;
    let mut invalid = usize::from(labeled || node.deleted);
    let mut bbox = Aabb::new(node.point, node.point);
    for c in [&node.left, &node.right].into_iter().flatten() {
        let (s, i, b) = audit_rec(c, labeled)?;
        size += s;
        invalid += i;
        bbox.merge(&b);
    }
    if node.size != size {
        return Err(format!(
            "node {}: size {} != recount {}",
            node.id, node.size, size
        ));
    }
    if !under_label && node.invalid != invalid {
        return Err(format!(
            "node {}: invalid {} != recount {}",
            node.id, node.invalid, invalid
        ));
    }
    if !bbox.is_inside(&node.bbox) {
        return Err(format!(
            "node {}: bounding box does not cover subtree",
            node.id
        ));
    }
    Ok((size, invalid, bbox))
}
