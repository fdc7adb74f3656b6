//! Incremental kd-tree: inserts, lazy box deletion and rebuilds.

use loam_kit::geometry::Point3;
use loam_kit::index::{Aabb, IncrementalKdTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tree = IncrementalKdTree::new();
    // Sorted insertion is the worst case for an unbalanced tree.
    for i in 0..20_000 {
        let x = i as f64 * 0.001;
        tree.insert(Point3::new(x, rng.random_range(-1.0..1.0), 0.0), i);
    }
    println!(
        "{} points, depth {}, {} rebuilds",
        tree.len(),
        tree.depth(),
        tree.rebuild_count()
    );
    let gone = tree.delete_box(&Aabb::new(
        Point3::new(0.0, -1.0, -1.0),
        Point3::new(15.0, 1.0, 1.0),
    ));
    println!(
        "deleted {gone}: alive {}, allocated {}",
        tree.len(),
        tree.allocated()
    );
    tree.rebuild_if_needed();
    println!(
        "after rebuild check: alive {}, allocated {}",
        tree.len(),
        tree.allocated()
    );
    for n in tree.knn(&Point3::new(17.0, 0.0, 0.0), 3) {
        println!("  neighbor {} at {:.4} m", n.payload, n.sq_dist.sqrt());
    }
}
