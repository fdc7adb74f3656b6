//! Plane-to-plane covariance rebuilt from a stored normal.

use loam_kit::geometry::{covariance_from_normal, covariance_from_normal_explicit, Normal3};
use nalgebra::{SymmetricEigen, Vector3};

fn main() -> loam_kit::Result<()> {
    let n = Normal3::normalize(Vector3::new(1.0, 2.0, 2.0))?;
    let eps = 1e-3;
    let closed = covariance_from_normal(&n, eps)?;
    let explicit = covariance_from_normal_explicit(&n, eps)?;
    println!("normal {:?}", n.as_vector().as_slice());
    println!("closed form:{}", closed.matrix());
    println!(
        "max gap to explicit basis: {:.1e}",
        (closed.matrix() - explicit.matrix()).amax()
    );
    let mut eig: Vec<f64> = SymmetricEigen::new(*closed.matrix())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    println!("eigenvalues {eig:?}");
    Ok(())
}
