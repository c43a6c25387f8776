//! Closed-form square roots of rank-one modifications, the kernels that let
//! the sampler avoid a factorization per draw.

use frontier_sampler::linalg::{sqrt_downdate, sqrt_update_identity, SymEigen};
use frontier_sampler::Result;
use nalgebra::{DMatrix, DVector};

pub fn run_example() -> Result<()> {
    let d = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
    let b = DVector::from_vec(vec![0.4, -0.3, 0.2]);
    let eig = SymEigen::new(&d)?;
    let d_sqrt = eig.sqrt();
    let d_inv_b = eig.solve_vec(&b);

    let down = sqrt_downdate(&d_sqrt, &d_inv_b, &b)?;
    let target = &d - &b * b.transpose();
    println!(
        "(D - bb')^(1/2) squared: max error {:.2e}",
        (down.gram() - &target).amax()
    );

    let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let up = sqrt_update_identity(&u);
    let target = DMatrix::identity(3, 3) + &u * u.transpose();
    println!(
        "(I + dd')^(1/2) squared: max error {:.2e}",
        (up.gram() - &target).amax()
    );

    let x = DVector::from_vec(vec![0.2, 0.7, -1.1]);
    println!(
        "applying without forming: {:.2e}",
        (up.apply(&x) - up.to_matrix() * &x).amax()
    );
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
