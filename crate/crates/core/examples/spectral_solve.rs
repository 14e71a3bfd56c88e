//! Solve a screened Poisson problem with the cosine transform and check the
//! residual with the finite-difference Laplacian.

use reflsm::grid::laplacian;
use reflsm::spectral::{solve_helmholtz, NeumannSpectrum};
use reflsm::{ScalarField, Shape};

fn main() -> reflsm::Result<()> {
    let shape = Shape::new(64, 48)?;
    let spectrum = NeumannSpectrum::new(shape);
    let rhs = ScalarField::from_fn(shape, |y, x| {
        let (dy, dx) = (y as f64 - 20.0, x as f64 - 30.0);
        (-(dy * dy + dx * dx) / 50.0).exp()
    });

    for (c, theta) in [(1.0, 0.1), (0.25, 1.0), (1e-3, 5.0)] {
        let u = solve_helmholtz(&rhs, c, theta, &spectrum)?;
        let residual = u.scale(c).sub(&laplacian(&u).scale(theta)).sub(&rhs);
        println!("c={c:<6} theta={theta:<4} max |residual| {:.2e}", residual.norm_inf());
    }
    println!("largest eigenvalue {:.4}", spectrum.max_eigenvalue());
    Ok(())
}
