//! Build the reference orientation field from an image and measure how far
//! candidate reflectances are from it.

use reflsm::grid::GaussianKernel;
use reflsm::io::intensity_to_log;
use reflsm::prior::{prior_energy, ReferenceSource, StructuralPrior};
use reflsm::synth::{generate, PhantomShape, PhantomSpec};
use reflsm::{ScalarField, Shape};

fn main() -> reflsm::Result<()> {
    let phantom = generate(&PhantomSpec {
        shape: Shape::new(96, 96)?,
        kind: PhantomShape::Ring,
        ..Default::default()
    })?;
    let image = intensity_to_log(&phantom.image);
    let ones = ScalarField::filled(image.shape(), 1.0);

    for sigma in [0.8, 1.5, 3.0] {
        for source in [ReferenceSource::Raw, ReferenceSource::Smoothed] {
            let prior = StructuralPrior::new(&image, GaussianKernel::new(sigma)?, 1.0, 1e-3, source)?;
            let flat = ScalarField::filled(image.shape(), image.mean());
            println!(
                "sigma {sigma:<3} {source:?}: energy(image) {:.3}  energy(flat) {:.3}",
                prior_energy(&image, &ones, &prior, 1.0),
                prior_energy(&flat, &ones, &prior, 1.0)
            );
        }
    }
    Ok(())
}
