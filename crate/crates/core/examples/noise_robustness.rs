//! Segmentation quality across noise kinds and densities.
//!
//! cargo run --release --example noise_robustness -- [size]

use reflsm::io::intensity_to_log;
use reflsm::metrics::{confusion, dice, precision};
use reflsm::synth::{generate, NoiseKind, NoiseSpec, PhantomSpec, NOISE_GRID};
use reflsm::{Shape, SolverParams};

fn main() -> reflsm::Result<()> {
    let size: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(128);

    println!("{:<12} {:>7} {:>9} {:>7} {:>5}", "noise", "density", "precision", "dice", "iters");
    for kind in [NoiseKind::Gaussian, NoiseKind::SaltPepper, NoiseKind::Speckle] {
        for density in NOISE_GRID {
            let phantom = generate(&PhantomSpec {
                shape: Shape::new(size, size)?,
                noise: NoiseSpec { kind, density },
                seed: 1,
                ..Default::default()
            })?;
            let result = reflsm::run(&intensity_to_log(&phantom.image), &SolverParams::default())?;
            let c = confusion(&result.mask, &phantom.truth)?;
            println!(
                "{:<12} {:>7} {:>9.4} {:>7.4} {:>5}",
                kind,
                density,
                precision(&c).unwrap_or(0.0),
                dice(&c),
                result.report.iterations
            );
        }
    }
    Ok(())
}
