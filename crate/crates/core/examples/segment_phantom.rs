//! Segment a synthetic two-disk phantom and write the full report.
//!
//! cargo run --example segment_phantom -- [out-dir]

use std::path::PathBuf;

use reflsm::io::{intensity_to_log, write_report, MetricsRow};
use reflsm::synth::{generate, PhantomShape, PhantomSpec};
use reflsm::{Shape, SolverParams};

fn main() -> reflsm::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("reflsm-segment"));

    let phantom = generate(&PhantomSpec {
        shape: Shape::new(160, 160)?,
        kind: PhantomShape::TwoDisks,
        ..Default::default()
    })?;
    let image = intensity_to_log(&phantom.image);
    let result = reflsm::run(&image, &SolverParams::default())?;

    let row = MetricsRow::compute("two-disks", &result, &image, Some(&phantom.truth))?;
    let files = write_report(&out, &result, &image, &row)?;

    println!(
        "{} iterations, converged {}, dice {:.4}",
        result.report.iterations,
        result.report.converged,
        row.dice.unwrap_or(f64::NAN)
    );
    println!("mask written to {}", files.mask.display());
    Ok(())
}
