//! Drive the solver one outer iteration at a time and watch the energy,
//! the level-set change and the region means.

use reflsm::io::intensity_to_log;
use reflsm::synth::{generate, PhantomShape, PhantomSpec};
use reflsm::{Shape, Solver, SolverParams};

fn main() -> reflsm::Result<()> {
    let phantom = generate(&PhantomSpec {
        shape: Shape::new(96, 96)?,
        kind: PhantomShape::CheckerBlob,
        ..Default::default()
    })?;
    let solver = Solver::new(intensity_to_log(&phantom.image), SolverParams::default())?;
    let mut state = solver.initialize();

    println!("{:>4} {:>12} {:>10} {:>8} {:>8}", "iter", "energy", "du", "c1", "c2");
    for k in 1..=15 {
        let du = solver.step(&mut state)?;
        let stats = solver.region_stats(&state);
        println!(
            "{k:>4} {:>12.4} {du:>10.2e} {:>8.4} {:>8.4}",
            solver.total_energy(&state).total(),
            stats.c1,
            stats.c2
        );
    }
    Ok(())
}
