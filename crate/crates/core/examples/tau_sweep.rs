//! Sweep the structural prior weight in parallel and print the CSV the
//! `sweep` subcommand would write.

use reflsm::cli::{run_sweep, sweep_csv};
use reflsm::config::RunConfig;

fn main() -> reflsm::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "height = 96
         width = 96
         bias = linear-ramp
         bias_amplitude = 0.3
         sweep_tau = 0.001, 0.04, 0.12, 0.18
         sweep_noise = speckle
         sweep_density = 0.02, 0.1
         jobs = 4",
    )?;
    cfg.validate()?;
    let rows = run_sweep(&cfg)?;
    print!("{}", sweep_csv(&rows));
    Ok(())
}
