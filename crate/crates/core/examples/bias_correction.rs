//! Recover a smooth illumination field and compare the estimate against the
//! field that was applied.

use reflsm::io::intensity_to_log;
use reflsm::metrics::rtg_ratio;
use reflsm::synth::{generate, BiasKind, BiasSpec, PhantomSpec};
use reflsm::{Shape, SolverParams};

fn main() -> reflsm::Result<()> {
    for kind in [BiasKind::LinearRamp, BiasKind::GaussianBump, BiasKind::LowFreqSinusoid] {
        let phantom = generate(&PhantomSpec {
            shape: Shape::new(128, 128)?,
            bias: BiasSpec { kind, amplitude: 0.3 },
            ..Default::default()
        })?;
        let image = intensity_to_log(&phantom.image);
        let result = reflsm::run(&image, &SolverParams::default())?;

        // B is only defined up to a constant; compare after centering.
        let truth = phantom.bias.map(f64::ln);
        let est = &result.b_field;
        let (mt, me) = (truth.mean(), est.mean());
        let err = truth.zip_map(est, |t, e| (t - mt) - (e - me)).norm_inf();
        let rtg = rtg_ratio(&result.corrected_image, &image.map(f64::exp))?;

        println!("{kind:<17}  centered log-bias error {err:.3}  tenengrad ratio {rtg:.4}");
    }
    Ok(())
}
