//! Overlap scores and the tenengrad sharpness ratio on small hand-made inputs.

use reflsm::metrics::{confusion, dice, precision, rtg_ratio, tenengrad};
use reflsm::{BinaryMask, ScalarField, Shape};

fn main() -> reflsm::Result<()> {
    let s = Shape::new(4, 4)?;
    let pred = BinaryMask::from_fn(s, |y, _| y == 0);
    let truth = BinaryMask::from_fn(s, |y, x| y < 2 && x < 2);
    let c = confusion(&pred, &truth)?;
    println!("{c:?}");
    println!("dice {} precision {}", dice(&c), precision(&c)?);

    let s = Shape::new(32, 32)?;
    let soft = ScalarField::from_fn(s, |_, x| 0.3 + 0.4 * x as f64 / 31.0);
    let sharp = ScalarField::from_fn(s, |_, x| if x < 16 { 0.3 } else { 0.7 });
    println!("tenengrad ramp {:.4}  step {:.4}", tenengrad(&soft)?, tenengrad(&sharp)?);
    println!("ratio step/ramp {:.4}", rtg_ratio(&sharp, &soft)?);
    println!("unchanged under scaling: {:.4}", tenengrad(&sharp.scale(10.0))?);
    Ok(())
}
