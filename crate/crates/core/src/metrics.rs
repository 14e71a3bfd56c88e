//! Overlap and sharpness metrics.

use crate::error::{Error, Result};
use crate::grid::{reflect, ScalarField};
use crate::mask::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    if pred.shape() != truth.shape() {
        let (e, f) = (truth.shape(), pred.shape());
        return Err(Error::Dimension {
            expected: (e.height(), e.width()),
            found: (f.height(), f.width()),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2tp / (2tp + fp + fn)`; two empty foregrounds agree perfectly.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        return 1.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

pub fn precision(c: &ConfusionCounts) -> Result<f64> {
    let denom = c.tp + c.fp;
    if denom == 0 {
        return Err(Error::Undefined(
            "precision needs at least one positive prediction".into(),
        ));
    }
    Ok(c.tp as f64 / denom as f64)
}

/// Mean of `|∇I| / I` with central differences and mirrored borders.
pub fn tenengrad(img: &ScalarField) -> Result<f64> {
    if let Some((i, &v)) = img.as_slice().iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::Domain(format!(
            "tenengrad needs positive intensities, found {v} at index {i}"
        )));
    }
    let (h, w) = (img.height(), img.width());
    let mut acc = 0.0;
    for y in 0..h {
        let up = img.row(reflect(y as isize - 1, h));
        let down = img.row(reflect(y as isize + 1, h));
        let row = img.row(y);
        for x in 0..w {
            let gx = 0.5 * (row[reflect(x as isize + 1, w)] - row[reflect(x as isize - 1, w)]);
            let gy = 0.5 * (down[x] - up[x]);
            acc += gx.hypot(gy) / row[x];
        }
    }
    Ok(acc / img.len() as f64)
}

/// `tenengrad(corrected) / tenengrad(original)`.
pub fn rtg_ratio(corrected: &ScalarField, original: &ScalarField) -> Result<f64> {
    corrected.ensure_same_shape(original)?;
    let base = tenengrad(original)?;
    if base == 0.0 {
        return Err(Error::Undefined("original image has zero tenengrad".into()));
    }
    Ok(tenengrad(corrected)? / base)
}
