//! Two-phase label fields: `+1` foreground, `-1` background.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Shape};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    shape: Shape,
    foreground: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Shape, foreground: Vec<bool>) -> Result<Self> {
        if foreground.len() != shape.len() {
            return Err(Error::param(format!(
                "expected {} labels, got {}",
                shape.len(),
                foreground.len()
            )));
        }
        Ok(Self { shape, foreground })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut foreground = Vec::with_capacity(shape.len());
        for y in 0..shape.height() {
            for x in 0..shape.width() {
                foreground.push(f(y, x));
            }
        }
        Self { shape, foreground }
    }

    /// `sign(u)` with `sign(0) = +1`.
    pub fn from_sign(u: &ScalarField) -> Self {
        Self {
            shape: u.shape(),
            foreground: u.as_slice().iter().map(|&v| v >= 0.0).collect(),
        }
    }

    /// Reads a `{-1, +1}` field; any other value is rejected.
    pub fn from_field(f: &ScalarField) -> Result<Self> {
        let mut foreground = Vec::with_capacity(f.len());
        for (i, &v) in f.as_slice().iter().enumerate() {
            match v {
                v if v == 1.0 => foreground.push(true),
                v if v == -1.0 => foreground.push(false),
                _ => {
                    return Err(Error::Domain(format!(
                        "mask value {v} at index {i} is not -1 or +1"
                    )))
                }
            }
        }
        Ok(Self {
            shape: f.shape(),
            foreground,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.foreground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.foreground.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.foreground[self.shape.index(y, x)]
    }

    pub fn labels(&self) -> &[bool] {
        &self.foreground
    }

    pub fn count_foreground(&self) -> usize {
        self.foreground.iter().filter(|&&f| f).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            shape: self.shape,
            foreground: self.foreground.iter().map(|f| !f).collect(),
        }
    }

    /// `±1` as a scalar field.
    pub fn to_field(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.shape,
            self.foreground
                .iter()
                .map(|&f| if f { 1.0 } else { -1.0 })
                .collect(),
        )
    }
}
