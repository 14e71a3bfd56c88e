//! Raster fields and the discrete operators the solver is assembled from.
//!
//! Storage is row-major: pixel `(y, x)` lives at `y * width + x`. The
//! boundary convention everywhere is the half-sample mirror (Neumann): the
//! forward difference across the last row/column is zero, the divergence is
//! its exact negative adjoint, and Gaussian smoothing reflects about the
//! pixel edge. That combination is what the cosine transform in
//! [`crate::spectral`] diagonalizes.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per rayon task. Parallel loops only split over output rows, never
/// over reductions, so results do not depend on the thread count.
const ROWS_PER_TASK: usize = 16;

/// Validated raster dimensions (both sides at least 2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    height: usize,
    width: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::param(format!(
                "grid must be at least 2x2, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Real-valued H×W raster.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    shape: Shape,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::param(format!(
                "expected {} values for a {}x{} field, got {}",
                shape.len(),
                shape.height,
                shape.width,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at pixel ({}, {})",
                i / shape.width,
                i % shape.width
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            values: vec![value; shape.len()],
        }
    }

    /// Builds a field from `f(y, x)`.
    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                values.push(f(y, x));
            }
        }
        Self { shape, values }
    }

    pub(crate) fn from_vec_unchecked(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        Self { shape, values }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.shape.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.shape.width
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[self.shape.index(y, x)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: f64) {
        let i = self.shape.index(y, x);
        self.values[i] = value;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, y: usize) -> &[f64] {
        let w = self.shape.width;
        &self.values[y * w..(y + 1) * w]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension {
                expected: self.shape.dims(),
                found: other.shape.dims(),
            });
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ScalarField {
        Self::from_vec_unchecked(self.shape, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination. Panics if the shapes differ.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.shape, other.shape, "field shapes differ");
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_vec_unchecked(self.shape, values)
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> ScalarField {
        self.map(|v| k * v)
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &ScalarField) {
        assert_eq!(self.shape, other.shape, "field shapes differ");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += k * b;
        }
    }

    pub fn dot(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.shape, other.shape, "field shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Pair of scalar fields holding the x (column) and y (row) components.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2 {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField2 {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        x.ensure_same_shape(&y)?;
        Ok(Self { x, y })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            x: ScalarField::zeros(shape),
            y: ScalarField::zeros(shape),
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.x.shape()
    }

    pub fn add(&self, other: &VectorField2) -> VectorField2 {
        Self {
            x: self.x.add(&other.x),
            y: self.y.add(&other.y),
        }
    }

    pub fn sub(&self, other: &VectorField2) -> VectorField2 {
        Self {
            x: self.x.sub(&other.x),
            y: self.y.sub(&other.y),
        }
    }

    pub fn scale(&self, k: f64) -> VectorField2 {
        Self {
            x: self.x.scale(k),
            y: self.y.scale(k),
        }
    }

    /// Multiplies both components by a scalar weight field.
    pub fn weighted(&self, w: &ScalarField) -> VectorField2 {
        Self {
            x: self.x.mul(w),
            y: self.y.mul(w),
        }
    }

    pub fn dot(&self, other: &VectorField2) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Per-pixel Euclidean length of the 2-vector.
    pub fn magnitude(&self) -> ScalarField {
        self.x.zip_map(&self.y, f64::hypot)
    }

    /// Per-pixel squared length.
    pub fn magnitude_sq(&self) -> ScalarField {
        self.x.zip_map(&self.y, |a, b| a * a + b * b)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Normalized, truncated 1-D Gaussian used separably.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param(format!("sigma must be positive, got {sigma}")));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let two_s2 = 2.0 * sigma * sigma;
        let mut taps: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let d = i as f64 - radius as f64;
                (-d * d / two_s2).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        Ok(Self {
            sigma,
            radius,
            taps,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Eigenvalue of the mirrored 1-D convolution on `n` samples for cosine
    /// mode `k`: `Σ_m g_m cos(π k m / n)`.
    pub fn cosine_symbol(&self, n: usize, k: usize) -> f64 {
        let r = self.radius as isize;
        self.taps
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                let m = i as isize - r;
                g * (std::f64::consts::PI * k as f64 * m as f64 / n as f64).cos()
            })
            .sum()
    }
}

/// Half-sample mirror index: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let j = i.rem_euclid(period) as usize;
    if j >= n {
        2 * n - 1 - j
    } else {
        j
    }
}

/// Forward differences; the last column of `x` and last row of `y` are zero.
pub fn gradient(f: &ScalarField) -> VectorField2 {
    let shape = f.shape();
    let (h, w) = (shape.height, shape.width);
    let src = f.as_slice();
    let mut gx = vec![0.0; shape.len()];
    let mut gy = vec![0.0; shape.len()];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut gx[y * w..(y + 1) * w];
        for x in 0..w - 1 {
            out[x] = row[x + 1] - row[x];
        }
    }
    for y in 0..h - 1 {
        let (cur, next) = (&src[y * w..(y + 1) * w], &src[(y + 1) * w..(y + 2) * w]);
        let out = &mut gy[y * w..(y + 1) * w];
        for x in 0..w {
            out[x] = next[x] - cur[x];
        }
    }
    VectorField2 {
        x: ScalarField::from_vec_unchecked(shape, gx),
        y: ScalarField::from_vec_unchecked(shape, gy),
    }
}

/// Backward differences with boundary truncation; the negative adjoint of
/// [`gradient`].
pub fn divergence(v: &VectorField2) -> ScalarField {
    let shape = v.shape();
    let (h, w) = (shape.height, shape.width);
    let vx = v.x.as_slice();
    let vy = v.y.as_slice();
    let mut out = vec![0.0; shape.len()];
    for y in 0..h {
        let rx = &vx[y * w..(y + 1) * w];
        let o = &mut out[y * w..(y + 1) * w];
        o[0] = rx[0];
        for x in 1..w - 1 {
            o[x] = rx[x] - rx[x - 1];
        }
        o[w - 1] = -rx[w - 2];
    }
    for y in 0..h {
        let o = &mut out[y * w..(y + 1) * w];
        if y == 0 {
            let cur = &vy[0..w];
            for x in 0..w {
                o[x] += cur[x];
            }
        } else if y == h - 1 {
            let prev = &vy[(h - 2) * w..(h - 1) * w];
            for x in 0..w {
                o[x] += -prev[x];
            }
        } else {
            let prev = &vy[(y - 1) * w..y * w];
            let cur = &vy[y * w..(y + 1) * w];
            for x in 0..w {
                o[x] += cur[x] - prev[x];
            }
        }
    }
    ScalarField::from_vec_unchecked(shape, out)
}

/// Five-point Laplacian with mirror boundary, defined as
/// `divergence(gradient(f))`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    divergence(&gradient(f))
}

/// Separable Gaussian smoothing (rows, then columns) with half-sample
/// mirror padding.
pub fn gaussian_convolve(f: &ScalarField, k: &GaussianKernel) -> ScalarField {
    let shape = f.shape();
    let (h, w) = (shape.height, shape.width);
    let r = k.radius as isize;
    let taps = k.taps.as_slice();

    // Horizontal pass.
    let mut tmp = vec![0.0; shape.len()];
    let src = f.as_slice();
    tmp.par_chunks_mut(w * ROWS_PER_TASK)
        .enumerate()
        .for_each(|(chunk, out_rows)| {
            let mut padded = vec![0.0; w + 2 * k.radius];
            for (j, out) in out_rows.chunks_mut(w).enumerate() {
                let y = chunk * ROWS_PER_TASK + j;
                let row = &src[y * w..(y + 1) * w];
                for (i, p) in padded.iter_mut().enumerate() {
                    *p = row[reflect(i as isize - r, w)];
                }
                for (x, o) in out.iter_mut().enumerate() {
                    let window = &padded[x..x + taps.len()];
                    *o = window.iter().zip(taps).map(|(a, b)| a * b).sum();
                }
            }
        });

    // Vertical pass: each output row is a tap-weighted sum of mirrored rows.
    let mut out = vec![0.0; shape.len()];
    out.par_chunks_mut(w * ROWS_PER_TASK)
        .enumerate()
        .for_each(|(chunk, out_rows)| {
            for (j, o) in out_rows.chunks_mut(w).enumerate() {
                let y = (chunk * ROWS_PER_TASK + j) as isize;
                for (t, &g) in taps.iter().enumerate() {
                    let sy = reflect(y + t as isize - r, h);
                    let row = &tmp[sy * w..(sy + 1) * w];
                    for (a, &b) in o.iter_mut().zip(row) {
                        *a += g * b;
                    }
                }
            }
        });
    ScalarField::from_vec_unchecked(shape, out)
}

/// Per-pixel projection onto `[lo, hi]`.
pub fn clip(f: &ScalarField, lo: f64, hi: f64) -> Result<ScalarField> {
    if !(lo <= hi) {
        return Err(Error::param(format!("clip bounds reversed: [{lo}, {hi}]")));
    }
    Ok(f.map(|v| v.clamp(lo, hi)))
}
