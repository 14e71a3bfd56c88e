//! Cosine-transform diagonalization of the mirror-boundary Laplacian.
//!
//! The orthonormal 2-D DCT-II maps the five-point Neumann Laplacian of
//! [`crate::grid::laplacian`] to multiplication by `-λ(k,l)` with
//! `λ(k,l) = (2 - 2cos(πk/H)) + (2 - 2cos(πl/W))`, so every
//! `(c - θΔ)u = f` system is a pointwise division in coefficient space.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

use crate::error::{Error, Result};
use crate::grid::{GaussianKernel, ScalarField, Shape};

/// Below this the DC mode of a Helmholtz system is treated as singular and
/// the constant term is floored to it.
pub const HELMHOLTZ_C_FLOOR: f64 = 1e-12;

const ROWS_PER_TASK: usize = 16;

/// Planned 1-D transforms for both axes of one grid shape.
#[derive(Clone)]
struct Dct2d {
    shape: Shape,
    rows: Arc<dyn TransformType2And3<f64>>,
    cols: Arc<dyn TransformType2And3<f64>>,
}

impl Dct2d {
    fn new(shape: Shape) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            shape,
            rows: planner.plan_dct2(shape.width()),
            cols: planner.plan_dct2(shape.height()),
        }
    }

    fn forward(&self, f: &ScalarField) -> ScalarField {
        let (h, w) = (self.shape.height(), self.shape.width());
        let mut data = f.as_slice().to_vec();
        dct_lines(&mut data, w, &self.rows, Direction::Forward);
        let mut t = transpose(&data, h, w);
        dct_lines(&mut t, h, &self.cols, Direction::Forward);
        ScalarField::from_vec_unchecked(self.shape, transpose(&t, w, h))
    }

    fn inverse(&self, c: &ScalarField) -> ScalarField {
        let (h, w) = (self.shape.height(), self.shape.width());
        let mut t = transpose(c.as_slice(), h, w);
        dct_lines(&mut t, h, &self.cols, Direction::Inverse);
        let mut data = transpose(&t, w, h);
        dct_lines(&mut data, w, &self.rows, Direction::Inverse);
        ScalarField::from_vec_unchecked(self.shape, data)
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

/// Orthonormal DCT-II (or its inverse) along every contiguous line of `n`.
fn dct_lines(data: &mut [f64], n: usize, plan: &Arc<dyn TransformType2And3<f64>>, dir: Direction) {
    let dc = (1.0 / n as f64).sqrt();
    let ac = (2.0 / n as f64).sqrt();
    data.par_chunks_mut(n * ROWS_PER_TASK).for_each(|block| {
        let mut scratch = vec![0.0; plan.get_scratch_len()];
        for line in block.chunks_mut(n) {
            match dir {
                Direction::Forward => {
                    plan.process_dct2_with_scratch(line, &mut scratch);
                    line[0] *= dc;
                    line[1..].iter_mut().for_each(|v| *v *= ac);
                }
                Direction::Inverse => {
                    // rustdct's DCT-III halves the first coefficient.
                    line[0] *= 2.0 * dc;
                    line[1..].iter_mut().for_each(|v| *v *= ac);
                    plan.process_dct3_with_scratch(line, &mut scratch);
                }
            }
        }
    });
}

fn transpose(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    const B: usize = 32;
    for yb in (0..h).step_by(B) {
        for xb in (0..w).step_by(B) {
            for y in yb..(yb + B).min(h) {
                for x in xb..(xb + B).min(w) {
                    out[x * h + y] = src[y * w + x];
                }
            }
        }
    }
    out
}

/// Eigenvalues of `-Δ` (mirror boundary) indexed like a field, plus the
/// transform plans for that shape.
#[derive(Clone)]
pub struct NeumannSpectrum {
    shape: Shape,
    eigenvalues: Vec<f64>,
    dct: Dct2d,
}

impl fmt::Debug for NeumannSpectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NeumannSpectrum")
            .field("shape", &self.shape)
            .finish_non_exhaustive()
    }
}

/// `2 - 2cos(πk/n)` for `k in 0..n`.
fn axis_eigenvalues(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.0 - 2.0 * (PI * k as f64 / n as f64).cos())
        .collect()
}

impl NeumannSpectrum {
    pub fn new(shape: Shape) -> Self {
        let ey = axis_eigenvalues(shape.height());
        let ex = axis_eigenvalues(shape.width());
        let mut eigenvalues = Vec::with_capacity(shape.len());
        for &a in &ey {
            for &b in &ex {
                eigenvalues.push(a + b);
            }
        }
        Self {
            shape,
            eigenvalues,
            dct: Dct2d::new(shape),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// `λ(k,l)` laid out row-major with `k` the row frequency.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize, l: usize) -> f64 {
        self.eigenvalues[self.shape.index(k, l)]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    pub fn forward(&self, f: &ScalarField) -> ScalarField {
        assert_eq!(f.shape(), self.shape, "field shape does not match spectrum");
        self.dct.forward(f)
    }

    pub fn inverse(&self, c: &ScalarField) -> ScalarField {
        assert_eq!(c.shape(), self.shape, "field shape does not match spectrum");
        self.dct.inverse(c)
    }

    /// Multiplier of the mirrored separable Gaussian in coefficient space.
    pub fn gaussian_symbol(&self, k: &GaussianKernel) -> Vec<f64> {
        let gy: Vec<f64> = (0..self.shape.height())
            .map(|i| k.cosine_symbol(self.shape.height(), i))
            .collect();
        let gx: Vec<f64> = (0..self.shape.width())
            .map(|i| k.cosine_symbol(self.shape.width(), i))
            .collect();
        let mut out = Vec::with_capacity(self.shape.len());
        for &a in &gy {
            for &b in &gx {
                out.push(a * b);
            }
        }
        out
    }

    /// Solves `D u = rhs` for an operator `D` that is diagonal in the cosine
    /// basis with the given per-mode multipliers.
    pub fn solve_diagonal(&self, rhs: &ScalarField, symbol: &[f64]) -> ScalarField {
        assert_eq!(symbol.len(), self.shape.len());
        let mut coeffs = self.forward(rhs);
        for (c, &s) in coeffs.as_mut_slice().iter_mut().zip(symbol) {
            *c /= s;
        }
        self.inverse(&coeffs)
    }
}

/// Orthonormal 2-D DCT-II.
pub fn dct2_forward(f: &ScalarField) -> ScalarField {
    Dct2d::new(f.shape()).forward(f)
}

/// Inverse of [`dct2_forward`].
pub fn dct2_inverse(c: &ScalarField) -> ScalarField {
    Dct2d::new(c.shape()).inverse(c)
}

/// Outcome of a Helmholtz solve; `regularized` is set when the constant
/// term was floored to [`HELMHOLTZ_C_FLOOR`].
#[derive(Clone, Debug)]
pub struct HelmholtzSolution {
    pub field: ScalarField,
    pub regularized: bool,
}

/// Solves `(c - θΔ)u = rhs` under mirror boundary conditions.
pub fn solve_helmholtz_flagged(
    rhs: &ScalarField,
    c: f64,
    theta: f64,
    spectrum: &NeumannSpectrum,
) -> Result<HelmholtzSolution> {
    if !(c >= 0.0 && theta >= 0.0 && c.is_finite() && theta.is_finite()) {
        return Err(Error::param(format!(
            "helmholtz coefficients must be finite and nonnegative (c={c}, theta={theta})"
        )));
    }
    if c == 0.0 && theta == 0.0 {
        return Err(Error::Singular("c = 0 and theta = 0".into()));
    }
    if rhs.shape() != spectrum.shape() {
        return Err(Error::Dimension {
            expected: (spectrum.shape().height(), spectrum.shape().width()),
            found: (rhs.height(), rhs.width()),
        });
    }
    let regularized = c < HELMHOLTZ_C_FLOOR;
    let c_eff = c.max(HELMHOLTZ_C_FLOOR);
    let symbol: Vec<f64> = spectrum
        .eigenvalues()
        .iter()
        .map(|&lam| c_eff + theta * lam)
        .collect();
    Ok(HelmholtzSolution {
        field: spectrum.solve_diagonal(rhs, &symbol),
        regularized,
    })
}

/// Solves `(c - θΔ)u = rhs`; see [`solve_helmholtz_flagged`].
pub fn solve_helmholtz(
    rhs: &ScalarField,
    c: f64,
    theta: f64,
    spectrum: &NeumannSpectrum,
) -> Result<ScalarField> {
    solve_helmholtz_flagged(rhs, c, theta, spectrum).map(|s| s.field)
}

/// Bias-field smoother: minimizer of `ε/2‖B - r‖² + α/2‖∇B‖²`, i.e.
/// `(ε - αΔ)B = ε r`.
pub fn solve_bias(
    residual: &ScalarField,
    eps_w: f64,
    alpha_b: f64,
    spectrum: &NeumannSpectrum,
) -> Result<ScalarField> {
    if !(eps_w > 0.0 && eps_w.is_finite()) {
        return Err(Error::param(format!("eps_w must be positive, got {eps_w}")));
    }
    if !(alpha_b >= 0.0 && alpha_b.is_finite()) {
        return Err(Error::param(format!("alpha_b must be nonnegative, got {alpha_b}")));
    }
    if alpha_b == 0.0 {
        return Ok(residual.clone());
    }
    solve_helmholtz(&residual.scale(eps_w), eps_w, alpha_b, spectrum)
}
