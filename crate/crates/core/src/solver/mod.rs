//! Alternating-direction solver for joint segmentation and bias correction.
//!
//! The model works on a log image `I = S + B` (reflectance plus bias) and a
//! soft label `u ∈ [-1, 1]`. One outer iteration performs, in order:
//!
//! 1. region means `c₁, c₂` of `S` under the soft mask `w = (1+u)/2`;
//! 2. the `u` step: a Helmholtz solve in cosine space, then clipping;
//! 3. the `B` step: a spectral smoother applied to `I - S`;
//! 4. the `S` step: a preconditioned CG solve of the quadratic subproblem,
//!    using `w` rebuilt from the new `u`;
//! 5. vector shrinkage for the split variable `d ≈ ∇S`;
//! 6. the scaled dual update `p ← p + ∇S - d`.
//!
//! The ADMM coupling is `ρ/2 ‖d - ∇S - p‖²`.

mod cg;
mod params;

use std::time::Instant;

pub use cg::{pcg, CgOutcome};
pub use params::SolverParams;

use crate::error::{Error, Result};
use crate::grid::{
    clip, divergence, gradient, laplacian, GaussianKernel, ScalarField, Shape, VectorField2,
};
use crate::mask::BinaryMask;
use crate::prior::{structure_op, structure_op_adjoint, StructuralPrior};
use crate::spectral::{solve_bias, solve_helmholtz_flagged, NeumannSpectrum, HELMHOLTZ_C_FLOOR};

/// Relative residual at which the S-subproblem CG stops.
pub const CG_REL_TOL: f64 = 1e-6;
/// Iteration cap for the S-subproblem CG.
pub const CG_MAX_ITER: usize = 200;

/// Iterates of the outer loop.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub s_field: ScalarField,
    pub b_field: ScalarField,
    pub u_field: ScalarField,
    /// Split variable standing in for `∇S`.
    pub d_field: VectorField2,
    /// Scaled dual for `d = ∇S`.
    pub p_field: VectorField2,
    pub c1: f64,
    pub c2: f64,
    /// `(c₁ + c₂) / 2`
    pub m_val: f64,
    /// `(c₁ - c₂) / 2`
    pub delta_c: f64,
    pub iteration: usize,
    pub energy_trace: Vec<f64>,
    pub u_change_trace: Vec<f64>,
    /// `‖∇S - d‖₂` after each iteration.
    pub primal_residual_trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl SolverState {
    /// Soft foreground weight `(1 + u) / 2`.
    pub fn soft_mask(&self) -> ScalarField {
        soft_mask(&self.u_field)
    }

    /// Piecewise-constant fit `m + Δc·u` of the reflectance.
    pub fn fitted_reflectance(&self) -> ScalarField {
        let (m, dc) = (self.m_val, self.delta_c);
        self.u_field.map(|u| m + dc * u)
    }
}

/// Non-fatal events collected during a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// The image was constant and `u` started from a centered disk.
    pub degenerate_init: bool,
    /// Iterations (1-based) whose `u` step floored `Δc²`.
    pub regularized_iterations: Vec<usize>,
    pub cg_warnings: Vec<CgWarning>,
}

impl Diagnostics {
    pub fn has_warnings(&self) -> bool {
        self.degenerate_init || !self.regularized_iterations.is_empty() || !self.cg_warnings.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgWarning {
    pub iteration: usize,
    pub cg_iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionStats {
    pub c1: f64,
    pub c2: f64,
}

impl RegionStats {
    pub fn m_val(&self) -> f64 {
        0.5 * (self.c1 + self.c2)
    }

    pub fn delta_c(&self) -> f64 {
        0.5 * (self.c1 - self.c2)
    }
}

#[derive(Clone, Debug)]
pub struct UUpdate {
    /// Helmholtz solution before projection onto `[-1, 1]`.
    pub unclipped: ScalarField,
    pub clipped: ScalarField,
    pub regularized: bool,
}

/// Per-term values of the model energy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub fitting: f64,
    pub fidelity: f64,
    pub bias_smoothness: f64,
    pub total_variation: f64,
    pub level_set: f64,
    pub prior: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.fitting
            + self.fidelity
            + self.bias_smoothness
            + self.total_variation
            + self.level_set
            + self.prior
    }
}

/// Block gradients of the model energy with `c₁, c₂` held fixed.
#[derive(Clone, Debug)]
pub struct EnergyGradient {
    pub s: ScalarField,
    pub b: ScalarField,
    pub u: ScalarField,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
    pub final_energy: f64,
    pub energy_trace: Vec<f64>,
    pub u_change_trace: Vec<f64>,
    pub primal_residual_trace: Vec<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct SegmentationResult {
    /// `sign(u)` with ties sent to the foreground.
    pub mask: BinaryMask,
    /// `exp(I - B)` scaled so its maximum is 1.
    pub corrected_image: ScalarField,
    pub s_field: ScalarField,
    pub b_field: ScalarField,
    pub u_field: ScalarField,
    pub report: RunReport,
}

pub fn soft_mask(u: &ScalarField) -> ScalarField {
    u.map(|v| 0.5 * (1.0 + v))
}

/// Prox of `λ‖·‖₂` at one pixel.
#[inline]
pub fn shrink_pair(zx: f64, zy: f64, lambda: f64) -> (f64, f64) {
    let n = zx.hypot(zy);
    if n <= lambda || n == 0.0 {
        (0.0, 0.0)
    } else {
        let k = 1.0 - lambda / n;
        (k * zx, k * zy)
    }
}

/// Per-pixel vector shrinkage `max(1 - λ/|z|, 0) z`.
pub fn shrink(z: &VectorField2, lambda: f64) -> VectorField2 {
    let shape = z.shape();
    let mut x = Vec::with_capacity(shape.len());
    let mut y = Vec::with_capacity(shape.len());
    for (&zx, &zy) in z.x.as_slice().iter().zip(z.y.as_slice()) {
        let (a, b) = shrink_pair(zx, zy, lambda);
        x.push(a);
        y.push(b);
    }
    VectorField2 {
        x: ScalarField::from_vec_unchecked(shape, x),
        y: ScalarField::from_vec_unchecked(shape, y),
    }
}

/// The reflectance subproblem `A S = rhs` with
/// `A = (1+λ)Id - ρΔ + 2τ L*(w ⊙ L ·)`.
pub struct ReflectanceSystem<'a> {
    solver: &'a Solver,
    weight: ScalarField,
    precond_symbol: Vec<f64>,
}

impl ReflectanceSystem<'_> {
    pub fn weight(&self) -> &ScalarField {
        &self.weight
    }

    pub fn apply(&self, s: &ScalarField) -> ScalarField {
        let p = &self.solver.params;
        let mut out = s.scale(1.0 + p.lambda_i);
        out.axpy(-p.rho1, &laplacian(s));
        if p.tau != 0.0 {
            let kernel = self.solver.prior.kernel();
            let l = structure_op(s, kernel).weighted(&self.weight);
            out.axpy(2.0 * p.tau, &structure_op_adjoint(&l, kernel));
        }
        out
    }

    /// Spectral inverse of the operator with `w` replaced by its mean.
    pub fn precondition(&self, r: &ScalarField) -> ScalarField {
        self.solver.spectrum.solve_diagonal(r, &self.precond_symbol)
    }

    /// Right-hand side for fitted reflectance `fitted`, bias `b`, split `d`
    /// and dual `p`.
    pub fn rhs(
        &self,
        fitted: &ScalarField,
        b: &ScalarField,
        d: &VectorField2,
        dual: &VectorField2,
    ) -> ScalarField {
        let p = &self.solver.params;
        let mut out = fitted.clone();
        out.axpy(p.lambda_i, &self.solver.image.sub(b));
        out.axpy(-p.rho1, &divergence(&d.sub(dual)));
        if p.tau != 0.0 {
            let kernel = self.solver.prior.kernel();
            let wv = self.solver.prior.v_pre().weighted(&self.weight);
            out.axpy(2.0 * p.tau, &structure_op_adjoint(&wv, kernel));
        }
        out
    }
}

/// Precomputed problem data for one log image and parameter set.
#[derive(Clone, Debug)]
pub struct Solver {
    image: ScalarField,
    params: SolverParams,
    spectrum: NeumannSpectrum,
    prior: StructuralPrior,
    /// Cosine-space multiplier of `L*L`.
    prior_symbol: Vec<f64>,
}

impl Solver {
    /// `image` is the log-domain observation.
    pub fn new(image: ScalarField, params: SolverParams) -> Result<Self> {
        params.validate()?;
        if !image.is_finite() {
            return Err(Error::Domain("input image has non-finite values".into()));
        }
        let kernel = GaussianKernel::new(params.sigma)?;
        let spectrum = NeumannSpectrum::new(image.shape());
        let prior = StructuralPrior::new(
            &image,
            kernel.clone(),
            params.alpha_mag,
            params.eps_norm,
            params.reference,
        )?;
        let prior_symbol = spectrum
            .gaussian_symbol(&kernel)
            .iter()
            .zip(spectrum.eigenvalues())
            .map(|(g, lam)| g * g * lam)
            .collect();
        Ok(Self {
            image,
            params,
            spectrum,
            prior,
            prior_symbol,
        })
    }

    pub fn image(&self) -> &ScalarField {
        &self.image
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn spectrum(&self) -> &NeumannSpectrum {
        &self.spectrum
    }

    pub fn prior(&self) -> &StructuralPrior {
        &self.prior
    }

    pub fn shape(&self) -> Shape {
        self.image.shape()
    }

    /// `S = I`, `B = 0`, `d = p = 0`, `u = sign(I - mean I)`.
    pub fn initialize(&self) -> SolverState {
        let shape = self.shape();
        let mean = self.image.mean();
        let mut diagnostics = Diagnostics::default();
        let u = if self.image.max() == self.image.min() {
            diagnostics.degenerate_init = true;
            centered_disk(shape)
        } else {
            self.image.map(|v| if v - mean >= 0.0 { 1.0 } else { -1.0 })
        };
        let mut state = SolverState {
            s_field: self.image.clone(),
            b_field: ScalarField::zeros(shape),
            u_field: u,
            d_field: VectorField2::zeros(shape),
            p_field: VectorField2::zeros(shape),
            c1: 0.0,
            c2: 0.0,
            m_val: 0.0,
            delta_c: 0.0,
            iteration: 0,
            energy_trace: Vec::new(),
            u_change_trace: Vec::new(),
            primal_residual_trace: Vec::new(),
            diagnostics,
        };
        let stats = self.region_stats(&state);
        self.set_region_stats(&mut state, stats);
        state
    }

    /// Soft-masked region means of the current reflectance.
    pub fn region_stats(&self, state: &SolverState) -> RegionStats {
        let eps = self.params.eps_div;
        let (mut sw, mut w_sum, mut s_bg, mut bg_sum) = (0.0, 0.0, 0.0, 0.0);
        for (&s, &u) in state.s_field.as_slice().iter().zip(state.u_field.as_slice()) {
            let w = 0.5 * (1.0 + u);
            sw += s * w;
            w_sum += w;
            s_bg += s * (1.0 - w);
            bg_sum += 1.0 - w;
        }
        RegionStats {
            c1: sw / (w_sum + eps),
            c2: s_bg / (bg_sum + eps),
        }
    }

    fn set_region_stats(&self, state: &mut SolverState, stats: RegionStats) {
        state.c1 = stats.c1;
        state.c2 = stats.c2;
        state.m_val = stats.m_val();
        state.delta_c = stats.delta_c();
    }

    /// Minimizes `½‖S - m - Δc·u‖² + θ/2‖∇u‖²` and projects onto `[-1, 1]`.
    pub fn update_u(&self, state: &SolverState) -> Result<UUpdate> {
        let (m, dc) = (state.m_val, state.delta_c);
        let rhs = state.s_field.map(|s| dc * (s - m));
        let sol = solve_helmholtz_flagged(&rhs, dc * dc, self.params.theta, &self.spectrum)?;
        let clipped = clip(&sol.field, -1.0, 1.0)?;
        Ok(UUpdate {
            unclipped: sol.field,
            clipped,
            regularized: dc * dc < HELMHOLTZ_C_FLOOR,
        })
    }

    /// Smooths `I - S` into the bias field.
    pub fn update_b(&self, s: &ScalarField) -> Result<ScalarField> {
        solve_bias(
            &self.image.sub(s),
            self.params.eps_w(),
            self.params.alpha_b,
            &self.spectrum,
        )
    }

    /// Reflectance system for soft weight `w`.
    pub fn reflectance_system(&self, w: ScalarField) -> ReflectanceSystem<'_> {
        let p = &self.params;
        let w_mean = w.mean();
        let precond_symbol = self
            .spectrum
            .eigenvalues()
            .iter()
            .zip(&self.prior_symbol)
            .map(|(&lam, &g)| 1.0 + p.lambda_i + p.rho1 * lam + 2.0 * p.tau * w_mean * g)
            .collect();
        ReflectanceSystem {
            solver: self,
            weight: w,
            precond_symbol,
        }
    }

    /// CG solve of the reflectance subproblem, warm-started from the current
    /// `S`. `state.u_field` and `state.b_field` must already hold the new
    /// iterates.
    pub fn update_s(&self, state: &SolverState) -> CgOutcome {
        let system = self.reflectance_system(state.soft_mask());
        let rhs = system.rhs(
            &state.fitted_reflectance(),
            &state.b_field,
            &state.d_field,
            &state.p_field,
        );
        pcg(
            |x| system.apply(x),
            |r| system.precondition(r),
            &rhs,
            state.s_field.clone(),
            CG_REL_TOL,
            CG_MAX_ITER,
        )
    }

    /// `shrink(∇S + p, β/ρ)`
    pub fn update_d(&self, s: &ScalarField, p: &VectorField2) -> VectorField2 {
        shrink(&gradient(s).add(p), self.params.beta / self.params.rho1)
    }

    /// `p + ∇S - d`
    pub fn update_p(&self, p: &VectorField2, s: &ScalarField, d: &VectorField2) -> VectorField2 {
        p.add(&gradient(s).sub(d))
    }

    /// One outer iteration; returns the relative change of `u`.
    pub fn step(&self, state: &mut SolverState) -> Result<f64> {
        let k = state.iteration + 1;

        // (a) region statistics from S^k, u^k
        let stats = self.region_stats(state);
        self.set_region_stats(state, stats);

        // (b) level set
        let u_new = self.update_u(state)?;
        if u_new.regularized {
            state.diagnostics.regularized_iterations.push(k);
        }
        let u_old = std::mem::replace(&mut state.u_field, u_new.clipped);
        let change = state.u_field.sub(&u_old).norm_l2() / u_old.norm_l2().max(1.0);

        // (c) bias from S^k
        state.b_field = self.update_b(&state.s_field)?;

        // (d) reflectance with w from u^{k+1}
        let cg = self.update_s(state);
        if !cg.converged {
            state.diagnostics.cg_warnings.push(CgWarning {
                iteration: k,
                cg_iterations: cg.iterations,
                relative_residual: cg.relative_residual,
            });
        }
        state.s_field = cg.solution;

        // (e), (f) split variable and dual
        state.d_field = self.update_d(&state.s_field, &state.p_field);
        let residual = gradient(&state.s_field).sub(&state.d_field);
        state.primal_residual_trace.push(residual.norm_l2());
        state.p_field = state.p_field.add(&residual);

        state.iteration = k;
        state.u_change_trace.push(change);
        state.energy_trace.push(self.total_energy(state).total());
        Ok(change)
    }

    /// Runs the outer loop to convergence or `k_max`.
    pub fn run(&self) -> Result<SegmentationResult> {
        let start = Instant::now();
        let mut state = self.initialize();
        let mut converged = false;
        for _ in 0..self.params.k_max {
            let change = self.step(&mut state)?;
            if change < self.params.delta_tol {
                converged = true;
                break;
            }
        }
        let seconds = start.elapsed().as_secs_f64();
        Ok(self.finish(state, converged, seconds))
    }

    fn finish(&self, state: SolverState, converged: bool, seconds: f64) -> SegmentationResult {
        let corrected_log = self.image.sub(&state.b_field);
        let peak = corrected_log.max();
        let corrected_image = corrected_log.map(|v| (v - peak).exp());
        let final_energy = state
            .energy_trace
            .last()
            .copied()
            .unwrap_or_else(|| self.total_energy(&state).total());
        SegmentationResult {
            mask: BinaryMask::from_sign(&state.u_field),
            corrected_image,
            report: RunReport {
                iterations: state.iteration,
                seconds,
                converged,
                final_energy,
                energy_trace: state.energy_trace,
                u_change_trace: state.u_change_trace,
                primal_residual_trace: state.primal_residual_trace,
                diagnostics: state.diagnostics,
            },
            s_field: state.s_field,
            b_field: state.b_field,
            u_field: state.u_field,
        }
    }

    /// Model energy at the current iterate. The level-set term is
    /// `θ/2 ‖∇u‖²`.
    pub fn total_energy(&self, state: &SolverState) -> EnergyBreakdown {
        let p = &self.params;
        let w = state.soft_mask();
        let fitting = 0.5 * state.s_field.sub(&state.fitted_reflectance()).dot_self();
        let fidelity = 0.5
            * p.lambda_i
            * self
                .image
                .sub(&state.s_field)
                .sub(&state.b_field)
                .dot_self();
        let bias_smoothness = 0.5 * p.alpha_b * gradient(&state.b_field).dot_self();
        let total_variation = p.beta * gradient(&state.s_field).magnitude().sum();
        let level_set = 0.5 * p.theta * gradient(&state.u_field).dot_self();
        let prior = if p.tau == 0.0 {
            0.0
        } else {
            p.tau * self.prior.mismatch(&state.s_field).magnitude_sq().dot(&w)
        };
        EnergyBreakdown {
            fitting,
            fidelity,
            bias_smoothness,
            total_variation,
            level_set,
            prior,
        }
    }

    /// Gradients of [`Solver::total_energy`] in `S`, `B` and unconstrained
    /// `u`. Where `∇S = 0` the TV subgradient is taken as zero.
    pub fn energy_gradient(&self, state: &SolverState) -> EnergyGradient {
        let p = &self.params;
        let w = state.soft_mask();
        let fit_res = state.s_field.sub(&state.fitted_reflectance());
        let fid_res = self.image.sub(&state.s_field).sub(&state.b_field);

        let gs = gradient(&state.s_field);
        let mag = gs.magnitude();
        let inv = mag.map(|m| if m > 0.0 { 1.0 / m } else { 0.0 });
        let mut g_s = fit_res.clone();
        g_s.axpy(-p.lambda_i, &fid_res);
        g_s.axpy(-p.beta, &divergence(&gs.weighted(&inv)));
        let mismatch = self.prior.mismatch(&state.s_field);
        if p.tau != 0.0 {
            g_s.axpy(
                2.0 * p.tau,
                &structure_op_adjoint(&mismatch.weighted(&w), self.prior.kernel()),
            );
        }

        let mut g_b = fid_res.scale(-p.lambda_i);
        g_b.axpy(-p.alpha_b, &laplacian(&state.b_field));

        let mut g_u = fit_res.scale(-state.delta_c);
        g_u.axpy(-p.theta, &laplacian(&state.u_field));
        g_u.axpy(0.5 * p.tau, &mismatch.magnitude_sq());

        EnergyGradient {
            s: g_s,
            b: g_b,
            u: g_u,
        }
    }

    /// Augmented Lagrangian with the soft weight `w` of the prior frozen,
    /// the way each block step sees it.
    pub fn augmented_lagrangian(&self, state: &SolverState, w: &ScalarField) -> f64 {
        let p = &self.params;
        let fitting = 0.5 * state.s_field.sub(&state.fitted_reflectance()).dot_self();
        let fidelity = 0.5
            * p.lambda_i
            * self
                .image
                .sub(&state.s_field)
                .sub(&state.b_field)
                .dot_self();
        let bias_smoothness = 0.5 * p.alpha_b * gradient(&state.b_field).dot_self();
        let level_set = 0.5 * p.theta * gradient(&state.u_field).dot_self();
        let split = p.beta * state.d_field.magnitude().sum();
        let prior = if p.tau == 0.0 {
            0.0
        } else {
            p.tau * self.prior.mismatch(&state.s_field).magnitude_sq().dot(w)
        };
        let coupling = 0.5
            * p.rho1
            * state
                .d_field
                .sub(&gradient(&state.s_field))
                .sub(&state.p_field)
                .dot_self();
        fitting + fidelity + bias_smoothness + level_set + split + prior + coupling
    }
}

/// Runs the full solver on a log-domain image.
pub fn run(image: &ScalarField, params: &SolverParams) -> Result<SegmentationResult> {
    Solver::new(image.clone(), params.clone())?.run()
}

fn centered_disk(shape: Shape) -> ScalarField {
    let (h, w) = (shape.height() as f64, shape.width() as f64);
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let r = h.min(w) / 4.0;
    ScalarField::from_fn(shape, |y, x| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        if dy * dy + dx * dx <= r * r {
            1.0
        } else {
            -1.0
        }
    })
}

trait DotSelf {
    fn dot_self(&self) -> f64;
}

impl DotSelf for ScalarField {
    fn dot_self(&self) -> f64 {
        self.dot(self)
    }
}

impl DotSelf for VectorField2 {
    fn dot_self(&self) -> f64 {
        self.dot(self)
    }
}
