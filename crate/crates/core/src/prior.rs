//! Linearized structural prior.
//!
//! `L[S] = ∇(G_σ * S)` is the gradient of the smoothed reflectance. The prior
//! pulls `L[S]` toward a fixed reference field built once from the observed
//! image: the direction of `L[I]` with its length pinned to `alpha_mag`.

use crate::error::{Error, Result};
use crate::grid::{divergence, gaussian_convolve, gradient, GaussianKernel, ScalarField, VectorField2};

/// Which image the reference directions are taken from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReferenceSource {
    /// The observed log image as given.
    #[default]
    Raw,
    /// The observed log image after one extra pass of the prior's Gaussian.
    Smoothed,
}

#[derive(Clone, Debug)]
pub struct StructuralPrior {
    kernel: GaussianKernel,
    alpha_mag: f64,
    eps_norm: f64,
    v_pre: VectorField2,
}

impl StructuralPrior {
    pub fn new(
        image: &ScalarField,
        kernel: GaussianKernel,
        alpha_mag: f64,
        eps_norm: f64,
        source: ReferenceSource,
    ) -> Result<Self> {
        let v_pre = match source {
            ReferenceSource::Raw => build_v_pre(image, &kernel, alpha_mag, eps_norm)?,
            ReferenceSource::Smoothed => {
                build_v_pre(&gaussian_convolve(image, &kernel), &kernel, alpha_mag, eps_norm)?
            }
        };
        Ok(Self {
            kernel,
            alpha_mag,
            eps_norm,
            v_pre,
        })
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn alpha_mag(&self) -> f64 {
        self.alpha_mag
    }

    pub fn eps_norm(&self) -> f64 {
        self.eps_norm
    }

    pub fn v_pre(&self) -> &VectorField2 {
        &self.v_pre
    }

    /// `L[S] - V_pre`
    pub fn mismatch(&self, s: &ScalarField) -> VectorField2 {
        structure_op(s, &self.kernel).sub(&self.v_pre)
    }
}

/// `∇(G_σ * S)`
pub fn structure_op(s: &ScalarField, k: &GaussianKernel) -> VectorField2 {
    gradient(&gaussian_convolve(s, k))
}

/// Adjoint of [`structure_op`]: `G_σ * (-div v)`.
pub fn structure_op_adjoint(v: &VectorField2, k: &GaussianKernel) -> ScalarField {
    gaussian_convolve(&divergence(v).scale(-1.0), k)
}

/// Reference field `alpha · L[I] / max(|L[I]|, eps)`, per pixel.
pub fn build_v_pre(
    image: &ScalarField,
    k: &GaussianKernel,
    alpha_mag: f64,
    eps_norm: f64,
) -> Result<VectorField2> {
    if !(alpha_mag > 0.0 && alpha_mag.is_finite()) {
        return Err(Error::param(format!("alpha_mag must be positive, got {alpha_mag}")));
    }
    if !(eps_norm > 0.0 && eps_norm.is_finite()) {
        return Err(Error::param(format!("eps_norm must be positive, got {eps_norm}")));
    }
    let l = structure_op(image, k);
    let scale = l.magnitude().map(|m| alpha_mag / m.max(eps_norm));
    Ok(l.weighted(&scale))
}

/// `τ Σ w |L[S] - V_pre|²`
pub fn prior_energy(s: &ScalarField, w: &ScalarField, prior: &StructuralPrior, tau: f64) -> f64 {
    if tau == 0.0 {
        return 0.0;
    }
    tau * prior.mismatch(s).magnitude_sq().dot(w)
}

/// Gradient of [`prior_energy`] with respect to `S`:
/// `2τ L*(w ⊙ (L[S] - V_pre))`.
pub fn prior_gradient(
    s: &ScalarField,
    w: &ScalarField,
    prior: &StructuralPrior,
    tau: f64,
) -> ScalarField {
    structure_op_adjoint(&prior.mismatch(s).weighted(w), &prior.kernel).scale(2.0 * tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Shape;

    fn noise(s: Shape, seed: u64) -> ScalarField {
        let mut state = seed.wrapping_mul(0xD129_0A4C_3F5B_6E87) | 1;
        ScalarField::from_fn(s, |_, _| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn kernel() -> GaussianKernel {
        GaussianKernel::new(3.0).unwrap()
    }

    #[test]
    fn constant_image_gives_zero_structure_and_reference() {
        let s = Shape::new(12, 12).unwrap();
        let c = ScalarField::filled(s, -0.4);
        let l = structure_op(&c, &kernel());
        assert!(l.x.norm_inf() < 1e-15 && l.y.norm_inf() < 1e-15);
        let v = build_v_pre(&c, &kernel(), 0.1, 1e-6).unwrap();
        assert!(v.is_finite());
        assert!(v.magnitude().norm_inf() < 1e-8);
    }

    #[test]
    fn ramp_slope_recovered_away_from_border() {
        let k = kernel();
        let s = Shape::new(40, 40).unwrap();
        let ramp = ScalarField::from_fn(s, |_, x| x as f64);
        let l = structure_op(&ramp, &k);
        let r = k.radius();
        for y in r..40 - r {
            for x in r..40 - r - 1 {
                assert!((l.x.get(y, x) - 1.0).abs() < 1e-12);
                assert!(l.y.get(y, x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smoothing_commutes_with_gradient_in_interior() {
        let k = kernel();
        let s = Shape::new(30, 34).unwrap();
        let f = noise(s, 4);
        let a = structure_op(&f, &k);
        let g = gradient(&f);
        let b = VectorField2 {
            x: gaussian_convolve(&g.x, &k),
            y: gaussian_convolve(&g.y, &k),
        };
        let r = k.radius() + 1;
        for y in r..30 - r {
            for x in r..34 - r {
                assert!((a.x.get(y, x) - b.x.get(y, x)).abs() < 1e-10);
                assert!((a.y.get(y, x) - b.y.get(y, x)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let k = kernel();
        let s = Shape::new(12, 12).unwrap();
        let f = noise(s, 1);
        let v = VectorField2 {
            x: noise(s, 2),
            y: noise(s, 3),
        };
        let lhs = structure_op(&f, &k).dot(&v);
        let rhs = f.dot(&structure_op_adjoint(&v, &k));
        assert!((lhs - rhs).abs() <= 1e-10 * f.norm_l2() * v.norm_l2());
        let zero = structure_op_adjoint(&VectorField2::zeros(s), &k);
        assert_eq!(zero.norm_inf(), 0.0);
        let l = structure_op(&f, &k);
        let quad = f.dot(&structure_op_adjoint(&l, &k));
        assert!(quad >= 0.0);
        assert!((quad - l.dot(&l)).abs() <= 1e-12 * quad.max(1.0));
    }

    #[test]
    fn v_pre_magnitude_bounded_and_saturated_on_edges() {
        let k = kernel();
        let s = Shape::new(32, 32).unwrap();
        let img = ScalarField::from_fn(s, |_, x| if x < 16 { -1.5 } else { -0.2 });
        let v = build_v_pre(&img, &k, 0.1, 1e-6).unwrap();
        let mag = v.magnitude();
        assert!(mag.as_slice().iter().all(|&m| m <= 0.1 + 1e-12));
        let l = structure_op(&img, &k).magnitude();
        for i in 0..s.len() {
            if l.as_slice()[i] > 1e-3 {
                assert!((mag.as_slice()[i] - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v_pre_direction_scale_invariant() {
        let k = kernel();
        let s = Shape::new(20, 20).unwrap();
        let img = noise(s, 8);
        let a = build_v_pre(&img, &k, 0.1, 1e-6).unwrap();
        let b = build_v_pre(&img.scale(10.0), &k, 0.1, 1e-6).unwrap();
        let l = structure_op(&img, &k).magnitude();
        for i in 0..s.len() {
            if l.as_slice()[i] > 1e-6 {
                assert!((a.x.as_slice()[i] - b.x.as_slice()[i]).abs() < 1e-12);
                assert!((a.y.as_slice()[i] - b.y.as_slice()[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_parameters_rejected() {
        let s = Shape::new(4, 4).unwrap();
        let img = ScalarField::zeros(s);
        assert!(build_v_pre(&img, &kernel(), 0.0, 1e-6).is_err());
        assert!(build_v_pre(&img, &kernel(), 0.1, 0.0).is_err());
    }

    #[test]
    fn prior_energy_zero_cases() {
        let k = kernel();
        let s = Shape::new(16, 16).unwrap();
        let img = noise(s, 5);
        let prior = StructuralPrior::new(&img, k.clone(), 0.1, 1e-6, ReferenceSource::Raw).unwrap();
        let sfield = noise(s, 6);
        let w = ScalarField::filled(s, 0.7);
        assert_eq!(prior_energy(&sfield, &w, &prior, 0.0), 0.0);
        assert_eq!(prior_energy(&sfield, &ScalarField::zeros(s), &prior, 0.5), 0.0);
        assert!(prior_energy(&sfield, &w, &prior, 0.5) > 0.0);

        let flat = ScalarField::filled(s, 1.0);
        let flat_prior =
            StructuralPrior::new(&flat, k, 0.1, 1e-6, ReferenceSource::Raw).unwrap();
        assert!(prior_energy(&flat, &w, &flat_prior, 0.5) < 1e-20);
    }

    #[test]
    fn prior_gradient_matches_central_differences() {
        let k = GaussianKernel::new(1.5).unwrap();
        let s = Shape::new(14, 15).unwrap();
        let img = noise(s, 10);
        let prior = StructuralPrior::new(&img, k, 0.1, 1e-6, ReferenceSource::Raw).unwrap();
        let sf = noise(s, 11);
        let w = noise(s, 12).map(|v| v + 0.5);
        let tau = 0.5;
        let grad = prior_gradient(&sf, &w, &prior, tau);
        let h = 1e-5;
        for probe in 0..20usize {
            let i = (probe * 37 + 3) % s.len();
            let mut plus = sf.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = sf.clone();
            minus.as_mut_slice()[i] -= h;
            let fd = (prior_energy(&plus, &w, &prior, tau) - prior_energy(&minus, &w, &prior, tau))
                / (2.0 * h);
            let an = grad.as_slice()[i];
            assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-6), "pixel {i}: {fd} vs {an}");
        }
    }

    #[test]
    fn prior_energy_is_midpoint_convex() {
        let k = kernel();
        let s = Shape::new(16, 16).unwrap();
        let prior =
            StructuralPrior::new(&noise(s, 20), k, 0.1, 1e-6, ReferenceSource::Smoothed).unwrap();
        let w = noise(s, 21).map(|v| v + 0.5);
        for seed in 0..5 {
            let a = noise(s, 30 + seed);
            let b = noise(s, 40 + seed).scale(3.0);
            let mid = a.add(&b).scale(0.5);
            let chord = 0.5 * (prior_energy(&a, &w, &prior, 0.5) + prior_energy(&b, &w, &prior, 0.5));
            assert!(prior_energy(&mid, &w, &prior, 0.5) <= chord + 1e-12);
        }
    }
}
