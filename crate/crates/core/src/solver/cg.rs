//! Matrix-free preconditioned conjugate gradients on scalar fields.

use crate::grid::ScalarField;

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub solution: ScalarField,
    pub iterations: usize,
    /// `‖b - Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from `x0`.
///
/// `precond` applies an SPD approximation of `A⁻¹`.
pub fn pcg<A, M>(
    apply: A,
    precond: M,
    rhs: &ScalarField,
    x0: ScalarField,
    rel_tol: f64,
    max_iter: usize,
) -> CgOutcome
where
    A: Fn(&ScalarField) -> ScalarField,
    M: Fn(&ScalarField) -> ScalarField,
{
    let b_norm = rhs.norm_l2();
    if b_norm == 0.0 {
        return CgOutcome {
            solution: ScalarField::zeros(rhs.shape()),
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }

    let mut x = x0;
    let mut r = rhs.sub(&apply(&x));
    let mut rel = r.norm_l2() / b_norm;
    if rel <= rel_tol {
        return CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: rel,
            converged: true,
        };
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);

    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            // Breakdown: A is not positive definite along p, or p vanished.
            return CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
                converged: false,
            };
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        rel = r.norm_l2() / b_norm;
        if rel <= rel_tol {
            return CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            };
        }
        z = precond(&r);
        let rz_next = r.dot(&z);
        let beta = rz_next / rz;
        rz = rz_next;
        // p = z + beta p
        for (pi, &zi) in p.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *pi = zi + beta * *pi;
        }
    }
    CgOutcome {
        solution: x,
        iterations: max_iter,
        relative_residual: rel,
        converged: false,
    }
}
