use crate::error::{Error, Result};
use crate::prior::ReferenceSource;

/// Model weights and stopping controls.
///
/// `eps_div` guards the region-mean denominators, `eps_norm` the
/// reference-field normalization; `eps_w` weights the data term of the bias
/// smoother.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams {
    /// Retinex fidelity weight on `(I - S - B)²`.
    pub lambda_i: f64,
    /// Bias-field smoothness.
    pub alpha_b: f64,
    /// Total variation weight on the reflectance.
    pub beta: f64,
    /// Level-set smoothness.
    pub theta: f64,
    /// Structural prior weight.
    pub tau: f64,
    /// ADMM penalty.
    pub rho1: f64,
    /// Gaussian scale of the structural operator, in pixels.
    pub sigma: f64,
    /// Target magnitude of the reference field.
    pub alpha_mag: f64,
    pub eps_div: f64,
    pub eps_norm: f64,
    /// Data weight of the bias smoother. `None` means "same as `lambda_i`".
    pub eps_w: Option<f64>,
    pub k_max: usize,
    /// Relative L2 change of `u` below which the outer loop stops.
    pub delta_tol: f64,
    pub reference: ReferenceSource,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda_i: 1.0,
            alpha_b: 15.0,
            beta: 0.02,
            theta: 0.1,
            tau: 0.5,
            rho1: 1.0,
            sigma: 3.0,
            alpha_mag: 0.1,
            eps_div: 1e-8,
            eps_norm: 1e-6,
            eps_w: None,
            k_max: 30,
            delta_tol: 1e-4,
            reference: ReferenceSource::Raw,
        }
    }
}

impl SolverParams {
    pub fn eps_w(&self) -> f64 {
        self.eps_w.unwrap_or(self.lambda_i)
    }

    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be finite and >= 0, got {v}")))
            }
        }
        fn positive(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be finite and > 0, got {v}")))
            }
        }
        nonneg("lambda_i", self.lambda_i)?;
        nonneg("alpha_b", self.alpha_b)?;
        nonneg("beta", self.beta)?;
        positive("theta", self.theta)?;
        nonneg("tau", self.tau)?;
        positive("rho1", self.rho1)?;
        positive("sigma", self.sigma)?;
        positive("alpha_mag", self.alpha_mag)?;
        positive("eps_div", self.eps_div)?;
        positive("eps_norm", self.eps_norm)?;
        positive("eps_w", self.eps_w())?;
        if self.k_max == 0 {
            return Err(Error::param("k_max must be >= 1"));
        }
        // delta_tol may be +inf (stop after one iteration) but not NaN.
        if !(self.delta_tol > 0.0) {
            return Err(Error::param(format!(
                "delta_tol must be > 0, got {}",
                self.delta_tol
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = SolverParams::default();
        p.validate().unwrap();
        assert_eq!(p.eps_w(), 1.0);
    }

    #[test]
    fn sign_violations_rejected() {
        let cases: Vec<Box<dyn Fn(&mut SolverParams)>> = vec![
            Box::new(|p| p.theta = 0.0),
            Box::new(|p| p.rho1 = -1.0),
            Box::new(|p| p.beta = -0.1),
            Box::new(|p| p.tau = f64::NAN),
            Box::new(|p| p.k_max = 0),
            Box::new(|p| p.delta_tol = 0.0),
            Box::new(|p| {
                p.lambda_i = 0.0;
                p.eps_w = None;
            }),
        ];
        for mutate in cases {
            let mut p = SolverParams::default();
            mutate(&mut p);
            assert!(p.validate().is_err(), "{p:?}");
        }
        let p = SolverParams {
            delta_tol: f64::INFINITY,
            ..Default::default()
        };
        p.validate().unwrap();
    }
}
