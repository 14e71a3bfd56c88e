//! Flat `key=value` run configuration shared by the config file and the
//! command-line flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Shape;
use crate::prior::ReferenceSource;
use crate::solver::SolverParams;
use crate::synth::{BiasKind, NoiseKind, PhantomShape, PhantomSpec};

/// Environment variable that overrides the phantom seed.
pub const SEED_ENV: &str = "REFLSM_SEED";

/// Every accepted key, in the order `--print-config` emits them.
pub const KEYS: &[&str] = &[
    "lambda_i",
    "alpha_b",
    "beta",
    "theta",
    "tau",
    "rho1",
    "sigma",
    "alpha_mag",
    "eps_div",
    "eps_norm",
    "eps_w",
    "k_max",
    "delta_tol",
    "reference",
    "input",
    "truth",
    "original",
    "corrected",
    "out",
    "height",
    "width",
    "shape",
    "fg_level",
    "bg_level",
    "bias",
    "bias_amplitude",
    "noise",
    "noise_density",
    "seed",
    "sweep_tau",
    "sweep_noise",
    "sweep_density",
    "jobs",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub params: SolverParams,
    pub input: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub original: Option<PathBuf>,
    pub corrected: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub phantom: PhantomSpec,
    pub sweep_tau: Vec<f64>,
    pub sweep_noise: Vec<NoiseKind>,
    pub sweep_density: Vec<f64>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SolverParams::default(),
            input: None,
            truth: None,
            original: None,
            corrected: None,
            out: None,
            phantom: PhantomSpec::default(),
            sweep_tau: Vec::new(),
            sweep_noise: Vec::new(),
            sweep_density: Vec::new(),
            jobs: 1,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

fn keyword<T: FromStr<Err = Error>>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

fn path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let p = &mut self.params;
        let ph = &mut self.phantom;
        match key {
            "lambda_i" => p.lambda_i = value(key, v)?,
            "alpha_b" => p.alpha_b = value(key, v)?,
            "beta" => p.beta = value(key, v)?,
            "theta" => p.theta = value(key, v)?,
            "tau" => p.tau = value(key, v)?,
            "rho1" => p.rho1 = value(key, v)?,
            "sigma" => p.sigma = value(key, v)?,
            "alpha_mag" => p.alpha_mag = value(key, v)?,
            "eps_div" => p.eps_div = value(key, v)?,
            "eps_norm" => p.eps_norm = value(key, v)?,
            "eps_w" => {
                p.eps_w = match v.trim() {
                    "" | "auto" => None,
                    s => Some(value(key, s)?),
                }
            }
            "k_max" => p.k_max = value(key, v)?,
            "delta_tol" => p.delta_tol = value(key, v)?,
            "reference" => {
                p.reference = match v.trim() {
                    "raw" => ReferenceSource::Raw,
                    "smoothed" => ReferenceSource::Smoothed,
                    other => {
                        return Err(Error::Config(format!(
                            "reference: expected raw or smoothed, got '{other}'"
                        )))
                    }
                }
            }
            "input" => self.input = path(v),
            "truth" => self.truth = path(v),
            "original" => self.original = path(v),
            "corrected" => self.corrected = path(v),
            "out" => self.out = path(v),
            "height" => {
                ph.shape = Shape::new(value(key, v)?, ph.shape.width())
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "width" => {
                ph.shape = Shape::new(ph.shape.height(), value(key, v)?)
                    .map_err(|e| Error::Config(e.to_string()))?
            }
            "shape" => ph.kind = keyword::<PhantomShape>(key, v)?,
            "fg_level" => ph.fg_level = value(key, v)?,
            "bg_level" => ph.bg_level = value(key, v)?,
            "bias" => ph.bias.kind = keyword::<BiasKind>(key, v)?,
            "bias_amplitude" => ph.bias.amplitude = value(key, v)?,
            "noise" => ph.noise.kind = keyword::<NoiseKind>(key, v)?,
            "noise_density" => ph.noise.density = value(key, v)?,
            "seed" => ph.seed = value(key, v)?,
            "sweep_tau" => self.sweep_tau = list(key, v)?,
            "sweep_noise" => {
                self.sweep_noise = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| keyword(key, s))
                    .collect::<Result<_>>()?
            }
            "sweep_density" => self.sweep_density = list(key, v)?,
            "jobs" => self.jobs = value(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comment lines are
    /// skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, file: &Path) -> Result<()> {
        let text = fs::read_to_string(file).map_err(|source| Error::File {
            path: file.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Replaces the phantom seed from `REFLSM_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.phantom.seed = value(SEED_ENV, &v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = &self.params;
        let ph = &self.phantom;
        Some(match key {
            "lambda_i" => p.lambda_i.to_string(),
            "alpha_b" => p.alpha_b.to_string(),
            "beta" => p.beta.to_string(),
            "theta" => p.theta.to_string(),
            "tau" => p.tau.to_string(),
            "rho1" => p.rho1.to_string(),
            "sigma" => p.sigma.to_string(),
            "alpha_mag" => p.alpha_mag.to_string(),
            "eps_div" => p.eps_div.to_string(),
            "eps_norm" => p.eps_norm.to_string(),
            "eps_w" => p.eps_w.map(|e| e.to_string()).unwrap_or_else(|| "auto".into()),
            "k_max" => p.k_max.to_string(),
            "delta_tol" => p.delta_tol.to_string(),
            "reference" => match p.reference {
                ReferenceSource::Raw => "raw".into(),
                ReferenceSource::Smoothed => "smoothed".into(),
            },
            "input" => show_path(&self.input),
            "truth" => show_path(&self.truth),
            "original" => show_path(&self.original),
            "corrected" => show_path(&self.corrected),
            "out" => show_path(&self.out),
            "height" => ph.shape.height().to_string(),
            "width" => ph.shape.width().to_string(),
            "shape" => ph.kind.to_string(),
            "fg_level" => ph.fg_level.to_string(),
            "bg_level" => ph.bg_level.to_string(),
            "bias" => ph.bias.kind.to_string(),
            "bias_amplitude" => ph.bias.amplitude.to_string(),
            "noise" => ph.noise.kind.to_string(),
            "noise_density" => ph.noise.density.to_string(),
            "seed" => ph.seed.to_string(),
            "sweep_tau" => join(&self.sweep_tau),
            "sweep_noise" => join(&self.sweep_noise),
            "sweep_density" => join(&self.sweep_density),
            "jobs" => self.jobs.to_string(),
            _ => return None,
        })
    }

    /// Every key with its resolved value, readable by [`RunConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).unwrap_or_default());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.phantom.validate()?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for &d in &self.sweep_density {
            if !(0.0..=0.2).contains(&d) {
                return Err(Error::Config(format!("sweep density {d} outside [0, 0.2]")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_then_parse_is_identity() {
        let mut c = RunConfig::default();
        c.apply_text(
            "# comment\n\ntau = 0.17\nbeta=0.3\neps_w=2.5\nshape=ring\nnoise=speckle\n\
             noise_density=0.06\nseed=99\nsweep_tau=0.001,0.04, 0.12\nsweep_noise=gaussian,salt-pepper\n\
             input=a b.pgm\nheight=64\nwidth=80\nreference=smoothed\njobs=3\n",
        )
        .unwrap();
        assert_eq!(c.params.tau, 0.17);
        assert_eq!(c.input.as_deref(), Some(Path::new("a b.pgm")));
        assert_eq!(c.sweep_tau, vec![0.001, 0.04, 0.12]);
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn later_settings_override() {
        let mut c = RunConfig::default();
        c.apply_text("tau=0.1\n").unwrap();
        c.set("tau", "0.3").unwrap();
        assert_eq!(c.params.tau, 0.3);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("taux=1\n"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("tau\n"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("tau=abc\n"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("noise=rician\n"), Err(Error::Config(_))));
        assert!(matches!(c.apply_text("height=1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn validation_follows_params() {
        let mut c = RunConfig::default();
        c.set("theta", "0").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("jobs", "0").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn every_key_has_a_value() {
        let c = RunConfig::default();
        for key in KEYS {
            assert!(c.get(key).is_some(), "{key}");
        }
    }
}
