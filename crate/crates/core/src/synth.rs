//! Synthetic phantoms with exact ground truth, smooth multiplicative bias
//! and additive/impulsive/multiplicative noise.
//!
//! All randomness comes from xoshiro256** seeded through SplitMix64, with
//! uniforms built from the top 53 bits and normals from Box–Muller, so a
//! phantom can be regenerated bit-for-bit from its spec in any language.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Shape};
use crate::mask::BinaryMask;

/// Recorded in phantom metadata.
pub const RNG_NAME: &str = "xoshiro256** seeded by splitmix64; uniform = (next >> 11) * 2^-53; normal = Box-Muller (cos branch)";

/// Lowest intensity a generated pixel may take.
pub const INTENSITY_FLOOR: f64 = 1e-3;

/// Noise densities used for the robustness grid.
pub const NOISE_GRID: [f64; 6] = [0.02, 0.04, 0.06, 0.08, 0.1, 0.2];

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $kw),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok($name::$variant),)+
                    other => Err(Error::param(format!(
                        concat!("unknown ", stringify!($name), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

keyword_enum!(
    /// Foreground geometry.
    PhantomShape {
        Disk => "disk",
        TwoDisks => "two-disks",
        Ring => "ring",
        CheckerBlob => "checker-blob",
    }
);

keyword_enum!(
    BiasKind {
        None => "none",
        LinearRamp => "linear-ramp",
        GaussianBump => "gaussian-bump",
        LowFreqSinusoid => "low-freq-sinusoid",
    }
);

keyword_enum!(
    NoiseKind {
        None => "none",
        Gaussian => "gaussian",
        SaltPepper => "salt-pepper",
        Speckle => "speckle",
    }
);

/// Multiplicative bias; `amplitude` 0.4 means values in `[0.6, 1.4]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasSpec {
    pub kind: BiasKind,
    pub amplitude: f64,
}

impl BiasSpec {
    pub const NONE: BiasSpec = BiasSpec {
        kind: BiasKind::None,
        amplitude: 0.0,
    };
}

/// For Gaussian and speckle noise `density` is the variance; for
/// salt-and-pepper it is the fraction of pixels hit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub density: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        kind: NoiseKind::None,
        density: 0.0,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub kind: PhantomShape,
    pub fg_level: f64,
    pub bg_level: f64,
    pub bias: BiasSpec,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            shape: Shape::new(336, 336).expect("static shape"),
            kind: PhantomShape::Disk,
            fg_level: 0.7,
            bg_level: 0.2,
            bias: BiasSpec::NONE,
            noise: NoiseSpec::NONE,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fg_level", self.fg_level), ("bg_level", self.bg_level)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.fg_level == self.bg_level {
            return Err(Error::param("fg_level and bg_level must differ"));
        }
        if !(self.bias.amplitude >= 0.0 && self.bias.amplitude < 1.0) {
            return Err(Error::param(format!(
                "bias amplitude must be in [0, 1), got {}",
                self.bias.amplitude
            )));
        }
        if !(0.0..=0.2).contains(&self.noise.density) {
            return Err(Error::param(format!(
                "noise density must be in [0, 0.2], got {}",
                self.noise.density
            )));
        }
        Ok(())
    }
}

/// Everything [`generate`] produces.
#[derive(Clone, Debug)]
pub struct Phantom {
    /// Observed intensities in `[INTENSITY_FLOOR, 1]`.
    pub image: ScalarField,
    pub truth: BinaryMask,
    /// Piecewise-constant intensities before bias and noise.
    pub clean: ScalarField,
    pub bias: ScalarField,
}

/// Seeded source of uniforms and normals.
pub struct NoiseSource {
    rng: Xoshiro256StarStar,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

pub fn truth_mask(shape: Shape, kind: PhantomShape) -> BinaryMask {
    let (h, w) = (shape.height() as f64, shape.width() as f64);
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    let m = h.min(w);
    let inside = |y: f64, x: f64, oy: f64, ox: f64, r: f64| {
        let (dy, dx) = (y - oy, x - ox);
        dy * dy + dx * dx <= r * r
    };
    BinaryMask::from_fn(shape, |y, x| {
        let (y, x) = (y as f64, x as f64);
        match kind {
            PhantomShape::Disk => inside(y, x, cy, cx, disk_radius(shape)),
            PhantomShape::TwoDisks => {
                let r = 0.18 * m;
                inside(y, x, cy, cx - 0.25 * w, r) || inside(y, x, cy, cx + 0.25 * w, r)
            }
            PhantomShape::Ring => {
                let (dy, dx) = (y - cy, x - cx);
                let d2 = dy * dy + dx * dx;
                let (r0, r1) = (0.15 * m, 0.35 * m);
                d2 >= r0 * r0 && d2 <= r1 * r1
            }
            PhantomShape::CheckerBlob => {
                // blobs on the even cells of a 3×3 checkerboard
                let r = 0.12 * m;
                (0..3).any(|i| {
                    (0..3).any(|j| {
                        (i + j) % 2 == 0
                            && inside(y, x, (i as f64 + 0.5) * h / 3.0, (j as f64 + 0.5) * w / 3.0, r)
                    })
                })
            }
        }
    })
}

/// Radius of the single-disk phantom: 30% of the short side.
pub fn disk_radius(shape: Shape) -> f64 {
    0.3 * shape.height().min(shape.width()) as f64
}

pub fn bias_field(shape: Shape, bias: BiasSpec) -> ScalarField {
    let (h, w) = (shape.height() as f64, shape.width() as f64);
    let a = bias.amplitude;
    let m = h.min(w);
    ScalarField::from_fn(shape, |y, x| {
        let (yn, xn) = (y as f64 / (h - 1.0), x as f64 / (w - 1.0));
        match bias.kind {
            BiasKind::None => 1.0,
            BiasKind::LinearRamp => 1.0 + a * (xn + yn - 1.0),
            BiasKind::GaussianBump => {
                let (dy, dx) = (y as f64 - 0.3 * h, x as f64 - 0.3 * w);
                let s = 0.4 * m;
                1.0 - a + 2.0 * a * (-(dy * dy + dx * dx) / (2.0 * s * s)).exp()
            }
            BiasKind::LowFreqSinusoid => {
                1.0 + a * (2.0 * PI * xn + 0.3).sin() * (PI * yn).cos()
            }
        }
    })
}

/// Corrupts intensities in `[0, 1]` and clips back to
/// `[INTENSITY_FLOOR, 1]`.
pub fn apply_noise(f: &ScalarField, spec: NoiseSpec, seed: u64) -> ScalarField {
    let mut src = NoiseSource::new(seed);
    let density = spec.density;
    let sd = density.sqrt();
    let noisy = match spec.kind {
        NoiseKind::None => f.clone(),
        _ if density == 0.0 => f.clone(),
        NoiseKind::Gaussian => f.map(|v| v + sd * src.normal()),
        NoiseKind::SaltPepper => f.map(|v| {
            let hit = src.uniform() < density;
            let salt = src.uniform() >= 0.5;
            match (hit, salt) {
                (false, _) => v,
                (true, false) => 0.0,
                (true, true) => 1.0,
            }
        }),
        NoiseKind::Speckle => f.map(|v| v * (1.0 + sd * src.normal())),
    };
    noisy.map(|v| v.clamp(INTENSITY_FLOOR, 1.0))
}

pub fn generate(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let truth = truth_mask(spec.shape, spec.kind);
    let clean = ScalarField::from_vec_unchecked(
        spec.shape,
        truth
            .labels()
            .iter()
            .map(|&fg| if fg { spec.fg_level } else { spec.bg_level })
            .collect(),
    );
    let bias = bias_field(spec.shape, spec.bias);
    let biased = clean.mul(&bias).map(|v| v.clamp(INTENSITY_FLOOR, 1.0));
    let image = apply_noise(&biased, spec.noise, spec.seed);
    Ok(Phantom {
        image,
        truth,
        clean,
        bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: NoiseKind, density: f64) -> PhantomSpec {
        PhantomSpec {
            noise: NoiseSpec { kind, density },
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn identity_composition_without_bias_or_noise() {
        let p = generate(&spec(NoiseKind::None, 0.0)).unwrap();
        assert_eq!(p.image, p.clean);
        assert!(p.bias.as_slice().iter().all(|&b| b == 1.0));
    }

    #[test]
    fn same_seed_same_phantom() {
        for kind in [NoiseKind::Gaussian, NoiseKind::SaltPepper, NoiseKind::Speckle] {
            let a = generate(&spec(kind, 0.1)).unwrap();
            let b = generate(&spec(kind, 0.1)).unwrap();
            assert_eq!(a.image.as_slice(), b.image.as_slice());
            let mut other = spec(kind, 0.1);
            other.seed = 43;
            assert_ne!(generate(&other).unwrap().image, a.image);
        }
    }

    #[test]
    fn disk_area_matches_enumeration() {
        let s = Shape::new(336, 336).unwrap();
        let truth = truth_mask(s, PhantomShape::Disk);
        let r = disk_radius(s);
        let c = 335.0 / 2.0;
        let mut count = 0;
        for y in 0..336 {
            for x in 0..336 {
                let (dy, dx) = (y as f64 - c, x as f64 - c);
                if dy * dy + dx * dx <= r * r {
                    count += 1;
                }
            }
        }
        assert_eq!(truth.count_foreground(), count);
    }

    #[test]
    fn all_shapes_nontrivial() {
        let s = Shape::new(96, 128).unwrap();
        for &kind in PhantomShape::ALL {
            let n = truth_mask(s, kind).count_foreground();
            assert!(n > s.len() / 20 && n < s.len() / 2, "{kind}: {n}");
        }
    }

    #[test]
    fn zero_density_is_identity() {
        let s = Shape::new(20, 20).unwrap();
        let f = ScalarField::from_fn(s, |y, x| 0.1 + 0.04 * ((x + y) % 10) as f64);
        for kind in [NoiseKind::Gaussian, NoiseKind::SaltPepper, NoiseKind::Speckle] {
            assert_eq!(apply_noise(&f, NoiseSpec { kind, density: 0.0 }, 1), f);
        }
    }

    #[test]
    fn salt_pepper_fraction_within_binomial_bound() {
        let s = Shape::new(336, 336).unwrap();
        let f = ScalarField::filled(s, 0.5);
        let noisy = apply_noise(
            &f,
            NoiseSpec {
                kind: NoiseKind::SaltPepper,
                density: 0.1,
            },
            7,
        );
        let altered = noisy.as_slice().iter().filter(|&&v| v != 0.5).count() as f64;
        let frac = altered / s.len() as f64;
        assert!((0.092..=0.108).contains(&frac), "{frac}");
    }

    #[test]
    fn gaussian_variance_matches_density() {
        let s = Shape::new(336, 336).unwrap();
        let f = ScalarField::filled(s, 0.5);
        let noisy = apply_noise(
            &f,
            NoiseSpec {
                kind: NoiseKind::Gaussian,
                density: 0.02,
            },
            9,
        );
        let diff = noisy.sub(&f);
        let mean = diff.mean();
        let var = diff.map(|v| (v - mean) * (v - mean)).sum() / (s.len() - 1) as f64;
        assert!((var - 0.02).abs() <= 0.2 * 0.02, "{var}");
    }

    #[test]
    fn generated_intensities_positive_and_bias_bounded() {
        for &kind in BiasKind::ALL {
            let mut sp = spec(NoiseKind::Speckle, 0.2);
            sp.bias = BiasSpec {
                kind,
                amplitude: 0.4,
            };
            let p = generate(&sp).unwrap();
            assert!(p.image.min() >= INTENSITY_FLOOR && p.image.max() <= 1.0);
            assert!(p.bias.min() >= 0.6 - 1e-12 && p.bias.max() <= 1.4 + 1e-12, "{kind}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut sp = PhantomSpec::default();
        sp.fg_level = sp.bg_level;
        assert!(generate(&sp).is_err());
        let mut sp = PhantomSpec::default();
        sp.bias.amplitude = 1.0;
        assert!(generate(&sp).is_err());
        let mut sp = PhantomSpec::default();
        sp.noise.density = 0.3;
        assert!(generate(&sp).is_err());
        let mut sp = PhantomSpec::default();
        sp.bg_level = 0.0;
        assert!(generate(&sp).is_err());
    }

    #[test]
    fn keywords_roundtrip() {
        for &k in NoiseKind::ALL {
            assert_eq!(k.as_str().parse::<NoiseKind>().unwrap(), k);
        }
        for &k in PhantomShape::ALL {
            assert_eq!(k.to_string().parse::<PhantomShape>().unwrap(), k);
        }
        assert!("rician".parse::<NoiseKind>().is_err());
    }
}
