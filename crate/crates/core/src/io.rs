//! Binary PGM (P5) rasters, the log-domain transform, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, Shape};
use crate::mask::BinaryMask;
use crate::metrics::{confusion, dice, precision, rtg_ratio};
use crate::solver::SegmentationResult;

/// Floor of the affine intensity map applied before the logarithm.
pub const LOG_FLOOR: f64 = 0.01;

pub const METRICS_HEADER: &str = "image,dice,precision,rtg_ratio,iters,seconds,converged";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    maxval: u16,
    pixels: Vec<u16>,
}

impl RasterImage {
    pub fn new(height: usize, width: usize, maxval: u16, pixels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param(format!("raster must be nonempty, got {height}x{width}")));
        }
        if maxval == 0 {
            return Err(Error::param("maxval must be positive"));
        }
        if pixels.len() != height * width {
            return Err(Error::param(format!(
                "expected {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|&&p| p > maxval) {
            return Err(Error::param(format!("pixel {p} exceeds maxval {maxval}")));
        }
        Ok(Self {
            height,
            width,
            maxval,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn maxval(&self) -> u16 {
        self.maxval
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn shape(&self) -> Result<Shape> {
        Shape::new(self.height, self.width)
    }

    /// Pixels divided by maxval.
    pub fn to_unit(&self) -> Result<ScalarField> {
        let m = self.maxval as f64;
        ScalarField::new(
            self.shape()?,
            self.pixels.iter().map(|&p| p as f64 / m).collect(),
        )
    }

    /// Foreground where the pixel exceeds half of maxval.
    pub fn to_mask(&self) -> Result<BinaryMask> {
        let half = self.maxval / 2;
        BinaryMask::new(self.shape()?, self.pixels.iter().map(|&p| p > half).collect())
    }

    pub fn from_mask(mask: &BinaryMask) -> Self {
        let s = mask.shape();
        Self {
            height: s.height(),
            width: s.width(),
            maxval: 255,
            pixels: mask.labels().iter().map(|&fg| if fg { 255 } else { 0 }).collect(),
        }
    }

    /// Quantizes values in `[0, 1]`, clamping anything outside.
    pub fn from_unit(f: &ScalarField, maxval: u16) -> Self {
        let m = maxval as f64;
        Self {
            height: f.height(),
            width: f.width(),
            maxval,
            pixels: f
                .as_slice()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * m).round() as u16)
                .collect(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space_and_comments();
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u64))
                .ok_or_else(|| Error::parse(start, format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        Ok(value)
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<RasterImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "bad magic, expected P5"));
    }
    let mut cur = Cursor { bytes, pos: 2 };
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        _ => return Err(Error::parse(2, "expected whitespace after magic")),
    }
    let width_at = cur.pos;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(width_at, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "expected single whitespace before raster")),
    }
    let sample = if maxval < 256 { 1 } else { 2 };
    let n = width
        .checked_mul(height)
        .filter(|&n| n <= usize::MAX as u64 / 2)
        .ok_or_else(|| Error::parse(width_at, "image dimensions overflow"))? as usize;
    let payload = &bytes[cur.pos..];
    if payload.len() < n * sample {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: need {} bytes, have {}", n * sample, payload.len()),
        ));
    }
    let mut pixels = Vec::with_capacity(n);
    for i in 0..n {
        let v = if sample == 1 {
            payload[i] as u16
        } else {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]])
        };
        if v as u64 > maxval {
            return Err(Error::parse(
                cur.pos + i * sample,
                format!("pixel {v} exceeds maxval {maxval}"),
            ));
        }
        pixels.push(v);
    }
    Ok(RasterImage {
        height: height as usize,
        width: width as usize,
        maxval: maxval as u16,
        pixels,
    })
}

/// Canonical encoding: `P5\n{w} {h}\n{maxval}\n` then the samples.
pub fn write_pgm(img: &RasterImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval);
    let sample = if img.maxval < 256 { 1 } else { 2 };
    let mut out = Vec::with_capacity(header.len() + img.pixels.len() * sample);
    out.extend_from_slice(header.as_bytes());
    if sample == 1 {
        out.extend(img.pixels.iter().map(|&p| p as u8));
    } else {
        for &p in &img.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    }
    out
}

pub fn read_pgm_file(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    read_pgm(&bytes)
}

pub fn write_pgm_file(path: impl AsRef<Path>, img: &RasterImage) -> Result<()> {
    write_file(path.as_ref(), &write_pgm(img))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `ln(e0 + (1 - e0) f)` for intensities `f` in `[0, 1]`.
pub fn intensity_to_log(f: &ScalarField) -> ScalarField {
    f.map(|v| (LOG_FLOOR + (1.0 - LOG_FLOOR) * v.clamp(0.0, 1.0)).ln())
}

pub fn to_log_domain(img: &RasterImage) -> Result<ScalarField> {
    Ok(intensity_to_log(&img.to_unit()?))
}

/// `exp(f)` rescaled onto `[0, maxval]`; a uniform field maps to maxval.
pub fn from_log_domain(f: &ScalarField, maxval: u16) -> RasterImage {
    let e = f.map(f64::exp);
    let (lo, hi) = (e.min(), e.max());
    let unit = if hi > lo {
        e.map(|v| (v - lo) / (hi - lo))
    } else {
        ScalarField::filled(f.shape(), 1.0)
    };
    RasterImage::from_unit(&unit, maxval)
}

/// Counts of `[0, 255]` samples of an 8-bit raster.
pub fn histogram(img: &RasterImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    let scale = 255.0 / img.maxval as f64;
    for &p in &img.pixels {
        h[(p as f64 * scale).round() as usize] += 1;
    }
    h
}

/// One metrics row. `truth` enables dice and precision.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub image: String,
    pub dice: Option<f64>,
    pub precision: Option<f64>,
    pub rtg_ratio: Option<f64>,
    pub iters: usize,
    pub seconds: f64,
    pub converged: bool,
}

impl MetricsRow {
    pub fn compute(
        image: &str,
        result: &SegmentationResult,
        image_log: &ScalarField,
        truth: Option<&BinaryMask>,
    ) -> Result<Self> {
        let (dice_v, prec) = match truth {
            Some(t) => {
                let c = confusion(&result.mask, t)?;
                (Some(dice(&c)), precision(&c).ok())
            }
            None => (None, None),
        };
        let rtg = rtg_ratio(&result.corrected_image, &image_log.map(f64::exp)).ok();
        Ok(Self {
            image: image.to_string(),
            dice: dice_v,
            precision: prec,
            rtg_ratio: rtg,
            iters: result.report.iterations,
            seconds: result.report.seconds,
            converged: result.report.converged,
        })
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{:.3},{}",
            self.image,
            opt(self.dice),
            opt(self.precision),
            opt(self.rtg_ratio),
            self.iters,
            self.seconds,
            self.converged
        )
    }
}

/// Paths written by [`write_report`].
#[derive(Clone, Debug)]
pub struct ReportFiles {
    pub mask: PathBuf,
    pub corrected: PathBuf,
    pub reflectance: PathBuf,
    pub bias: PathBuf,
    pub metrics: PathBuf,
    pub histogram: PathBuf,
}

impl ReportFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            mask: dir.join("mask.pgm"),
            corrected: dir.join("corrected.pgm"),
            reflectance: dir.join("reflectance.pgm"),
            bias: dir.join("bias.pgm"),
            metrics: dir.join("metrics.csv"),
            histogram: dir.join("histogram.csv"),
        }
    }
}

/// Writes mask, corrected image, S and B layers, a one-row metrics CSV and
/// a 256-bin histogram of original vs corrected intensities into `dir`.
pub fn write_report(
    dir: &Path,
    result: &SegmentationResult,
    image_log: &ScalarField,
    row: &MetricsRow,
) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|source| Error::File {
        path: dir.to_path_buf(),
        source,
    })?;
    let files = ReportFiles::in_dir(dir);
    write_pgm_file(&files.mask, &RasterImage::from_mask(&result.mask))?;
    let corrected_log = image_log.sub(&result.b_field);
    let corrected = from_log_domain(&corrected_log, 255);
    write_pgm_file(&files.corrected, &corrected)?;
    write_pgm_file(&files.reflectance, &from_log_domain(&result.s_field, 255))?;
    write_pgm_file(&files.bias, &from_log_domain(&result.b_field, 255))?;

    write_file(
        &files.metrics,
        format!("{METRICS_HEADER}\n{}\n", row.to_csv()).as_bytes(),
    )?;

    let before = histogram(&from_log_domain(image_log, 255));
    let after = histogram(&corrected);
    let mut csv = String::from("bin,original,corrected\n");
    for b in 0..256 {
        let _ = writeln!(csv, "{b},{},{}", before[b], after[b]);
    }
    write_file(&files.histogram, csv.as_bytes())?;
    Ok(files)
}
