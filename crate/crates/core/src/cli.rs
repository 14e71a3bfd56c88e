//! Command-line front end: `segment`, `correct`, `synth`, `eval`, `sweep`.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 finished with a
//! warning (non-convergence, CG warnings, undefined metric). Files are still
//! written in the warning case.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::io::{
    intensity_to_log, read_pgm_file, to_log_domain, write_pgm_file, write_report, MetricsRow,
    RasterImage, METRICS_HEADER,
};
use crate::metrics::{confusion, dice, precision, rtg_ratio};
use crate::solver::{run, SegmentationResult};
use crate::synth::{generate, NoiseKind, NoiseSpec, RNG_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_WARNING: i32 = 3;

pub const SWEEP_HEADER: &str = "tau,noise,density,dice,precision,rtg_ratio,iters,converged";

#[derive(Parser, Debug)]
#[command(name = "reflsm", version, about = "Joint segmentation and bias correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Segment a PGM image and write mask, layers and metrics.
    Segment(Opts),
    /// Bias-correct a PGM image; reports the RTG ratio.
    Correct(Opts),
    /// Generate a phantom with ground truth.
    Synth(Opts),
    /// Score a predicted mask against ground truth.
    Eval(Opts),
    /// Run a tau by noise grid on phantoms.
    Sweep(Opts),
}

macro_rules! flag_opts {
    ($($field:ident),+ $(,)?) => {
        #[derive(Args, Debug, Default)]
        struct Opts {
            /// key=value file applied before the flags.
            #[arg(long)]
            config: Option<PathBuf>,
            /// Print the resolved configuration and exit.
            #[arg(long)]
            print_config: bool,
            $(
                #[arg(long, value_name = "VALUE", allow_hyphen_values = true)]
                $field: Option<String>,
            )+
        }

        impl Opts {
            fn pairs(&self) -> Vec<(&'static str, &str)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field), v.as_str()));
                    }
                )+
                out
            }
        }
    };
}

flag_opts!(
    lambda_i, alpha_b, beta, theta, tau, rho1, sigma, alpha_mag, eps_div, eps_norm, eps_w,
    k_max, delta_tol, reference, input, truth, original, corrected, out, height, width, shape,
    fg_level, bg_level, bias, bias_amplitude, noise, noise_density, seed, sweep_tau,
    sweep_noise, sweep_density, jobs,
);

impl Opts {
    /// Defaults, then the config file, then flags, then `REFLSM_SEED`.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.pairs() {
            cfg.set(k, v)?;
        }
        cfg.apply_env()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses arguments (including the program name) and runs a subcommand.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let (opts, cmd): (&Opts, fn(&RunConfig) -> i32) = match &cli.command {
        Command::Segment(o) => (o, cmd_segment),
        Command::Correct(o) => (o, cmd_correct),
        Command::Synth(o) => (o, cmd_synth),
        Command::Eval(o) => (o, cmd_eval),
        Command::Sweep(o) => (o, cmd_sweep),
    };
    let cfg = match opts.resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    if opts.print_config {
        print!("{}", cfg.to_text());
        return EXIT_OK;
    }
    cmd(&cfg)
}

fn finish(outcome: Result<bool>) -> i32 {
    match outcome {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_WARNING,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn warn_about(result: &SegmentationResult) -> bool {
    let r = &result.report;
    if !r.converged {
        eprintln!("warning: not converged after {} iterations", r.iterations);
    }
    for w in &r.diagnostics.cg_warnings {
        eprintln!(
            "warning: CG stopped at relative residual {:.2e} in iteration {}",
            w.relative_residual, w.iteration
        );
    }
    if r.diagnostics.degenerate_init {
        eprintln!("warning: constant image, started from a centered disk");
    }
    r.converged && !r.diagnostics.has_warnings()
}

struct Segmented {
    result: SegmentationResult,
    row: MetricsRow,
    out: PathBuf,
}

fn segment_input(cfg: &RunConfig) -> Result<Segmented> {
    let input = required(&cfg.input, "input")?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let image_log = to_log_domain(&read_pgm_file(input)?)?;
    let truth = match &cfg.truth {
        Some(p) => Some(read_pgm_file(p)?.to_mask()?),
        None => None,
    };
    let result = run(&image_log, &cfg.params)?;
    let row = MetricsRow::compute(&stem(input), &result, &image_log, truth.as_ref())?;
    write_report(&out, &result, &image_log, &row)?;
    Ok(Segmented {
        result,
        row,
        out,
    })
}

pub fn cmd_segment(cfg: &RunConfig) -> i32 {
    finish(segment_input(cfg).map(|s| {
        println!("mask={}", s.out.join("mask.pgm").display());
        println!("iterations={}", s.result.report.iterations);
        println!("converged={}", s.result.report.converged);
        if let Some(d) = s.row.dice {
            println!("dice={d}");
        }
        warn_about(&s.result)
    }))
}

pub fn cmd_correct(cfg: &RunConfig) -> i32 {
    finish(segment_input(cfg).map(|s| {
        println!("corrected={}", s.out.join("corrected.pgm").display());
        println!("histogram={}", s.out.join("histogram.csv").display());
        match s.row.rtg_ratio {
            Some(r) => println!("rtg_ratio={r}"),
            None => println!("rtg_ratio=undefined"),
        }
        warn_about(&s.result) && s.row.rtg_ratio.is_some()
    }))
}

fn synth(cfg: &RunConfig) -> Result<bool> {
    let out = required(&cfg.out, "out")?;
    fs::create_dir_all(out).map_err(|source| Error::File {
        path: out.to_path_buf(),
        source,
    })?;
    let p = generate(&cfg.phantom)?;
    write_pgm_file(out.join("image.pgm"), &RasterImage::from_unit(&p.image, 65535))?;
    write_pgm_file(out.join("clean.pgm"), &RasterImage::from_unit(&p.clean, 65535))?;
    write_pgm_file(
        out.join("bias.pgm"),
        &RasterImage::from_unit(&p.bias.scale(0.5), 65535),
    )?;
    write_pgm_file(out.join("truth.pgm"), &RasterImage::from_mask(&p.truth))?;

    let mut meta = String::new();
    for key in [
        "height", "width", "shape", "fg_level", "bg_level", "bias", "bias_amplitude", "noise",
        "noise_density", "seed",
    ] {
        let _ = writeln!(meta, "{key}={}", cfg.get(key).unwrap_or_default());
    }
    let _ = writeln!(meta, "rng={RNG_NAME}");
    let _ = writeln!(meta, "bias_pgm_scale=2");
    let _ = writeln!(meta, "image_pgm_scale=1");
    let path = out.join("phantom.txt");
    fs::write(&path, meta).map_err(|source| Error::File { path, source })?;
    println!("phantom={}", out.join("image.pgm").display());
    Ok(true)
}

pub fn cmd_synth(cfg: &RunConfig) -> i32 {
    finish(synth(cfg))
}

fn eval(cfg: &RunConfig) -> Result<bool> {
    let pred_path = required(&cfg.input, "input")?;
    let pred = read_pgm_file(pred_path)?.to_mask()?;
    let truth = read_pgm_file(required(&cfg.truth, "truth")?)?.to_mask()?;
    let c = confusion(&pred, &truth)?;
    let d = dice(&c);
    let prec = precision(&c).ok();
    let rtg = match (&cfg.original, &cfg.corrected) {
        (Some(o), Some(k)) => {
            let o = to_log_domain(&read_pgm_file(o)?)?.map(f64::exp);
            let k = to_log_domain(&read_pgm_file(k)?)?.map(f64::exp);
            rtg_ratio(&k, &o).ok()
        }
        _ => None,
    };
    let show = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "undefined".into());
    println!("dice={d}");
    println!("precision={}", show(prec));
    if cfg.original.is_some() && cfg.corrected.is_some() {
        println!("rtg_ratio={}", show(rtg));
    }
    if let Some(csv) = &cfg.out {
        let row = MetricsRow {
            image: stem(pred_path),
            dice: Some(d),
            precision: prec,
            rtg_ratio: rtg,
            iters: 0,
            seconds: 0.0,
            converged: true,
        };
        append_row(csv, &row)?;
    }
    Ok(prec.is_some())
}

fn append_row(csv: &Path, row: &MetricsRow) -> Result<()> {
    let fresh = !csv.exists();
    let io_err = |source| Error::File {
        path: csv.to_path_buf(),
        source,
    };
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(csv)
        .map_err(io_err)?;
    if fresh {
        writeln!(f, "{METRICS_HEADER}").map_err(io_err)?;
    }
    writeln!(f, "{}", row.to_csv()).map_err(io_err)
}

pub fn cmd_eval(cfg: &RunConfig) -> i32 {
    finish(eval(cfg))
}

/// One cell of a sweep grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub tau: f64,
    pub noise: NoiseSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub dice: f64,
    pub precision: Option<f64>,
    pub rtg_ratio: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.cell.tau,
            self.cell.noise.kind,
            self.cell.noise.density,
            self.dice,
            opt(self.precision),
            opt(self.rtg_ratio),
            self.iters,
            self.converged
        )
    }
}

/// Cells in sorted order: by tau, then noise kind, then density.
pub fn sweep_cells(cfg: &RunConfig) -> Vec<SweepCell> {
    let taus = if cfg.sweep_tau.is_empty() {
        vec![cfg.params.tau]
    } else {
        cfg.sweep_tau.clone()
    };
    let kinds = if cfg.sweep_noise.is_empty() {
        vec![cfg.phantom.noise.kind]
    } else {
        cfg.sweep_noise.clone()
    };
    let densities = if cfg.sweep_density.is_empty() {
        vec![cfg.phantom.noise.density]
    } else {
        cfg.sweep_density.clone()
    };
    let mut cells = Vec::new();
    for &tau in &taus {
        for &kind in &kinds {
            for &density in &densities {
                let density = if kind == NoiseKind::None { 0.0 } else { density };
                cells.push(SweepCell {
                    tau,
                    noise: NoiseSpec { kind, density },
                });
            }
        }
    }
    cells.sort_by(|a, b| {
        a.tau
            .total_cmp(&b.tau)
            .then(a.noise.kind.cmp(&b.noise.kind))
            .then(a.noise.density.total_cmp(&b.noise.density))
    });
    cells.dedup();
    cells
}

pub fn run_cell(cfg: &RunConfig, cell: SweepCell) -> Result<SweepRow> {
    let mut spec = cfg.phantom;
    spec.noise = cell.noise;
    let phantom = generate(&spec)?;
    let image_log = intensity_to_log(&phantom.image);
    let mut params = cfg.params.clone();
    params.tau = cell.tau;
    let result = run(&image_log, &params)?;
    let c = confusion(&result.mask, &phantom.truth)?;
    Ok(SweepRow {
        cell,
        dice: dice(&c),
        precision: precision(&c).ok(),
        rtg_ratio: rtg_ratio(&result.corrected_image, &image_log.map(f64::exp)).ok(),
        iters: result.report.iterations,
        converged: result.report.converged,
    })
}

/// Runs every cell on up to `cfg.jobs` threads; rows come back in cell order.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(cfg);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(|&c| run_cell(cfg, c)).collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

fn sweep(cfg: &RunConfig) -> Result<bool> {
    let out = required(&cfg.out, "out")?;
    let rows = run_sweep(cfg)?;
    fs::create_dir_all(out).map_err(|source| Error::File {
        path: out.to_path_buf(),
        source,
    })?;
    let path = out.join("sweep.csv");
    fs::write(&path, sweep_csv(&rows)).map_err(|source| Error::File {
        path: path.clone(),
        source,
    })?;
    println!("sweep={}", path.display());
    let all_converged = rows.iter().all(|r| r.converged);
    if !all_converged {
        let n = rows.iter().filter(|r| !r.converged).count();
        eprintln!("warning: {n} of {} cells did not converge", rows.len());
    }
    Ok(all_converged)
}

pub fn cmd_sweep(cfg: &RunConfig) -> i32 {
    finish(sweep(cfg))
}
