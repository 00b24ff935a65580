//! The `dccf` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use dccf::colorspace::{rgb_to_hsv, smooth_hue_map, smooth_saturation_map, smooth_value_map};
use dccf::filters::StageOrder;
use dccf::io::{encode_png, save_plane, write_atomic};
use dccf::{
    fit, load_image, load_mask, load_stack, render_adjusted, save_image, save_stack, synth_perturb, Adjustment, Error,
    FitConfig, HueAdjust, LossMode, PerturbSpec, SaturationAdjust, ValueAdjust, ValueCurve,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dccf", version, about = "Fit and apply deep color curve filter maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposeMode {
    Standard,
    Smooth,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the V, S and H planes of an image as PNGs.
    Decompose {
        image: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        mode: DecomposeMode,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fit a filter stack that maps a composite onto its ground truth.
    Fit {
        composite: PathBuf,
        gt: PathBuf,
        mask: PathBuf,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long, default_value = "smooth")]
        mode: LossMode,
        #[arg(long, default_value_t = 500)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        #[arg(long, default_value = "VSH")]
        order: StageOrder,
        /// Keep fractional mask values instead of thresholding at 0.5.
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Apply a stack at full resolution and save one pipeline stage.
    Apply {
        image: PathBuf,
        stack: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
        stage: u8,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blend user intentions into a stack and apply it.
    Adjust {
        image: PathBuf,
        stack: PathBuf,
        /// Degrees, 0 to 360.
        #[arg(long)]
        hue_theta: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        hue_alpha: f64,
        #[arg(long, allow_negative_numbers = true)]
        sat_sigma: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sat_alpha: f64,
        /// JSON file with `{"v_min": .., "phis": [..]}`.
        #[arg(long)]
        val_curve: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        val_alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb the foreground of an image to make a synthetic composite.
    Synth {
        gt: PathBuf,
        mask: PathBuf,
        /// Hue rotation in degrees.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long)]
        soft: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        session_dir: PathBuf,
    },
}

/// A failed command with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => EXIT_USAGE,
            Error::NonFinite { .. } => EXIT_NUMERICAL,
            _ => EXIT_IO,
        };
        Failure { code, message: e.to_string() }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Decompose { image, mode, out_dir } => decompose(&image, mode, &out_dir),
        Command::Fit { composite, gt, mask, grid, mode, iters, seed, step, order, soft, out, report } => {
            let composite = load_image(&composite)?;
            let gt = load_image(&gt)?;
            let mask = load_mask(&mask, soft)?;
            let cfg = FitConfig { grid_w: grid, grid_h: grid, mode, max_iters: iters, seed, step, order, ..FitConfig::default() };
            let (stack, rep) = fit(&composite, &gt, &mask, &cfg)?;
            save_stack(&stack, &out)?;
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&rep.to_json()).expect("report serializes");
                write_atomic(&path, text.as_bytes())?;
            }
            println!("iterations {}  final mse {:.6e}  psnr {:.2} dB", rep.iterations_run, rep.final_mse, rep.final_psnr);
            Ok(())
        }
        Command::Apply { image, stack, stage, out } => {
            let img = load_image(&image)?;
            let stack = load_stack(&stack)?;
            let result = render_adjusted(&img, &stack, &Adjustment::default(), stage as usize)?;
            save_image(&result, &out)?;
            Ok(())
        }
        Command::Adjust { image, stack, hue_theta, hue_alpha, sat_sigma, sat_alpha, val_curve, val_alpha, out } => {
            let val = match val_curve {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| io_failure(&path, e))?;
                    let curve: ValueCurve = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                    Some(ValueAdjust { v_min: curve.v_min, phis: curve.phis, alpha: val_alpha })
                }
                None => None,
            };
            let adjustment = Adjustment {
                hue: hue_theta.map(|theta| HueAdjust { theta, alpha: hue_alpha }),
                sat: sat_sigma.map(|sigma| SaturationAdjust { sigma, alpha: sat_alpha }),
                val,
            };
            let img = load_image(&image)?;
            let stack = load_stack(&stack)?;
            let result = render_adjusted(&img, &stack, &adjustment, 4)?;
            save_image(&result, &out)?;
            Ok(())
        }
        Command::Synth { gt, mask, theta, sigma, gamma, soft, out } => {
            let gt = load_image(&gt)?;
            let mask = load_mask(&mask, soft)?;
            let spec = PerturbSpec { theta: theta.to_radians(), sigma, gamma };
            save_image(&synth_perturb(&gt, &mask, spec)?, &out)?;
            Ok(())
        }
        Command::Serve { port, host, session_dir } => {
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure { code: EXIT_IO, message: e.to_string() })?;
            runtime
                .block_on(crate::service::serve(SocketAddr::new(host, port), session_dir))
                .map_err(|e| Failure { code: EXIT_IO, message: e.to_string() })
        }
    }
}

fn decompose(image: &Path, mode: DecomposeMode, out_dir: &Path) -> Result<(), Failure> {
    let img = load_image(image)?;
    fs::create_dir_all(out_dir).map_err(|e| io_failure(out_dir, e))?;
    match mode {
        DecomposeMode::Standard => {
            let hsv = rgb_to_hsv(&img);
            save_plane(&hsv.v, 1.0, out_dir.join("value.png"))?;
            save_plane(&hsv.s, 1.0, out_dir.join("saturation.png"))?;
            save_plane(&hsv.h, std::f64::consts::TAU, out_dir.join("hue.png"))?;
        }
        DecomposeMode::Smooth => {
            save_plane(&smooth_value_map(&img), 1.0, out_dir.join("value.png"))?;
            save_plane(&smooth_saturation_map(&img), 1.0, out_dir.join("saturation.png"))?;
            write_atomic(&out_dir.join("hue.png"), &encode_png(&smooth_hue_map(&img))?)?;
        }
    }
    Ok(())
}
