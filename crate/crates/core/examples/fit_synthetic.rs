//! Recover a known colour perturbation by fitting a filter stack.
//!
//! `cargo run --release --example fit_synthetic [ITERS] [MODE]`

use dccf::optimizer::{fit_with, synth_perturb, FitConfig, PerturbSpec};
use dccf::scenes::{feathered_mask, photo};
use dccf::{psnr, LossMode};

fn main() -> dccf::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let mode: LossMode = args.next().map(|s| s.parse()).transpose()?.unwrap_or_default();

    let gt = photo(256, 256, 11);
    let mask = feathered_mask(256, 256, (128.0, 140.0), (80.0, 70.0), 16.0);
    let spec = PerturbSpec { theta: 30f64.to_radians(), sigma: 0.4, gamma: 1.4 };
    let composite = synth_perturb(&gt, &mask, spec)?;
    println!("composite PSNR {:.2} dB", psnr(&composite, &gt)?);

    let cfg = FitConfig { max_iters: iters, mode, ..FitConfig::default() };
    let (stack, report) = fit_with(&composite, &gt, &mask, &cfg, |p| {
        if p.iteration % 25 == 0 {
            println!("iter {:>4}  loss {:.4e}  best {:.4e}  step {:.3}", p.iteration, p.loss.total, p.best, p.step);
        }
        true
    })?;
    println!(
        "{} iterations in {:.1} s: MSE {:.3e}, PSNR {:.2} dB, grid {:?}",
        report.iterations_run,
        report.wall_time,
        report.final_mse,
        report.final_psnr,
        stack.grid_dims()
    );
    Ok(())
}
