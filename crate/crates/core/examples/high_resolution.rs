//! Fit at low resolution, apply the upsampled maps at full resolution and
//! compare with upsampling the low-resolution result.
//!
//! `cargo run --release --example high_resolution [SIZE]`

use std::time::Instant;

use dccf::optimizer::{fit, synth_perturb, FitConfig, PerturbSpec};
use dccf::scenes::{edge_rich, feathered_mask};
use dccf::{psnr, run_pipeline};

fn main() -> dccf::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1024);
    let low = 256;
    let s = n as f64;

    let gt = edge_rich(n, n, 5);
    let mask = feathered_mask(n, n, (s * 0.5, s * 0.53), (s * 0.32, s * 0.28), s / 16.0);
    let composite = synth_perturb(&gt, &mask, PerturbSpec { theta: 30f64.to_radians(), sigma: 0.4, gamma: 1.4 })?;

    let (gt_lo, comp_lo, mask_lo) = (gt.resize_area(low, low), composite.resize_area(low, low), mask.resize_area(low, low));
    let t = Instant::now();
    let (stack, report) = fit(&comp_lo, &gt_lo, &mask_lo, &FitConfig { max_iters: 150, ..FitConfig::default() })?;
    println!("fit at {low}x{low}: PSNR {:.2} dB in {:.1} s", report.final_psnr, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let full = run_pipeline(&composite, &stack)?.i4;
    println!("applied at {n}x{n} in {:.2} s", t.elapsed().as_secs_f64());
    let upsampled = run_pipeline(&comp_lo, &stack)?.i4.resize_bilinear(n, n);

    println!("composite          {:.2} dB", psnr(&composite, &gt)?);
    println!("upsampled output   {:.2} dB", psnr(&upsampled, &gt)?);
    println!("upsampled maps     {:.2} dB", psnr(&full, &gt)?);
    Ok(())
}
