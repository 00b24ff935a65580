//! Blend user intentions into a fitted stack at several strengths.
//!
//! `cargo run --release --example interactive_adjust [OUT_DIR]`

use std::path::PathBuf;

use dccf::colorspace::rgb_to_hsv_pixel;
use dccf::io::save_image;
use dccf::optimizer::{fit, synth_perturb, FitConfig, PerturbSpec};
use dccf::scenes::{feathered_mask, photo};
use dccf::{render_adjusted, Adjustment, HueAdjust, SaturationAdjust, ValueAdjust};

fn main() -> dccf::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dccf-adjust"));
    std::fs::create_dir_all(&out)?;

    let gt = photo(160, 160, 2);
    let mask = feathered_mask(160, 160, (80.0, 85.0), (50.0, 45.0), 8.0);
    let composite = synth_perturb(&gt, &mask, PerturbSpec { theta: 0.6, sigma: 0.3, gamma: 1.2 })?;
    let (stack, report) = fit(&composite, &gt, &mask, &FitConfig { grid_w: 16, grid_h: 16, max_iters: 120, ..FitConfig::default() })?;
    println!("fitted: PSNR {:.2} dB", report.final_psnr);

    let centre = 80 * 160 + 80;
    for theta in [0.0, 90.0, 180.0, 270.0] {
        for alpha in [0.0, 0.5, 1.0] {
            let adj = Adjustment { hue: Some(HueAdjust { theta, alpha }), ..Default::default() };
            let img = render_adjusted(&composite, &stack, &adj, 4)?;
            let hsv = rgb_to_hsv_pixel(img.at(centre));
            println!("theta {theta:>5.1}  alpha {alpha:.1}  centre hue {:>6.1}°", hsv[0].to_degrees());
            save_image(&img, out.join(format!("hue_{theta:03.0}_{alpha:.1}.png")))?;
        }
    }

    let adj = Adjustment {
        sat: Some(SaturationAdjust { sigma: -0.8, alpha: 0.7 }),
        val: Some(ValueAdjust { v_min: 0.1, phis: vec![0.7, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0], alpha: 0.5 }),
        ..Default::default()
    };
    save_image(&render_adjusted(&composite, &stack, &adj, 4)?, out.join("muted.png"))?;
    println!("wrote adjusted renders to {}", out.display());
    Ok(())
}
