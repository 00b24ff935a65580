//! Hand-built filter maps run through the V -> S -> H -> attentive pipeline,
//! with every intermediate stage saved.
//!
//! `cargo run --example pipeline_stages [OUT_DIR]`

use std::path::PathBuf;

use dccf::filters::{identity_stack, rotation_affine, HueFilterMap, ParamGrid, SaturationFilterMap, ValueFilterMap};
use dccf::io::save_image;
use dccf::scenes::photo;
use dccf::{psnr, run_pipeline};

fn main() -> dccf::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dccf-stages"));
    std::fs::create_dir_all(&out)?;
    let img = photo(256, 192, 8);

    let (gw, gh) = (4, 3);
    let mut stack = identity_stack(gw, gh)?;

    // left cells brighten, right cells darken
    let mut val = Vec::new();
    for _y in 0..gh {
        for x in 0..gw {
            let gain = 1.3 - 0.2 * x as f64;
            val.push(0.0);
            val.push(gain);
            val.extend([0.0; 7]);
        }
    }
    stack.val = ValueFilterMap::new(ParamGrid::new(gw, gh, 9, val)?)?;
    // saturation ramps from -0.5 at the top to +0.5 at the bottom
    let sat: Vec<f64> = (0..gh).flat_map(|y| std::iter::repeat_n(-0.5 + y as f64 * 0.5, gw)).collect();
    stack.sat = SaturationFilterMap::new(ParamGrid::new(gw, gh, 1, sat)?)?;
    stack.hue = HueFilterMap::uniform(gw, gh, &rotation_affine(25f64.to_radians()))?;

    let trace = run_pipeline(&img, &stack)?;
    save_image(&img, out.join("input.png"))?;
    for n in 1..=4 {
        let stage = trace.stage(n).expect("stages 1 to 4");
        save_image(stage, out.join(format!("stage{n}.png")))?;
        println!("I{n}: PSNR vs input {:.2} dB", psnr(stage, &img)?);
    }
    println!("order {}, wrote stages to {}", stack.order, out.display());
    Ok(())
}
