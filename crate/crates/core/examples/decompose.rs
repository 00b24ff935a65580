//! HSV planes and their smooth counterparts for a procedural scene.
//!
//! `cargo run --example decompose [OUT_DIR]`

use std::path::PathBuf;

use dccf::colorspace::{rgb_to_hsv, smooth_hue_map, smooth_saturation_map, smooth_value_map};
use dccf::io::{save_image, save_plane};
use dccf::scenes::photo;

fn main() -> dccf::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dccf-decompose"));
    std::fs::create_dir_all(&out)?;

    let img = photo(320, 240, 3);
    save_image(&img, out.join("input.png"))?;

    let hsv = rgb_to_hsv(&img);
    save_plane(&hsv.h, std::f64::consts::TAU, out.join("hue.png"))?;
    save_plane(&hsv.s, 1.0, out.join("saturation.png"))?;
    save_plane(&hsv.v, 1.0, out.join("value.png"))?;

    let sv = smooth_value_map(&img);
    let ss = smooth_saturation_map(&img);
    save_plane(&sv, 1.0, out.join("smooth_value.png"))?;
    save_plane(&ss, 1.0, out.join("smooth_saturation.png"))?;
    save_image(&smooth_hue_map(&img), out.join("smooth_hue.png"))?;

    println!("V: mean {:.3}, total variation {:.1}", hsv.v.mean(), hsv.v.total_variation());
    println!("smooth V: mean {:.3}, total variation {:.1}", sv.mean(), sv.total_variation());
    println!("S: mean {:.3}  smooth S: mean {:.3}", hsv.s.mean(), ss.mean());
    println!("wrote planes to {}", out.display());
    Ok(())
}
