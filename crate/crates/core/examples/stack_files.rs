//! Stack and image files: save, reload, inspect.
//!
//! `cargo run --example stack_files [OUT_DIR]`

use std::path::PathBuf;

use dccf::filters::{identity_stack, rotation_affine, HueFilterMap};
use dccf::io::{encode_stack, load_image, load_mask, save_image, STACK_MAGIC};
use dccf::scenes::{ellipse_mask, photo};
use dccf::{load_stack, save_stack};

fn main() -> dccf::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("dccf-files"));
    std::fs::create_dir_all(&out)?;

    let mut stack = identity_stack(8, 6)?;
    stack.hue = HueFilterMap::uniform(8, 6, &rotation_affine(0.25))?;
    let path = out.join("stack.dccf");
    save_stack(&stack, &path)?;
    let bytes = encode_stack(&stack);
    println!("{}: {} bytes, magic {:?}, {} parameters", path.display(), bytes.len(), std::str::from_utf8(STACK_MAGIC).unwrap(), stack.param_count());

    let back = load_stack(&path)?;
    println!("reloaded: grid {:?}, m = {}, order {}", back.grid_dims(), back.m(), back.order);
    // parameters are stored as f32
    let drift = stack.params().iter().zip(back.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("largest parameter change after f32 storage: {drift:.2e}");

    let img = photo(64, 48, 1);
    for ext in ["png", "ppm"] {
        let p = out.join(format!("photo.{ext}"));
        save_image(&img, &p)?;
        let reread = load_image(&p)?;
        let err = img.data().iter().zip(reread.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{ext}: {} bytes, max quantization error {:.5} (bound {:.5})", std::fs::metadata(&p)?.len(), err, 0.5 / 255.0);
    }

    let mask_path = out.join("mask.png");
    dccf::io::save_plane(ellipse_mask(64, 48, (32.0, 24.0), (20.0, 14.0)).plane(), 1.0, &mask_path)?;
    let mask = load_mask(&mask_path, false)?;
    println!("mask area {:.0} of {} pixels", mask.area(), 64 * 48);
    Ok(())
}
