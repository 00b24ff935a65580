//! Global hue rotation through a uniform hue filter map.
//!
//! `cargo run --example hue_rotation [DEGREES]`

use dccf::colorspace::rgb_to_hsv_pixel;
use dccf::filters::{hue_rotation_matrix, identity_stack, rotation_affine, HueFilterMap};
use dccf::run_pipeline;
use dccf::RgbImage;

fn main() -> dccf::Result<()> {
    let degrees: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(120.0);

    let r = hue_rotation_matrix(degrees.to_radians());
    println!("R({degrees}°) =");
    for row in r {
        println!("  [{:>8.5} {:>8.5} {:>8.5}]", row[0], row[1], row[2]);
    }

    let swatches = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.9, 0.6, 0.2], [0.5, 0.5, 0.5]];
    let img = RgbImage::from_fn(swatches.len(), 1, |x, _| swatches[x]);

    let mut stack = identity_stack(1, 1)?;
    stack.hue = HueFilterMap::uniform(1, 1, &rotation_affine(degrees.to_radians()))?;
    let out = run_pipeline(&img, &stack)?.i4;

    for (i, p) in swatches.iter().enumerate() {
        let q = out.at(i);
        let (hp, hq) = (rgb_to_hsv_pixel(*p), rgb_to_hsv_pixel(q));
        println!(
            "{:?} -> [{:.3} {:.3} {:.3}]  hue {:>6.1}° -> {:>6.1}°  S {:.3}/{:.3}  V {:.3}/{:.3}",
            p,
            q[0],
            q[1],
            q[2],
            hp[0].to_degrees(),
            hq[0].to_degrees(),
            hp[1],
            hq[1],
            hp[2],
            hq[2]
        );
    }
    Ok(())
}
