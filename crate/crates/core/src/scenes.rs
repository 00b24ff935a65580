//! Procedural test scenes and masks, for examples and tests that need
//! photo-like inputs without shipping image files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorspace::hsv_to_rgb_pixel;
use crate::image::{Mask, Rgb, RgbImage};

struct Blob {
    cx: f64,
    cy: f64,
    r: f64,
    colour: Rgb,
}

/// Smooth photo-like scene: a sky-to-ground gradient, soft coloured blobs
/// and faint texture.
pub fn photo(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let top = random_colour(&mut rng, 0.2..0.6, 0.6..0.95);
    let bottom = random_colour(&mut rng, 0.2..0.7, 0.25..0.6);
    let blobs: Vec<Blob> = (0..7)
        .map(|_| Blob {
            cx: rng.random_range(0.0..1.0),
            cy: rng.random_range(0.0..1.0),
            r: rng.random_range(0.08..0.3),
            colour: random_colour(&mut rng, 0.35..0.9, 0.3..0.95),
        })
        .collect();
    let waves: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.random_range(10.0..40.0), rng.random_range(10.0..40.0), rng.random_range(0.0..6.3))).collect();
    RgbImage::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let mut p = [0, 1, 2].map(|c| top[c] + (bottom[c] - top[c]) * v);
        for b in &blobs {
            let d2 = ((u - b.cx).powi(2) + (v - b.cy).powi(2)) / (b.r * b.r);
            let w = (-d2 * d2).exp();
            for c in 0..3 {
                p[c] += w * (b.colour[c] - p[c]);
            }
        }
        let t: f64 = waves.iter().map(|(fx, fy, ph)| (fx * u + ph).sin() * (fy * v).cos()).sum::<f64>() * 0.012;
        p.map(|c| c + t)
    })
}

/// Scene with hard edges and thin structures: stripes, a checkerboard and
/// sharp-edged discs over a gradient.
pub fn edge_rich(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let palette: Vec<Rgb> = (0..6).map(|_| random_colour(&mut rng, 0.4..0.9, 0.35..0.95)).collect();
    let discs: Vec<(f64, f64, f64, usize)> = (0..12)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.03..0.12), rng.random_range(0..6)))
        .collect();
    RgbImage::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let mut p = [0, 1, 2].map(|c| 0.25 + 0.5 * palette[0][c] * (1.0 - v) + 0.3 * palette[1][c] * v);
        if ((u * 64.0).floor() as i64 + (v * 64.0).floor() as i64) % 2 == 0 && u < 0.5 && v < 0.5 {
            p = [0, 1, 2].map(|c| 0.6 * p[c] + 0.4 * palette[2][c]);
        }
        if u >= 0.5 && v < 0.5 && ((u * 96.0) as i64) % 3 == 0 {
            p = palette[3];
        }
        for &(cx, cy, r, k) in &discs {
            if (u - cx).powi(2) + (v - cy).powi(2) < r * r {
                p = palette[k];
            }
        }
        if v >= 0.5 && ((u + v) * 80.0) as i64 % 4 == 0 {
            p = [0, 1, 2].map(|c| 0.5 * p[c] + 0.5 * palette[4][c]);
        }
        p
    })
}

/// Elliptical foreground with a linear fall-off of `feather` pixels.
pub fn feathered_mask(width: usize, height: usize, centre: (f64, f64), radii: (f64, f64), feather: f64) -> Mask {
    Mask::from_fn(width, height, |x, y| {
        let dx = (x as f64 + 0.5 - centre.0) / radii.0;
        let dy = (y as f64 + 0.5 - centre.1) / radii.1;
        let d = (dx * dx + dy * dy).sqrt();
        let edge = (1.0 - d) * radii.0.min(radii.1);
        (edge / feather + 0.5).clamp(0.0, 1.0)
    })
}

/// Hard elliptical foreground.
pub fn ellipse_mask(width: usize, height: usize, centre: (f64, f64), radii: (f64, f64)) -> Mask {
    Mask::from_fn(width, height, |x, y| {
        let dx = (x as f64 + 0.5 - centre.0) / radii.0;
        let dy = (y as f64 + 0.5 - centre.1) / radii.1;
        if dx * dx + dy * dy <= 1.0 {
            1.0
        } else {
            0.0
        }
    })
}

fn random_colour(rng: &mut ChaCha8Rng, s: std::ops::Range<f64>, v: std::ops::Range<f64>) -> Rgb {
    let h = rng.random_range(0.0..std::f64::consts::TAU);
    hsv_to_rgb_pixel([h, rng.random_range(s), rng.random_range(v)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a = photo(40, 30, 3);
        assert_eq!(a, photo(40, 30, 3));
        assert_ne!(a, photo(40, 30, 4));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let e = edge_rich(64, 64, 1);
        assert!(e.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn feathered_mask_has_soft_edge() {
        let m = feathered_mask(100, 100, (50.0, 50.0), (30.0, 30.0), 10.0);
        assert_eq!(m.plane().get(50, 50), 1.0);
        assert_eq!(m.plane().get(0, 0), 0.0);
        let edge = m.plane().get(80, 50);
        assert!(edge > 0.0 && edge < 1.0, "{edge}");
        let hard = ellipse_mask(100, 100, (50.0, 50.0), (30.0, 30.0));
        assert!(hard.plane().data().iter().all(|v| *v == 0.0 || *v == 1.0));
    }
}
