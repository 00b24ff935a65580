use serde::{Deserialize, Serialize};

use crate::colorspace::{hsv_to_rgb_pixel, rgb_to_hsv_pixel};
use crate::error::{Error, Result};
use crate::filters::{affine, rotation_affine, saturate_pixel};
use crate::image::{Mask, Rgb, RgbImage};

/// Foreground perturbation: value gamma, then saturation, then hue rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Hue rotation, radians.
    pub theta: f64,
    pub sigma: f64,
    pub gamma: f64,
}

impl PerturbSpec {
    pub const IDENTITY: PerturbSpec = PerturbSpec { theta: 0.0, sigma: 0.0, gamma: 1.0 };
}

/// Builds a composite by perturbing the foreground of `gt`.
///
/// Foreground pixels get `V <- V^gamma` (scaling RGB, so hue and saturation
/// are kept), the saturation transform with `sigma`, and a hue rotation by
/// `theta` that keeps V and S. Soft masks blend the perturbed and original
/// colours.
pub fn synth_perturb(gt: &RgbImage, mask: &Mask, spec: PerturbSpec) -> Result<RgbImage> {
    Error::check_dims(gt.dims(), mask.dims())?;
    if !(spec.gamma > 0.0 && spec.gamma.is_finite()) {
        return Err(Error::invalid("gamma must be positive"));
    }
    if !spec.theta.is_finite() || !spec.sigma.is_finite() {
        return Err(Error::invalid("theta and sigma must be finite"));
    }
    let rotation = rotation_affine(spec.theta);
    let mut i = 0;
    Ok(gt.map(|p| {
        let m = mask.at(i);
        i += 1;
        if m == 0.0 {
            return p;
        }
        let q = perturb_pixel(p, &spec, &rotation);
        [0, 1, 2].map(|c| m * q[c] + (1.0 - m) * p[c])
    }))
}

fn perturb_pixel(p: Rgb, spec: &PerturbSpec, rotation: &[f64]) -> Rgb {
    let v = p[0].max(p[1]).max(p[2]);
    let x = if v > 0.0 && spec.gamma != 1.0 {
        let scale = v.powf(spec.gamma) / v;
        p.map(|c| c * scale)
    } else {
        p
    };
    let x = saturate_pixel(x, spec.sigma);
    if spec.theta == 0.0 {
        return x;
    }
    let rotated = affine(rotation, x).map(|c| c.clamp(0.0, 1.0));
    let hsv = rgb_to_hsv_pixel(x);
    let h = rgb_to_hsv_pixel(rotated)[0];
    hsv_to_rgb_pixel([h, hsv[1], hsv[2]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::rgb_to_hsv;
    use std::f64::consts::PI;

    fn colourful(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            hsv_to_rgb_pixel([(x as f64 * 0.4 + y as f64 * 0.1) % (2.0 * PI), 0.3 + 0.05 * (y % 10) as f64, 0.4 + 0.05 * (x % 10) as f64])
        })
    }

    #[test]
    fn identity_perturbation_returns_gt() {
        let gt = colourful(10, 10);
        let out = synth_perturb(&gt, &Mask::full(10, 10), PerturbSpec::IDENTITY).unwrap();
        assert_eq!(out, gt);
    }

    #[test]
    fn third_turn_maps_red_to_green() {
        let gt = RgbImage::filled(4, 4, [1.0, 0.0, 0.0]);
        let spec = PerturbSpec { theta: 2.0 * PI / 3.0, sigma: 0.0, gamma: 1.0 };
        let out = synth_perturb(&gt, &Mask::full(4, 4), spec).unwrap();
        for p in out.pixels() {
            assert!((p[0]).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9 && p[2].abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn hue_only_keeps_value_and_saturation() {
        let gt = colourful(20, 20);
        let spec = PerturbSpec { theta: 0.9, sigma: 0.0, gamma: 1.0 };
        let out = synth_perturb(&gt, &Mask::full(20, 20), spec).unwrap();
        let (a, b) = (rgb_to_hsv(&out), rgb_to_hsv(&gt));
        for (x, y) in a.v.data().iter().zip(b.v.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        for (x, y) in a.s.data().iter().zip(b.s.data()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn background_untouched_and_gamma_checked() {
        let gt = colourful(8, 8);
        let mask = Mask::from_fn(8, 8, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let spec = PerturbSpec { theta: 0.5, sigma: 0.4, gamma: 1.4 };
        let out = synth_perturb(&gt, &mask, spec).unwrap();
        for y in 0..8 {
            for x in 4..8 {
                assert_eq!(out.pixel(x, y), gt.pixel(x, y));
            }
            assert_ne!(out.pixel(0, y), gt.pixel(0, y));
        }
        assert!(synth_perturb(&gt, &mask, PerturbSpec { gamma: 0.0, ..spec }).is_err());
        assert!(synth_perturb(&gt, &mask, PerturbSpec { gamma: -1.0, ..spec }).is_err());
    }
}
