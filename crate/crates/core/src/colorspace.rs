//! RGB/HSV conversion and the smoothed V, S and H supervision maps.
//!
//! Hue is stored in radians on `[0, 2π)`. Achromatic pixels (`C_max == C_min`)
//! get `H = 0`, and black pixels get `S = 0`.
//!
//! Every per-pixel routine here also exists in a `*_jac` / tape form that
//! returns local derivatives, so the optimizer can pull loss adjoints back
//! through exactly the same arithmetic the forward pass used.

use std::f64::consts::{FRAC_PI_3, PI, TAU};

use crate::diff::{clamp01_d, ramp_down, ramp_up, t_mul, Kinks, Mat3, NoKinks, Vec3, ZERO3};
use crate::error::{Error, Result};
use crate::image::{PlaneImage, Rgb, RgbImage};

/// Blur used for the smooth value map.
pub const SMOOTH_V_STD: f64 = 1.5;
pub const SMOOTH_V_KERNEL: usize = 5;

/// Fixed saturation and value used when rendering the smooth hue map.
pub const SMOOTH_H_SATURATION: f64 = 0.5;
pub const SMOOTH_H_VALUE: f64 = 0.8;

/// H, S and V planes of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct HsvImage {
    pub h: PlaneImage,
    pub s: PlaneImage,
    pub v: PlaneImage,
}

impl HsvImage {
    pub fn new(h: PlaneImage, s: PlaneImage, v: PlaneImage) -> Result<Self> {
        Error::check_dims(h.dims(), s.dims())?;
        Error::check_dims(h.dims(), v.dims())?;
        Ok(Self { h, s, v })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.h.dims()
    }
}

/// Standard decomposition of one pixel into `[h, s, v]`.
#[inline]
pub fn rgb_to_hsv_pixel(p: Rgb) -> Vec3 {
    rgb_to_hsv_jac(p, &mut NoKinks).0
}

/// Inverse of [`rgb_to_hsv_pixel`]; `s` and `v` are clamped to `[0, 1]`, `h` wraps.
#[inline]
pub fn hsv_to_rgb_pixel(hsv: Vec3) -> Rgb {
    hsv_to_rgb_jac([hsv[0], hsv[1].clamp(0.0, 1.0), hsv[2].clamp(0.0, 1.0)], &mut NoKinks).0
}

/// `[h, s, v]` and `d[h, s, v] / d[r, g, b]`.
pub(crate) fn rgb_to_hsv_jac<K: Kinks>(p: Rgb, k: &mut K) -> (Vec3, Mat3) {
    let imax = if p[0] >= p[1] && p[0] >= p[2] {
        0
    } else if p[1] >= p[2] {
        1
    } else {
        2
    };
    let (o1, o2) = ((imax + 1) % 3, (imax + 2) % 3);
    let (imid, imin) = if p[o1] <= p[o2] { (o2, o1) } else { (o1, o2) };
    let (cmax, cmid, cmin) = (p[imax], p[imid], p[imin]);
    k.note(cmax - cmid);
    k.note(cmid - cmin);
    k.note(cmax);

    let mut j = ZERO3;
    let v = cmax;
    j[2][imax] = 1.0;

    let delta = cmax - cmin;
    let s = if cmax > 0.0 {
        j[1][imax] += cmin / (cmax * cmax);
        j[1][imin] -= 1.0 / cmax;
        delta / cmax
    } else {
        0.0
    };

    let h = if delta > 0.0 {
        let (a, b, offset) = match imax {
            0 => (1, 2, 0.0),
            1 => (2, 0, 2.0),
            _ => (0, 1, 4.0),
        };
        let u = (p[a] - p[b]) / delta;
        let mut du = [0.0; 3];
        du[a] += 1.0 / delta;
        du[b] -= 1.0 / delta;
        du[imax] -= u / delta;
        du[imin] += u / delta;
        for c in 0..3 {
            j[0][c] = du[c] * FRAC_PI_3;
        }
        let mut h6 = u + offset;
        if h6 < 0.0 {
            h6 += 6.0;
        }
        let h = h6 * FRAC_PI_3;
        if h >= TAU {
            h - TAU
        } else {
            h
        }
    } else {
        0.0
    };
    ([h, s, v], j)
}

/// RGB and `d[r, g, b] / d[h, s, v]`. Inputs are used as given (no clamping).
pub(crate) fn hsv_to_rgb_jac<K: Kinks>(hsv: Vec3, k: &mut K) -> (Rgb, Mat3) {
    let [h, s, v] = hsv;
    let h6 = h / FRAC_PI_3;
    let fl = h6.floor();
    let f = h6 - fl;
    k.note(f.min(1.0 - f) * FRAC_PI_3);
    let sector = (fl as i64).rem_euclid(6);
    let dfdh = 1.0 / FRAC_PI_3;

    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let dp = [0.0, -v, 1.0 - s];
    let dq = [-v * s * dfdh, -v * f, 1.0 - s * f];
    let dt = [v * s * dfdh, -v * (1.0 - f), 1.0 - s * (1.0 - f)];
    let dv = [0.0, 0.0, 1.0];

    let (rgb, j) = match sector {
        0 => ([v, t, p], [dv, dt, dp]),
        1 => ([q, v, p], [dq, dv, dp]),
        2 => ([p, v, t], [dp, dv, dt]),
        3 => ([p, q, v], [dp, dq, dv]),
        4 => ([t, p, v], [dt, dp, dv]),
        _ => ([v, p, q], [dv, dp, dq]),
    };
    (rgb, j)
}

pub fn rgb_to_hsv(img: &RgbImage) -> HsvImage {
    let (w, hgt) = img.dims();
    let mut hp = Vec::with_capacity(img.len());
    let mut sp = Vec::with_capacity(img.len());
    let mut vp = Vec::with_capacity(img.len());
    for p in img.pixels() {
        let [h, s, v] = rgb_to_hsv_pixel(p);
        hp.push(h);
        sp.push(s);
        vp.push(v);
    }
    HsvImage {
        h: PlaneImage::from_vec(w, hgt, hp).expect("finite hue"),
        s: PlaneImage::from_vec(w, hgt, sp).expect("finite saturation"),
        v: PlaneImage::from_vec(w, hgt, vp).expect("finite value"),
    }
}

pub fn hsv_to_rgb(img: &HsvImage) -> RgbImage {
    let (w, h) = img.dims();
    let (hd, sd, vd) = (img.h.data(), img.s.data(), img.v.data());
    RgbImage::from_fn(w, h, |x, y| {
        let i = y * w + x;
        hsv_to_rgb_pixel([hd[i], sd[i], vd[i]])
    })
}

/// Normalized 1-D Gaussian weights for an odd kernel size.
pub fn gaussian_kernel(std: f64, k: usize) -> Result<Vec<f64>> {
    if k % 2 == 0 {
        return Err(Error::invalid(format!("kernel size must be odd, got {k}")));
    }
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::invalid(format!("blur std must be positive, got {std}")));
    }
    let r = (k / 2) as i64;
    let mut w: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * std * std)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Ok(w)
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(p: &PlaneImage, std: f64, k: usize) -> Result<PlaneImage> {
    let kernel = gaussian_kernel(std, k)?;
    let (w, h) = p.dims();
    let mut out = p.clone();
    blur_pass(p.data(), out.data_mut(), w, h, &kernel, false);
    Ok(out)
}

/// Adjoint of [`gaussian_blur`]: maps an output adjoint to an input adjoint.
pub(crate) fn gaussian_blur_adjoint(grad: &PlaneImage, std: f64, k: usize) -> Result<PlaneImage> {
    let kernel = gaussian_kernel(std, k)?;
    let (w, h) = grad.dims();
    let mut out = grad.clone();
    blur_pass(grad.data(), out.data_mut(), w, h, &kernel, true);
    Ok(out)
}

fn blur_pass(src: &[f64], dst: &mut [f64], w: usize, h: usize, kernel: &[f64], adjoint: bool) {
    let r = (kernel.len() / 2) as i64;
    let clampi = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    if !adjoint {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kw) in kernel.iter().enumerate() {
                    acc += kw * src[y * w + clampi(x as i64 + t as i64 - r, w)];
                }
                tmp[y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kw) in kernel.iter().enumerate() {
                    acc += kw * tmp[clampi(y as i64 + t as i64 - r, h) * w + x];
                }
                dst[y * w + x] = acc;
            }
        }
    } else {
        // transpose of the vertical pass, then of the horizontal one
        for y in 0..h {
            for x in 0..w {
                let g = src[y * w + x];
                for (t, kw) in kernel.iter().enumerate() {
                    tmp[clampi(y as i64 + t as i64 - r, h) * w + x] += kw * g;
                }
            }
        }
        dst.iter_mut().for_each(|v| *v = 0.0);
        for y in 0..h {
            for x in 0..w {
                let g = tmp[y * w + x];
                for (t, kw) in kernel.iter().enumerate() {
                    dst[y * w + clampi(x as i64 + t as i64 - r, w)] += kw * g;
                }
            }
        }
    }
}

/// Blurred V plane.
pub fn smooth_value_map(img: &RgbImage) -> PlaneImage {
    let v = img.pixels().map(|p| p[0].max(p[1]).max(p[2])).collect();
    let plane = PlaneImage::from_vec(img.width(), img.height(), v).expect("finite");
    gaussian_blur(&plane, SMOOTH_V_STD, SMOOTH_V_KERNEL).expect("valid kernel")
}

/// Gray saturation map from the nine-step selective colour pass.
pub fn smooth_saturation_map(img: &RgbImage) -> PlaneImage {
    let mut tape = SelectiveTape::default();
    let data = img
        .pixels()
        .map(|p| smooth_saturation_pixel(p, &mut tape, &mut NoKinks))
        .collect();
    PlaneImage::from_vec(img.width(), img.height(), data).expect("finite")
}

/// Hue rendered at fixed saturation and value.
pub fn smooth_hue_map(img: &RgbImage) -> RgbImage {
    img.map(|p| smooth_hue_pixel(p, &mut NoKinks).0)
}

/// Region targeted by one selective-colour step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorRegion {
    /// Colored sector centred on the given hue (radians).
    Hue(u8),
    Black,
    White,
    Neutral,
}

/// Steps of the saturation pass with the σ applied in each.
pub const SELECTIVE_STEPS: [(ColorRegion, f64); 9] = [
    (ColorRegion::Hue(0), -1.0), // red
    (ColorRegion::Hue(2), -1.0), // green
    (ColorRegion::Hue(4), -1.0), // blue
    (ColorRegion::Hue(3), -1.0), // cyan
    (ColorRegion::Hue(5), -1.0), // magenta
    (ColorRegion::Hue(1), -1.0), // yellow
    (ColorRegion::Black, 1.0),
    (ColorRegion::White, 1.0),
    (ColorRegion::Neutral, 1.0),
];

// Soft region boundaries.
const BLACK_V: (f64, f64) = (0.20, 0.30);
const WHITE_V: (f64, f64) = (0.70, 0.80);
const LOW_S: (f64, f64) = (0.05, 0.15);

/// Membership weight of a pixel in `region`, with `d weight / d[h, s, v]`.
pub(crate) fn region_weight<K: Kinks>(region: ColorRegion, hsv: Vec3, k: &mut K) -> (f64, Vec3) {
    let [h, s, v] = hsv;
    match region {
        ColorRegion::Hue(sector) => {
            let centre = sector as f64 * FRAC_PI_3;
            let mut d = (h - centre).rem_euclid(TAU);
            if d > PI {
                d -= TAU;
            }
            let dist = d.abs();
            k.note(dist.min((dist - FRAC_PI_3).abs()));
            if dist >= FRAC_PI_3 {
                return (0.0, [0.0; 3]);
            }
            let tri = 1.0 - dist / FRAC_PI_3;
            let dtri_dh = -d.signum() / FRAC_PI_3;
            (s * tri, [s * dtri_dh, tri, 0.0])
        }
        ColorRegion::Black => {
            let (b, db) = ramp_down(v, BLACK_V.0, BLACK_V.1, k);
            (b, [0.0, 0.0, db])
        }
        ColorRegion::White => {
            let (wv, dwv) = ramp_up(v, WHITE_V.0, WHITE_V.1, k);
            let (ls, dls) = ramp_down(s, LOW_S.0, LOW_S.1, k);
            (wv * ls, [0.0, wv * dls, dwv * ls])
        }
        ColorRegion::Neutral => {
            let (b, db) = ramp_down(v, BLACK_V.0, BLACK_V.1, k);
            let (wv, dwv) = ramp_up(v, WHITE_V.0, WHITE_V.1, k);
            let (ls, dls) = ramp_down(s, LOW_S.0, LOW_S.1, k);
            let w = ls * (1.0 - b) * (1.0 - wv);
            let dv = ls * (-db * (1.0 - wv) - (1.0 - b) * dwv);
            (w, [0.0, dls * (1.0 - b) * (1.0 - wv), dv])
        }
    }
}

/// Forward record of one selective-colour step, enough to run it backwards.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SelectiveStep {
    x: Rgb,
    hsv_jac: Mat3,
    weight_grad: Vec3,
    sigma: f64,
    step_sigma: f64,
    med: f64,
    imax: usize,
    imin: usize,
    interior: [bool; 3],
}

#[derive(Debug, Clone, Default)]
pub(crate) struct SelectiveTape {
    steps: [SelectiveStep; 9],
}

/// Saturation-transform core shared with the filter: `x + (x - C_med) * σ`
/// before clamping, plus the indices of the channels defining `C_med`.
#[inline]
pub(crate) fn saturate_pre(x: Rgb, sigma: f64) -> (Rgb, f64, usize, usize) {
    let imax = if x[0] >= x[1] && x[0] >= x[2] {
        0
    } else if x[1] >= x[2] {
        1
    } else {
        2
    };
    let imin = if x[0] <= x[1] && x[0] <= x[2] {
        0
    } else if x[1] <= x[2] {
        1
    } else {
        2
    };
    let med = 0.5 * (x[imax] + x[imin]);
    let pre = [
        x[0] + (x[0] - med) * sigma,
        x[1] + (x[1] - med) * sigma,
        x[2] + (x[2] - med) * sigma,
    ];
    (pre, med, imax, imin)
}

/// Pulls an adjoint on the pre-clamp saturated colour back to `(d x, d σ)`.
#[inline]
pub(crate) fn saturate_pre_backward(
    d_pre: Vec3,
    x: Rgb,
    sigma: f64,
    med: f64,
    imax: usize,
    imin: usize,
) -> (Vec3, f64) {
    let mut dx = [d_pre[0] * (1.0 + sigma), d_pre[1] * (1.0 + sigma), d_pre[2] * (1.0 + sigma)];
    let sum = d_pre[0] + d_pre[1] + d_pre[2];
    let d_med = -sigma * sum;
    dx[imax] += 0.5 * d_med;
    dx[imin] += 0.5 * d_med;
    let dsigma = d_pre[0] * (x[0] - med) + d_pre[1] * (x[1] - med) + d_pre[2] * (x[2] - med);
    (dx, dsigma)
}

pub(crate) fn smooth_saturation_pixel<K: Kinks>(p: Rgb, tape: &mut SelectiveTape, k: &mut K) -> f64 {
    let mut x = p;
    for (step, &(region, step_sigma)) in tape.steps.iter_mut().zip(SELECTIVE_STEPS.iter()) {
        let (hsv, hsv_jac) = rgb_to_hsv_jac(x, k);
        let (w, weight_grad) = region_weight(region, hsv, k);
        let sigma = step_sigma * w;
        let (pre, med, imax, imin) = saturate_pre(x, sigma);
        let mut next = [0.0; 3];
        let mut interior = [false; 3];
        for c in 0..3 {
            let (v, inside) = clamp01_d(pre[c], k);
            next[c] = v;
            interior[c] = inside;
        }
        *step = SelectiveStep {
            x,
            hsv_jac,
            weight_grad,
            sigma,
            step_sigma,
            med,
            imax,
            imin,
            interior,
        };
        x = next;
    }
    (x[0] + x[1] + x[2]) / 3.0
}

pub(crate) fn smooth_saturation_pixel_backward(tape: &SelectiveTape, d_out: f64) -> Vec3 {
    let mut d = [d_out / 3.0; 3];
    for step in tape.steps.iter().rev() {
        let mut d_pre = [0.0; 3];
        for c in 0..3 {
            if step.interior[c] {
                d_pre[c] = d[c];
            }
        }
        let (mut dx, dsigma) =
            saturate_pre_backward(d_pre, step.x, step.sigma, step.med, step.imax, step.imin);
        let dw = dsigma * step.step_sigma;
        if dw != 0.0 {
            let d_hsv = [dw * step.weight_grad[0], dw * step.weight_grad[1], dw * step.weight_grad[2]];
            let back = t_mul(&step.hsv_jac, d_hsv);
            for c in 0..3 {
                dx[c] += back[c];
            }
        }
        d = dx;
    }
    d
}

/// Smooth hue rendering of one pixel, returning the colour and `d rgb / d rgb_in`.
pub(crate) fn smooth_hue_pixel<K: Kinks>(p: Rgb, k: &mut K) -> (Rgb, Mat3) {
    let (hsv, jin) = rgb_to_hsv_jac(p, k);
    let (out, jout) = hsv_to_rgb_jac([hsv[0], SMOOTH_H_SATURATION, SMOOTH_H_VALUE], k);
    // only the hue column of jout survives
    let mut j = ZERO3;
    for r in 0..3 {
        for c in 0..3 {
            j[r][c] = jout[r][0] * jin[0][c];
        }
    }
    (out, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::mul;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn primary_red_decomposes() {
        assert_eq!(rgb_to_hsv_pixel([1.0, 0.0, 0.0]), [0.0, 1.0, 1.0]);
    }

    #[test]
    fn gray_is_achromatic() {
        assert_eq!(rgb_to_hsv_pixel([0.5, 0.5, 0.5]), [0.0, 0.0, 0.5]);
        assert_eq!(rgb_to_hsv_pixel([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn blue_dominant_pixel() {
        // B branch: (R - G) / (Cmax - Cmin) + 4 = -1/3 + 4 sectors of π/3
        let [h, s, v] = rgb_to_hsv_pixel([0.2, 0.4, 0.8]);
        assert!(close(h, (4.0 - 1.0 / 3.0) * FRAC_PI_3, 1e-12));
        assert!(close(h, 3.840, 5e-4));
        assert!(close(s, 0.75, 1e-12));
        assert!(close(v, 0.8, 1e-12));
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(hsv_to_rgb_pixel([0.0, 1.0, 1.0]), [1.0, 0.0, 0.0]);
        for h in [0.0, 1.0, 2.5, 6.0] {
            assert_eq!(hsv_to_rgb_pixel([h, 0.0, 0.3]), [0.3, 0.3, 0.3]);
        }
        let rgb = hsv_to_rgb_pixel([(4.0 - 1.0 / 3.0) * FRAC_PI_3, 0.75, 0.8]);
        for (a, b) in rgb.iter().zip([0.2, 0.4, 0.8]) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn kernel_rejects_bad_arguments() {
        assert!(gaussian_kernel(1.5, 4).is_err());
        assert!(gaussian_kernel(0.0, 5).is_err());
        assert!(gaussian_kernel(-1.0, 5).is_err());
    }

    #[test]
    fn impulse_gives_normalized_stamp() {
        let mut data = vec![0.0; 81];
        data[40] = 1.0;
        let p = PlaneImage::from_vec(9, 9, data).unwrap();
        let out = gaussian_blur(&p, 1.5, 5).unwrap();
        // oracle: direct evaluation of the 2-D Gaussian, normalized over the 5x5 support
        let g = |i: i64, j: i64| (-((i * i + j * j) as f64) / (2.0 * 1.5 * 1.5)).exp();
        let z: f64 = (-2..=2).flat_map(|i| (-2..=2).map(move |j| g(i, j))).sum();
        for y in 0..9i64 {
            for x in 0..9i64 {
                let (dx, dy) = (x - 4, y - 4);
                let want = if dx.abs() <= 2 && dy.abs() <= 2 { g(dx, dy) / z } else { 0.0 };
                assert!(close(out.get(x as usize, y as usize), want, 1e-15));
            }
        }
        assert!(close(out.data().iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn blur_adjoint_is_transpose() {
        let a = PlaneImage::from_fn(7, 5, |x, y| ((x * 3 + y * 7) % 11) as f64 / 11.0);
        let b = PlaneImage::from_fn(7, 5, |x, y| ((x * 5 + y * 2) % 13) as f64 / 13.0);
        let ba = gaussian_blur(&a, 1.5, 5).unwrap();
        let atb = gaussian_blur_adjoint(&b, 1.5, 5).unwrap();
        let lhs: f64 = ba.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.data().iter().zip(atb.data()).map(|(x, y)| x * y).sum();
        assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn smooth_maps_of_flat_images() {
        let gray = RgbImage::filled(6, 6, [0.5; 3]);
        assert!(smooth_value_map(&gray).data().iter().all(|v| close(*v, 0.5, 1e-12)));
        let red = RgbImage::filled(6, 6, [1.0, 0.0, 0.0]);
        assert!(smooth_value_map(&red).data().iter().all(|v| close(*v, 1.0, 1e-12)));
    }

    #[test]
    fn smooth_value_map_reduces_variation() {
        let step = RgbImage::from_fn(16, 8, |x, _| if x < 8 { [0.1; 3] } else { [0.9; 3] });
        let raw = rgb_to_hsv(&step).v;
        let smooth = smooth_value_map(&step);
        assert!(smooth.total_variation() <= raw.total_variation() + 1e-12);
        assert!(smooth.get(7, 4) > 0.1 && smooth.get(8, 4) < 0.9);
    }

    #[test]
    fn smooth_saturation_fixed_point_on_gray() {
        let img = RgbImage::from_fn(4, 4, |x, y| [(x + 4 * y) as f64 / 16.0; 3]);
        let s = smooth_saturation_map(&img);
        for (i, p) in img.pixels().enumerate() {
            assert!(close(s.data()[i], p[0], 1e-12));
        }
    }

    #[test]
    fn saturated_patch_brighter_than_equal_intensity_gray() {
        // oracle: hand-run of the nine steps. Red (1,0,0) sits fully in the red
        // sector, so step one pulls every channel to C_med = 0.5; the remaining
        // steps see a gray pixel and leave it alone.
        let red = smooth_saturation_map(&RgbImage::filled(2, 2, [1.0, 0.0, 0.0]));
        let gray = smooth_saturation_map(&RgbImage::filled(2, 2, [1.0 / 3.0; 3]));
        assert!(close(red.mean(), 0.5, 1e-12));
        assert!(close(gray.mean(), 1.0 / 3.0, 1e-12));
        assert!(red.mean() > gray.mean());
    }

    #[test]
    fn smooth_hue_examples() {
        let out = smooth_hue_map(&RgbImage::filled(1, 1, [1.0, 0.0, 0.0]));
        let p = out.pixel(0, 0);
        for (a, b) in p.iter().zip([0.8, 0.4, 0.4]) {
            assert!(close(*a, b, 1e-12));
        }
        let gray = smooth_hue_map(&RgbImage::filled(1, 1, [0.3; 3])).pixel(0, 0);
        assert_eq!(gray, p);
        let a = smooth_hue_map(&RgbImage::filled(1, 1, [0.8, 0.4, 0.2])).pixel(0, 0);
        let b = smooth_hue_map(&RgbImage::filled(1, 1, [0.4, 0.3, 0.25])).pixel(0, 0);
        for (x, y) in a.iter().zip(b) {
            assert!(close(*x, y, 1e-12));
        }
    }

    fn fd_jacobian(f: impl Fn(Vec3) -> Vec3, x: Vec3) -> Mat3 {
        let h = 1e-6;
        let mut j = ZERO3;
        for c in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (f(xp), f(xm));
            for r in 0..3 {
                j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn conversion_jacobians_match_finite_differences() {
        let samples = [[0.7, 0.2, 0.4], [0.1, 0.9, 0.3], [0.35, 0.5, 0.8], [0.9, 0.6, 0.1]];
        for p in samples {
            let (_, j) = rgb_to_hsv_jac(p, &mut NoKinks);
            let fd = fd_jacobian(rgb_to_hsv_pixel, p);
            for r in 0..3 {
                for c in 0..3 {
                    assert!(close(j[r][c], fd[r][c], 1e-6), "{p:?} {r}{c}");
                }
            }
            let hsv = rgb_to_hsv_pixel(p);
            let (_, j) = hsv_to_rgb_jac(hsv, &mut NoKinks);
            let fd = fd_jacobian(|x| hsv_to_rgb_jac(x, &mut NoKinks).0, hsv);
            for r in 0..3 {
                for c in 0..3 {
                    assert!(close(j[r][c], fd[r][c], 1e-6));
                }
            }
        }
    }

    #[test]
    fn selective_pass_backward_matches_finite_differences() {
        let samples = [[0.7, 0.2, 0.4], [0.12, 0.15, 0.1], [0.35, 0.5, 0.8], [0.86, 0.84, 0.8]];
        for p in samples {
            let mut tape = SelectiveTape::default();
            smooth_saturation_pixel(p, &mut tape, &mut NoKinks);
            let g = smooth_saturation_pixel_backward(&tape, 1.0);
            for c in 0..3 {
                let f = |d: f64| {
                    let mut q = p;
                    q[c] += d;
                    smooth_saturation_pixel(q, &mut SelectiveTape::default(), &mut NoKinks)
                };
                let fd = (f(1e-6) - f(-1e-6)) / 2e-6;
                assert!(close(g[c], fd, 1e-6), "{p:?} channel {c}: {} vs {fd}", g[c]);
            }
        }
    }

    #[test]
    fn smooth_hue_jacobian_matches_finite_differences() {
        let p = [0.6, 0.3, 0.2];
        let (_, j) = smooth_hue_pixel(p, &mut NoKinks);
        let fd = fd_jacobian(|x| smooth_hue_pixel(x, &mut NoKinks).0, p);
        let probe = mul(&j, [1.0, -0.5, 0.25]);
        let want = mul(&fd, [1.0, -0.5, 0.25]);
        for r in 0..3 {
            assert!(close(probe[r], want[r], 1e-6));
        }
    }
}
