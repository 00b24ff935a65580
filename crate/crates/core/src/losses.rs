//! Fitting objective: foreground-normalized RGB error, auxiliary HSV losses
//! on the stage images, and total-variation smoothing of the filter maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assembly::PipelineTrace;
use crate::colorspace::{
    gaussian_blur, gaussian_blur_adjoint, rgb_to_hsv_jac, smooth_hue_pixel, smooth_saturation_pixel,
    smooth_saturation_pixel_backward, SelectiveTape, SMOOTH_V_KERNEL, SMOOTH_V_STD,
};
use crate::diff::{t_mul, Kinks, NoKinks};
use crate::error::{Error, Result};
use crate::filters::{Channel, FilterMap, FilterStack};
use crate::image::{Mask, PlaneImage, RgbImage};

/// Floor on the foreground area used as the loss normalizer.
pub const A_MIN: f64 = 100.0;

/// Weights of the objective terms. `rgb_low` and `rgb_high` scale the RGB
/// error of `I3` and `I4` on the low and high resolution streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub rgb_low: f64,
    pub rgb_high: f64,
    pub val: f64,
    pub sat: f64,
    pub hue: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { rgb_low: 1.0, rgb_high: 1.0, val: 0.1, sat: 0.1, hue: 0.1, tv: 1e-3 }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self { rgb_low: 0.0, rgb_high: 0.0, val: 0.0, sat: 0.0, hue: 0.0, tv: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.rgb_low, self.rgb_high, self.val, self.sat, self.hue, self.tv];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

/// How the auxiliary HSV losses are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LossMode {
    /// Compare smoothed V, S and H maps.
    #[default]
    Smooth,
    /// Compare raw V and S planes; cosine distance on H.
    Standard,
    /// No auxiliary losses.
    RgbOnly,
}

impl LossMode {
    pub fn name(self) -> &'static str {
        match self {
            LossMode::Smooth => "smooth",
            LossMode::Standard => "standard",
            LossMode::RgbOnly => "rgb_only",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smooth" => Ok(LossMode::Smooth),
            "standard" => Ok(LossMode::Standard),
            "rgb_only" | "rgb-only" | "rgb" => Ok(LossMode::RgbOnly),
            other => Err(Error::invalid(format!("unknown loss mode '{other}'"))),
        }
    }
}

impl Serialize for LossMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for LossMode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Loss normalizer: the foreground area, floored at [`A_MIN`].
pub fn fg_norm(mask: &Mask) -> f64 {
    mask.area().max(A_MIN)
}

/// Sum of squared RGB differences over all pixels, divided by the floored
/// foreground area.
pub fn fg_mse(pred: &RgbImage, gt: &RgbImage, mask: &Mask) -> Result<f64> {
    Error::check_dims(gt.dims(), pred.dims())?;
    Error::check_dims(gt.dims(), mask.dims())?;
    Ok(sse(pred.data(), gt.data()) / fg_norm(mask))
}

fn sse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Auxiliary losses for the three HSV channels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuxLosses {
    pub val: f64,
    pub sat: f64,
    pub hue: f64,
}

/// Value, saturation and hue losses of a single prediction against `gt`.
pub fn aux_hsv_losses(pred: &RgbImage, gt: &RgbImage, mask: &Mask, mode: LossMode) -> Result<AuxLosses> {
    Error::check_dims(gt.dims(), pred.dims())?;
    let target = AuxTarget::new(gt, mask, mode)?;
    Ok(AuxLosses {
        val: target.value(pred, None, 1.0, &mut NoKinks),
        sat: target.saturation(pred, None, 1.0, &mut NoKinks),
        hue: target.hue(pred, None, 1.0, &mut NoKinks),
    })
}

/// Anisotropic total variation of every parameter channel, summed over
/// channels and divided by the number of grid cells.
pub fn tv_reg<M: FilterMap>(map: &M) -> f64 {
    let g = map.grid();
    let (w, h) = g.dims();
    let mut tv = 0.0;
    for c in 0..g.channels() {
        tv += g.channel_plane(c).total_variation();
    }
    tv / (w * h) as f64
}

/// Sum of [`tv_reg`] over the four maps.
pub fn stack_tv(stack: &FilterStack) -> f64 {
    tv_reg(&stack.val) + tv_reg(&stack.sat) + tv_reg(&stack.hue) + tv_reg(&stack.attn)
}

/// Adds the gradient of `weight * stack_tv` to `grad` (ordered like
/// [`FilterStack::params`]); `k` receives each difference's distance to 0.
pub(crate) fn stack_tv_grad<K: Kinks>(stack: &FilterStack, weight: f64, grad: &mut [f64], k: &mut K) {
    let grids = [stack.val.grid(), stack.sat.grid(), stack.hue.grid(), stack.attn.grid()];
    let mut offset = 0;
    for g in grids {
        let (w, h) = g.dims();
        let ch = g.channels();
        let scale = weight / (w * h) as f64;
        let idx = |x: usize, y: usize, c: usize| offset + (y * w + x) * ch + c;
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let v = g.cell(x, y)[c];
                    let mut visit = |nx: usize, ny: usize| {
                        let d = g.cell(nx, ny)[c] - v;
                        k.note(d.abs());
                        let s = scale * sign(d);
                        grad[idx(nx, ny, c)] += s;
                        grad[idx(x, y, c)] -= s;
                    };
                    if x + 1 < w {
                        visit(x + 1, y);
                    }
                    if y + 1 < h {
                        visit(x, y + 1);
                    }
                }
            }
        }
        offset += w * h * ch;
    }
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Images entering [`total_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub trace_low: &'a PipelineTrace,
    pub trace_high: &'a PipelineTrace,
    pub gt_low: &'a RgbImage,
    pub gt_high: &'a RgbImage,
    pub mask_low: &'a Mask,
    pub mask_high: &'a Mask,
}

/// Weighted terms of the objective and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub rgb_low: f64,
    pub rgb_high: f64,
    pub val: f64,
    pub sat: f64,
    pub hue: f64,
    pub tv: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub(crate) fn sum(mut self) -> Self {
        self.total = self.rgb_low + self.rgb_high + self.val + self.sat + self.hue + self.tv;
        self
    }
}

/// Full objective. RGB terms cover both `I3` and `I4` on both streams; the
/// HSV terms use the low stream only, each on the output of its own stage.
pub fn total_loss(
    inputs: LossInputs<'_>,
    stack: &FilterStack,
    weights: &LossWeights,
    mode: LossMode,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let LossInputs { trace_low, trace_high, gt_low, gt_high, mask_low, mask_high } = inputs;
    let rgb = |t: &PipelineTrace, gt: &RgbImage, m: &Mask| -> Result<f64> {
        Ok(fg_mse(&t.i3, gt, m)? + fg_mse(&t.i4, gt, m)?)
    };
    let mut out = LossBreakdown {
        rgb_low: weights.rgb_low * rgb(trace_low, gt_low, mask_low)?,
        rgb_high: weights.rgb_high * rgb(trace_high, gt_high, mask_high)?,
        tv: weights.tv * stack_tv(stack),
        ..Default::default()
    };
    if mode != LossMode::RgbOnly {
        let target = AuxTarget::new(gt_low, mask_low, mode)?;
        out.val = weights.val * target.value(trace_low.after(Channel::Value), None, 1.0, &mut NoKinks);
        out.sat = weights.sat * target.saturation(trace_low.after(Channel::Saturation), None, 1.0, &mut NoKinks);
        out.hue = weights.hue * target.hue(trace_low.after(Channel::Hue), None, 1.0, &mut NoKinks);
    }
    Ok(out.sum())
}

/// Adds `scale * d fg_mse / d pred` to `grad` and returns `fg_mse`.
pub(crate) fn fg_mse_grad(pred: &RgbImage, gt: &RgbImage, norm: f64, scale: f64, grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for ((g, p), t) in grad.iter_mut().zip(pred.data()).zip(gt.data()) {
        let d = p - t;
        total += d * d;
        *g += scale * 2.0 * d / norm;
    }
    total / norm
}

/// Ground-truth side of the auxiliary losses, precomputed once per fit.
#[derive(Debug, Clone)]
pub(crate) struct AuxTarget {
    mode: LossMode,
    norm: f64,
    dims: (usize, usize),
    val: Vec<f64>,
    sat: Vec<f64>,
    /// Hue angle (standard) or interleaved hue rendering (smooth).
    hue: Vec<f64>,
}

impl AuxTarget {
    pub fn new(gt: &RgbImage, mask: &Mask, mode: LossMode) -> Result<Self> {
        Error::check_dims(gt.dims(), mask.dims())?;
        let n = gt.len();
        let mut t = Self {
            mode,
            norm: fg_norm(mask),
            dims: gt.dims(),
            val: Vec::new(),
            sat: Vec::new(),
            hue: Vec::new(),
        };
        match mode {
            LossMode::RgbOnly => {}
            LossMode::Standard => {
                let hsv: Vec<_> = gt.pixels().map(|p| rgb_to_hsv_jac(p, &mut NoKinks).0).collect();
                t.val = hsv.iter().map(|p| p[2]).collect();
                t.sat = hsv.iter().map(|p| p[1]).collect();
                t.hue = hsv.iter().map(|p| p[0]).collect();
            }
            LossMode::Smooth => {
                t.val = value_plane(gt, &mut NoKinks).0;
                t.val = blur(&t.val, gt.dims());
                let mut tape = SelectiveTape::default();
                t.sat = gt.pixels().map(|p| smooth_saturation_pixel(p, &mut tape, &mut NoKinks)).collect();
                t.hue = Vec::with_capacity(3 * n);
                for p in gt.pixels() {
                    t.hue.extend_from_slice(&smooth_hue_pixel(p, &mut NoKinks).0);
                }
            }
        }
        Ok(t)
    }

    /// Value loss of `pred`; with `grad`, adds `scale * dL/dpred`.
    pub fn value<K: Kinks>(&self, pred: &RgbImage, grad: Option<&mut [f64]>, scale: f64, k: &mut K) -> f64 {
        if self.mode == LossMode::RgbOnly {
            return 0.0;
        }
        let (v, rows) = value_plane(pred, k);
        let v = if self.mode == LossMode::Smooth { blur(&v, self.dims) } else { v };
        let loss = sse(&v, &self.val) / self.norm;
        if let Some(grad) = grad {
            let mut d: Vec<f64> = v.iter().zip(&self.val).map(|(a, b)| scale * 2.0 * (a - b) / self.norm).collect();
            if self.mode == LossMode::Smooth {
                let plane = PlaneImage::from_vec(self.dims.0, self.dims.1, d).expect("finite");
                d = gaussian_blur_adjoint(&plane, SMOOTH_V_STD, SMOOTH_V_KERNEL).expect("valid kernel").data().to_vec();
            }
            for (i, (dv, row)) in d.iter().zip(&rows).enumerate() {
                for c in 0..3 {
                    grad[3 * i + c] += dv * row[c];
                }
            }
        }
        loss
    }

    /// Saturation loss of `pred`; with `grad`, adds `scale * dL/dpred`.
    pub fn saturation<K: Kinks>(&self, pred: &RgbImage, mut grad: Option<&mut [f64]>, scale: f64, k: &mut K) -> f64 {
        let mut total = 0.0;
        match self.mode {
            LossMode::RgbOnly => return 0.0,
            LossMode::Standard => {
                for (i, p) in pred.pixels().enumerate() {
                    k.pixel(i);
                    let (hsv, j) = rgb_to_hsv_jac(p, k);
                    let d = hsv[1] - self.sat[i];
                    total += d * d;
                    if let Some(g) = grad.as_deref_mut() {
                        let dd = scale * 2.0 * d / self.norm;
                        for c in 0..3 {
                            g[3 * i + c] += dd * j[1][c];
                        }
                    }
                }
            }
            LossMode::Smooth => {
                let mut tape = SelectiveTape::default();
                for (i, p) in pred.pixels().enumerate() {
                    k.pixel(i);
                    let s = smooth_saturation_pixel(p, &mut tape, k);
                    let d = s - self.sat[i];
                    total += d * d;
                    if let Some(g) = grad.as_deref_mut() {
                        let back = smooth_saturation_pixel_backward(&tape, scale * 2.0 * d / self.norm);
                        for c in 0..3 {
                            g[3 * i + c] += back[c];
                        }
                    }
                }
            }
        }
        total / self.norm
    }

    /// Hue loss of `pred`; with `grad`, adds `scale * dL/dpred`.
    pub fn hue<K: Kinks>(&self, pred: &RgbImage, mut grad: Option<&mut [f64]>, scale: f64, k: &mut K) -> f64 {
        let mut total = 0.0;
        match self.mode {
            LossMode::RgbOnly => return 0.0,
            LossMode::Standard => {
                for (i, p) in pred.pixels().enumerate() {
                    k.pixel(i);
                    let (hsv, j) = rgb_to_hsv_jac(p, k);
                    let diff = hsv[0] - self.hue[i];
                    total += 1.0 - diff.cos();
                    if let Some(g) = grad.as_deref_mut() {
                        let dh = scale * diff.sin() / self.norm;
                        for c in 0..3 {
                            g[3 * i + c] += dh * j[0][c];
                        }
                    }
                }
            }
            LossMode::Smooth => {
                for (i, p) in pred.pixels().enumerate() {
                    k.pixel(i);
                    let (rgb, j) = smooth_hue_pixel(p, k);
                    let t = &self.hue[3 * i..3 * i + 3];
                    let d = [rgb[0] - t[0], rgb[1] - t[1], rgb[2] - t[2]];
                    total += d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                    if let Some(g) = grad.as_deref_mut() {
                        let f = scale * 2.0 / self.norm;
                        let back = t_mul(&j, [f * d[0], f * d[1], f * d[2]]);
                        for c in 0..3 {
                            g[3 * i + c] += back[c];
                        }
                    }
                }
            }
        }
        total / self.norm
    }
}

/// V plane with the gradient row `dV/drgb` of every pixel.
fn value_plane<K: Kinks>(img: &RgbImage, k: &mut K) -> (Vec<f64>, Vec<[f64; 3]>) {
    let mut v = Vec::with_capacity(img.len());
    let mut rows = Vec::with_capacity(img.len());
    for (i, p) in img.pixels().enumerate() {
        k.pixel(i);
        let (hsv, j) = rgb_to_hsv_jac(p, k);
        v.push(hsv[2]);
        rows.push(j[2]);
    }
    (v, rows)
}

fn blur(v: &[f64], dims: (usize, usize)) -> Vec<f64> {
    let plane = PlaneImage::from_vec(dims.0, dims.1, v.to_vec()).expect("finite");
    gaussian_blur(&plane, SMOOTH_V_STD, SMOOTH_V_KERNEL).expect("valid kernel").data().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::run_pipeline;
    use crate::colorspace::{hsv_to_rgb_pixel, rgb_to_hsv_pixel};
    use crate::filters::{identity_stack, ParamGrid, SaturationFilterMap};
    use std::f64::consts::PI;

    fn textured(w: usize, h: usize, phase: f64) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64, y as f64);
            [
                0.5 + 0.4 * (0.3 * x + phase).sin(),
                0.5 + 0.35 * (0.2 * y - phase).cos(),
                0.5 + 0.3 * (0.15 * (x + y) + 2.0 * phase).sin(),
            ]
        })
    }

    #[test]
    fn fg_mse_examples() {
        let gt = RgbImage::filled(10, 10, [0.0; 3]);
        let mask = Mask::from_fn(10, 10, |x, y| if x < 2 && y < 2 { 1.0 } else { 0.0 });
        assert_eq!(fg_mse(&gt, &gt, &mask).unwrap(), 0.0);

        let mut data = gt.data().to_vec();
        data[3 * 37 + 1] += 0.5;
        let pred = RgbImage::from_vec(10, 10, data).unwrap();
        assert_eq!(mask.area(), 4.0);
        assert_eq!(fg_mse(&pred, &gt, &mask).unwrap(), 0.0025);

        let big = textured(16, 16, 0.0);
        let other = textured(16, 16, 0.3);
        let full = Mask::full(16, 16);
        let plain = sse(big.data(), other.data()) / 256.0;
        assert!((fg_mse(&big, &other, &full).unwrap() - plain).abs() < 1e-15);
    }

    #[test]
    fn fg_mse_rejects_mismatch() {
        let a = RgbImage::filled(4, 4, [0.0; 3]);
        let b = RgbImage::filled(4, 5, [0.0; 3]);
        assert!(fg_mse(&a, &b, &Mask::full(4, 4)).is_err());
    }

    #[test]
    fn residual_scaling_is_quadratic() {
        let gt = textured(20, 20, 0.1);
        let pred = gt.map(|p| p.map(|v| v * 0.9 + 0.02));
        let pred2 = RgbImage::from_vec(
            20,
            20,
            pred.data().iter().zip(gt.data()).map(|(p, g)| g + 2.0 * (p - g)).collect(),
        )
        .unwrap();
        let m = Mask::full(20, 20);
        let a = fg_mse(&pred, &gt, &m).unwrap();
        let b = fg_mse(&pred2, &gt, &m).unwrap();
        assert!((b / a - 4.0).abs() < 1e-9);
    }

    #[test]
    fn aux_losses_vanish_on_equal_images() {
        let img = textured(12, 12, 0.4);
        let m = Mask::full(12, 12);
        for mode in [LossMode::Smooth, LossMode::Standard, LossMode::RgbOnly] {
            let l = aux_hsv_losses(&img, &img, &m, mode).unwrap();
            assert_eq!(l, AuxLosses::default());
        }
    }

    #[test]
    fn standard_hue_loss_of_opposite_hues_is_two() {
        let a = RgbImage::from_fn(12, 12, |x, y| hsv_to_rgb_pixel([0.1 * (x + y) as f64, 0.8, 0.7]));
        let b = a.map(|p| {
            let hsv = rgb_to_hsv_pixel(p);
            hsv_to_rgb_pixel([(hsv[0] + PI).rem_euclid(2.0 * PI), hsv[1], hsv[2]])
        });
        let l = aux_hsv_losses(&a, &b, &Mask::full(12, 12), LossMode::Standard).unwrap();
        assert!((l.hue - 2.0).abs() < 1e-9, "{}", l.hue);
    }

    #[test]
    fn smooth_losses_are_finite_and_non_negative() {
        let a = textured(15, 9, 0.0);
        let b = textured(15, 9, 1.3);
        let l = aux_hsv_losses(&a, &b, &Mask::full(15, 9), LossMode::Smooth).unwrap();
        for v in [l.val, l.sat, l.hue] {
            assert!(v.is_finite() && v > 0.0);
        }
    }

    #[test]
    fn tv_examples() {
        let constant = SaturationFilterMap::uniform(5, 4, 0.3).unwrap();
        assert_eq!(tv_reg(&constant), 0.0);
        let single = SaturationFilterMap::new(ParamGrid::new(1, 1, 1, vec![0.7]).unwrap()).unwrap();
        assert_eq!(tv_reg(&single), 0.0);
        let ramp = SaturationFilterMap::new(ParamGrid::new(2, 1, 1, vec![0.0, 1.0]).unwrap()).unwrap();
        assert_eq!(ramp.grid().channel_plane(0).total_variation(), 1.0);
        assert_eq!(tv_reg(&ramp), 0.5);
    }

    #[test]
    fn tv_gradient_matches_differences() {
        let data: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.1 + i as f64 * 0.013).collect();
        let mut stack = identity_stack(4, 3).unwrap();
        stack.sat = SaturationFilterMap::new(ParamGrid::new(4, 3, 1, data).unwrap()).unwrap();
        let mut grad = vec![0.0; stack.param_count()];
        stack_tv_grad(&stack, 1.0, &mut grad, &mut NoKinks);
        let base = stack.params();
        let offset = stack.val.grid().data().len();
        let h = 1e-6;
        for i in offset..offset + 12 {
            let mut p = base.clone();
            p[i] += h;
            let mut s = stack.clone();
            s.set_params(&p).unwrap();
            let up = stack_tv(&s);
            p[i] -= 2.0 * h;
            s.set_params(&p).unwrap();
            let down = stack_tv(&s);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6, "{i}: {fd} vs {}", grad[i]);
        }
        // constant channels sit on the kink, where the subgradient is 0
        assert!(grad[..offset].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn total_loss_of_identity_on_equal_pair_is_zero() {
        let img = textured(16, 16, 0.2);
        let stack = identity_stack(4, 4).unwrap();
        let trace = run_pipeline(&img, &stack).unwrap();
        let m = Mask::full(16, 16);
        let inputs = LossInputs {
            trace_low: &trace,
            trace_high: &trace,
            gt_low: &img,
            gt_high: &img,
            mask_low: &m,
            mask_high: &m,
        };
        for mode in [LossMode::Smooth, LossMode::Standard, LossMode::RgbOnly] {
            let l = total_loss(inputs, &stack, &LossWeights::default(), mode).unwrap();
            assert!(l.total < 1e-10, "{mode}: {l:?}");
        }
        let other = textured(16, 16, 0.9);
        let inputs = LossInputs { gt_low: &other, gt_high: &other, ..inputs };
        let l = total_loss(inputs, &stack, &LossWeights::zero(), LossMode::Smooth).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn aux_gradients_match_finite_differences() {
        let gt = textured(9, 8, 0.0);
        let pred = textured(9, 8, 0.37);
        let m = Mask::from_fn(9, 8, |x, _| if x > 3 { 1.0 } else { 0.3 });
        for mode in [LossMode::Smooth, LossMode::Standard] {
            let t = AuxTarget::new(&gt, &m, mode).unwrap();
            type Term = fn(&AuxTarget, &RgbImage, Option<&mut [f64]>, f64, &mut NoKinks) -> f64;
            let terms: [Term; 3] = [AuxTarget::value, AuxTarget::saturation, AuxTarget::hue];
            for term in terms {
                let mut g = vec![0.0; pred.data().len()];
                term(&t, &pred, Some(&mut g), 1.0, &mut NoKinks);
                for i in (0..g.len()).step_by(5) {
                    let h = 1e-6;
                    let mut d = pred.data().to_vec();
                    d[i] += h;
                    let up = term(&t, &RgbImage::from_vec(9, 8, d.clone()).unwrap(), None, 1.0, &mut NoKinks);
                    d[i] -= 2.0 * h;
                    let down = term(&t, &RgbImage::from_vec(9, 8, d).unwrap(), None, 1.0, &mut NoKinks);
                    let fd = (up - down) / (2.0 * h);
                    assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{mode} {i}: {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("smooth".parse::<LossMode>().unwrap(), LossMode::Smooth);
        assert_eq!("RGB_ONLY".parse::<LossMode>().unwrap(), LossMode::RgbOnly);
        assert!("cosine".parse::<LossMode>().is_err());
        assert!(LossWeights { tv: -1.0, ..Default::default() }.validate().is_err());
    }
}
