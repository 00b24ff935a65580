//! Full-resolution application of low-resolution filter maps.
//!
//! Filter maps are bilinearly upsampled (cell-centre aligned, clamp-to-edge)
//! and applied stage by stage. After each chromatic filter only its own HSV
//! channel is kept: the filtered image contributes that one channel and the
//! other two come from the stage input. The attentive filter always runs
//! last and blends the input with a refined version of `I₃`.

use crate::colorspace::{hsv_to_rgb_jac, rgb_to_hsv_jac, saturate_pre, saturate_pre_backward};
use crate::diff::{clamp01_d, logistic, t_mul, Kinks, MarginMap, Mat3, NoKinks, Vec3, ZERO3};
use crate::error::{Error, Result};
use crate::filters::{affine, Channel, FilterMap, FilterStack, ParamGrid, StageOrder};
use crate::image::{bilinear_coord, PlaneImage, Rgb, RgbImage};

/// Bilinearly resamples every parameter channel to `width x height` cells.
pub fn upsample_filter_map<M: FilterMap>(map: &M, width: usize, height: usize) -> Result<M> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("target resolution must be at least 1x1"));
    }
    let src = map.grid();
    let (gw, gh) = src.dims();
    let ch = src.channels();
    let mut data = vec![0.0; width * height * ch];
    for y in 0..height {
        let (y0, y1, fy) = bilinear_coord(gh, height, y);
        for x in 0..width {
            let (x0, x1, fx) = bilinear_coord(gw, width, x);
            let out = &mut data[(y * width + x) * ch..][..ch];
            let corners = [
                (src.cell(x0, y0), (1.0 - fx) * (1.0 - fy)),
                (src.cell(x1, y0), fx * (1.0 - fy)),
                (src.cell(x0, y1), (1.0 - fx) * fy),
                (src.cell(x1, y1), fx * fy),
            ];
            for c in 0..ch {
                // skip zero weights so constant maps come out bit-exact
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (cell, w) in corners {
                    if w != 0.0 {
                        acc += w * cell[c];
                        wsum += w;
                    }
                }
                out[c] = if corners.iter().all(|(cell, _)| cell[c] == corners[0].0[c]) {
                    corners[0].0[c]
                } else {
                    acc / wsum
                };
            }
        }
    }
    map.with_grid(ParamGrid::new(width, height, ch, data)?)
}

/// Replaces `channel` of `prev` with the same channel of `filtered`.
pub fn assemble_stage(prev: &RgbImage, filtered: &RgbImage, channel: Channel) -> Result<RgbImage> {
    Error::check_dims(prev.dims(), filtered.dims())?;
    let k = channel.hsv_index();
    let mut out = prev.clone();
    for i in 0..prev.len() {
        let (mut hsv, _) = rgb_to_hsv_jac(prev.at(i), &mut NoKinks);
        let (hsv_f, _) = rgb_to_hsv_jac(filtered.at(i), &mut NoKinks);
        hsv[k] = hsv_f[k];
        let (rgb, _) = hsv_to_rgb_jac(hsv, &mut NoKinks);
        out.set_at(i, rgb.map(|v| v.clamp(0.0, 1.0)));
    }
    Ok(out)
}

/// Intermediate images and extracted channels of one pipeline run.
///
/// `i1..i3` are the outputs of the first, second and third chromatic stage
/// in execution order (value, saturation, hue by default); `i4` is the
/// attentive result.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineTrace {
    pub i1: RgbImage,
    pub i2: RgbImage,
    pub i3: RgbImage,
    pub i4: RgbImage,
    /// V channel produced by the value stage.
    pub value: PlaneImage,
    /// S channel produced by the saturation stage.
    pub saturation: PlaneImage,
    /// H channel produced by the hue stage, radians.
    pub hue: PlaneImage,
    pub order: StageOrder,
}

impl PipelineTrace {
    /// Stage image by 1-based index (`4` is the final result).
    pub fn stage(&self, n: usize) -> Option<&RgbImage> {
        match n {
            1 => Some(&self.i1),
            2 => Some(&self.i2),
            3 => Some(&self.i3),
            4 => Some(&self.i4),
            _ => None,
        }
    }

    /// Output of the stage that harmonizes `channel`.
    pub fn after(&self, channel: Channel) -> &RgbImage {
        match self.order.position(channel) {
            0 => &self.i1,
            1 => &self.i2,
            _ => &self.i3,
        }
    }
}

/// Applies `stack` to `input` at the input's resolution.
pub fn run_pipeline(input: &RgbImage, stack: &FilterStack) -> Result<PipelineTrace> {
    run_pipeline_with(input, stack, &mut NoKinks)
}

/// Per-pixel distance of every piecewise operation in the pipeline to its
/// nearest kink. Used to pick gradient-check points.
pub(crate) fn pipeline_kink_margins(input: &RgbImage, stack: &FilterStack, margins: &mut MarginMap) {
    run_pipeline_with(input, stack, margins).expect("dimensions checked by caller");
}

fn run_pipeline_with<K: Kinks>(input: &RgbImage, stack: &FilterStack, k: &mut K) -> Result<PipelineTrace> {
    let (w, h) = input.dims();
    let sampler = StackSampler::new(stack, w, h);
    let layout = Layout::new(stack.m());
    let mut row = vec![0.0; sampler.row_len()];
    let mut params = vec![0.0; layout.len()];
    let mut tape = PixelTape::default();

    let mut stages = [input.clone(), input.clone(), input.clone(), input.clone()];
    let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for y in 0..h {
        sampler.fill_row(y, &mut row);
        for x in 0..w {
            let i = y * w + x;
            k.pixel(i);
            sampler.pixel(x, &row, &mut params);
            let out = forward_pixel(input.at(i), &params, layout, stack.order, &mut tape, k);
            for s in 0..3 {
                stages[s].set_at(i, out.stages[s]);
            }
            stages[3].set_at(i, out.final_rgb);
            for (c, plane) in planes.iter_mut().enumerate() {
                plane[i] = out.planes[c];
            }
        }
    }
    let [i1, i2, i3, i4] = stages;
    let [hue, saturation, value] = planes.map(|p| PlaneImage::from_vec(w, h, p).expect("finite"));
    Ok(PipelineTrace { i1, i2, i3, i4, value, saturation, hue, order: stack.order })
}

/// Gradient of a scalar loss with respect to every stack parameter, given
/// the loss adjoints on the three stage images and the final image
/// (interleaved RGB, `None` meaning zero). Returned in the order of
/// [`FilterStack::params`].
pub(crate) fn pipeline_backward(
    input: &RgbImage,
    stack: &FilterStack,
    d_stages: [Option<&[f64]>; 3],
    d_final: Option<&[f64]>,
) -> Vec<f64> {
    let (w, h) = input.dims();
    let sampler = StackSampler::new(stack, w, h);
    let layout = Layout::new(stack.m());
    let mut row = vec![0.0; sampler.row_len()];
    let mut row_grad = vec![0.0; sampler.row_len()];
    let mut cell_grad = vec![0.0; sampler.cell_len()];
    let mut params = vec![0.0; layout.len()];
    let mut grad = vec![0.0; layout.len()];
    let mut tape = PixelTape::default();
    let pick = |d: Option<&[f64]>, i: usize| -> Rgb {
        d.map_or([0.0; 3], |d| [d[3 * i], d[3 * i + 1], d[3 * i + 2]])
    };
    for y in 0..h {
        sampler.fill_row(y, &mut row);
        row_grad.iter_mut().for_each(|g| *g = 0.0);
        for x in 0..w {
            let i = y * w + x;
            let ds = [pick(d_stages[0], i), pick(d_stages[1], i), pick(d_stages[2], i)];
            let df = pick(d_final, i);
            if ds.iter().chain([&df]).all(|d| *d == [0.0; 3]) {
                continue;
            }
            sampler.pixel(x, &row, &mut params);
            forward_pixel(input.at(i), &params, layout, stack.order, &mut tape, &mut NoKinks);
            grad.iter_mut().for_each(|g| *g = 0.0);
            backward_pixel(&tape, &params, layout, ds, df, &mut grad);
            sampler.scatter_pixel(x, &grad, &mut row_grad);
        }
        sampler.scatter_row(y, &row_grad, &mut cell_grad);
    }
    sampler.to_stack_order(stack, &cell_grad)
}

/// Sum of squared bilinear weights each grid cell receives over a
/// `width x height` image.
pub(crate) fn cell_coverage(grid: (usize, usize), width: usize, height: usize) -> Vec<f64> {
    let (gw, gh) = grid;
    let mut cx = vec![0.0; gw];
    let mut cy = vec![0.0; gh];
    for x in 0..width {
        let (x0, x1, f) = bilinear_coord(gw, width, x);
        cx[x0] += (1.0 - f) * (1.0 - f);
        cx[x1] += f * f;
    }
    for y in 0..height {
        let (y0, y1, f) = bilinear_coord(gh, height, y);
        cy[y0] += (1.0 - f) * (1.0 - f);
        cy[y1] += f * f;
    }
    let mut out = Vec::with_capacity(gw * gh);
    for y in 0..gh {
        for x in 0..gw {
            out.push(cx[x] * cy[y]);
        }
    }
    out
}

/// Pixels whose value depends on grid cell `(cx, cy)`, as an inclusive
/// rectangle `(x0, y0, x1, y1)`.
pub(crate) fn cell_support(grid: (usize, usize), width: usize, height: usize, cx: usize, cy: usize) -> (usize, usize, usize, usize) {
    let span = |g: usize, n: usize, c: usize| {
        let mut lo = n;
        let mut hi = 0;
        for i in 0..n {
            let (a, b, f) = bilinear_coord(g, n, i);
            if (a == c && f < 1.0) || (b == c && f > 0.0) {
                lo = lo.min(i);
                hi = hi.max(i);
            }
        }
        (lo, hi)
    };
    let (x0, x1) = span(grid.0, width, cx);
    let (y0, y1) = span(grid.1, height, cy);
    (x0, y0, x1, y1)
}

/// Offsets of each filter's parameters inside one pixel's parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub m: usize,
}

impl Layout {
    pub fn new(m: usize) -> Self {
        Self { m }
    }
    #[inline]
    pub fn val(&self) -> usize {
        0
    }
    #[inline]
    pub fn sat(&self) -> usize {
        1 + self.m
    }
    #[inline]
    pub fn hue(&self) -> usize {
        2 + self.m
    }
    #[inline]
    pub fn attn(&self) -> usize {
        14 + self.m
    }
    #[inline]
    pub fn len(&self) -> usize {
        27 + self.m
    }
}

/// Bilinear sampler over all four maps at once, row by row.
pub(crate) struct StackSampler {
    cells: Vec<f64>,
    grid_w: usize,
    grid_h: usize,
    stride: usize,
    height: usize,
    xtaps: Vec<(usize, usize, f64)>,
}

impl StackSampler {
    pub fn new(stack: &FilterStack, width: usize, height: usize) -> Self {
        let (grid_w, grid_h) = stack.grid_dims();
        let grids = [stack.val.grid(), stack.sat.grid(), stack.hue.grid(), stack.attn.grid()];
        let stride: usize = grids.iter().map(|g| g.channels()).sum();
        let mut cells = Vec::with_capacity(grid_w * grid_h * stride);
        for y in 0..grid_h {
            for x in 0..grid_w {
                for g in grids {
                    cells.extend_from_slice(g.cell(x, y));
                }
            }
        }
        let xtaps = (0..width).map(|x| bilinear_coord(grid_w, width, x)).collect();
        Self { cells, grid_w, grid_h, stride, height, xtaps }
    }

    pub fn row_len(&self) -> usize {
        self.grid_w * self.stride
    }

    pub fn row_taps(&self, y: usize) -> (usize, usize, f64) {
        bilinear_coord(self.grid_h, self.height, y)
    }

    /// Vertically interpolated parameters of every grid column for image row `y`.
    pub fn fill_row(&self, y: usize, row: &mut [f64]) {
        let (y0, y1, fy) = self.row_taps(y);
        let n = self.row_len();
        let r0 = &self.cells[y0 * n..][..n];
        let r1 = &self.cells[y1 * n..][..n];
        if fy == 0.0 {
            row.copy_from_slice(r0);
        } else {
            for ((o, a), b) in row.iter_mut().zip(r0).zip(r1) {
                *o = a + fy * (b - a);
            }
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, row: &[f64], out: &mut [f64]) {
        let (x0, x1, fx) = self.xtaps[x];
        let a = &row[x0 * self.stride..][..self.stride];
        if fx == 0.0 {
            out.copy_from_slice(a);
        } else {
            let b = &row[x1 * self.stride..][..self.stride];
            for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
                *o = a + fx * (b - a);
            }
        }
    }

    /// Adds a pixel gradient into a row gradient buffer (adjoint of [`Self::pixel`]).
    #[inline]
    pub fn scatter_pixel(&self, x: usize, grad: &[f64], row_grad: &mut [f64]) {
        let (x0, x1, fx) = self.xtaps[x];
        let s = self.stride;
        for (c, g) in grad.iter().enumerate() {
            row_grad[x0 * s + c] += (1.0 - fx) * g;
            row_grad[x1 * s + c] += fx * g;
        }
    }

    /// Adds a row gradient into the cell gradient (adjoint of [`Self::fill_row`]).
    pub fn scatter_row(&self, y: usize, row_grad: &[f64], cell_grad: &mut [f64]) {
        let (y0, y1, fy) = self.row_taps(y);
        let n = self.row_len();
        for (c, g) in row_grad.iter().enumerate() {
            cell_grad[y0 * n + c] += (1.0 - fy) * g;
            cell_grad[y1 * n + c] += fy * g;
        }
    }

    pub fn cell_len(&self) -> usize {
        self.cells.len()
    }


    /// Reorders a cell-interleaved gradient into the flat order of
    /// [`FilterStack::params`].
    pub fn to_stack_order(&self, stack: &FilterStack, cell_grad: &[f64]) -> Vec<f64> {
        let channels = [
            stack.val.grid().channels(),
            stack.sat.grid().channels(),
            stack.hue.grid().channels(),
            stack.attn.grid().channels(),
        ];
        let ncell = self.grid_w * self.grid_h;
        let mut out = Vec::with_capacity(cell_grad.len());
        let mut offset = 0;
        for ch in channels {
            for cell in 0..ncell {
                out.extend_from_slice(&cell_grad[cell * self.stride + offset..][..ch]);
            }
            offset += ch;
        }
        out
    }
}

/// Forward record of one chromatic stage.
#[derive(Debug, Clone, Copy)]
struct StageTape {
    channel: Channel,
    prev: Rgb,
    prev_jac: Mat3,
    out_jac: Mat3,
    // value stage
    v: f64,
    slope: f64,
    // saturation and hue stages
    sigma: f64,
    sigma_active: bool,
    med: f64,
    imax: usize,
    imin: usize,
    filtered_jac: Mat3,
    interior: [bool; 3],
}

impl Default for StageTape {
    fn default() -> Self {
        Self {
            channel: Channel::Value,
            prev: [0.0; 3],
            prev_jac: ZERO3,
            out_jac: ZERO3,
            v: 0.0,
            slope: 0.0,
            sigma: 0.0,
            sigma_active: false,
            med: 0.0,
            imax: 0,
            imin: 0,
            filtered_jac: ZERO3,
            interior: [false; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PixelTape {
    stages: [StageTape; 3],
    input: Rgb,
    i3: Rgb,
    alpha: f64,
    refined: Rgb,
    final_interior: [bool; 3],
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelOut {
    pub stages: [Rgb; 3],
    pub final_rgb: Rgb,
    /// Extracted `[h, s, v]` of the hue, saturation and value stages.
    pub planes: Vec3,
}

#[inline]
fn clamp_rgb<K: Kinks>(pre: Rgb, k: &mut K) -> (Rgb, [bool; 3]) {
    let (a, ia) = clamp01_d(pre[0], k);
    let (b, ib) = clamp01_d(pre[1], k);
    let (c, ic) = clamp01_d(pre[2], k);
    ([a, b, c], [ia, ib, ic])
}

fn forward_stage<K: Kinks>(
    channel: Channel,
    prev: Rgb,
    params: &[f64],
    layout: Layout,
    t: &mut StageTape,
    k: &mut K,
) -> (Rgb, f64) {
    let (hsv, prev_jac) = rgb_to_hsv_jac(prev, k);
    t.channel = channel;
    t.prev = prev;
    t.prev_jac = prev_jac;
    let mut combined = hsv;
    let extracted = match channel {
        Channel::Value => {
            let v = hsv[2];
            let base = layout.val();
            let m = layout.m as f64;
            let mut pre = params[base];
            let mut slope = 0.0;
            for i in 0..layout.m {
                let knot = i as f64 / m;
                k.note((v - knot).abs());
                let phi = params[base + 1 + i];
                if v > knot {
                    pre += phi * (v - knot);
                    slope += phi;
                }
            }
            let (out, inside) = clamp01_d(pre, k);
            t.v = v;
            t.slope = slope;
            t.interior = [inside; 3];
            out
        }
        Channel::Saturation => {
            let raw = params[layout.sat()];
            k.note((raw - 1.0).abs().min((raw + 1.0).abs()));
            let sigma = raw.clamp(-1.0, 1.0);
            let (pre, med, imax, imin) = saturate_pre(prev, sigma);
            let (f, interior) = clamp_rgb(pre, k);
            let (hsv_f, filtered_jac) = rgb_to_hsv_jac(f, k);
            t.sigma = sigma;
            t.sigma_active = raw.abs() < 1.0;
            t.med = med;
            t.imax = imax;
            t.imin = imin;
            t.interior = interior;
            t.filtered_jac = filtered_jac;
            hsv_f[1]
        }
        Channel::Hue => {
            let pre = affine(&params[layout.hue()..layout.hue() + 12], prev);
            let (f, interior) = clamp_rgb(pre, k);
            let (hsv_f, filtered_jac) = rgb_to_hsv_jac(f, k);
            t.interior = interior;
            t.filtered_jac = filtered_jac;
            hsv_f[0]
        }
    };
    combined[channel.hsv_index()] = extracted;
    let (out, out_jac) = hsv_to_rgb_jac(combined, k);
    t.out_jac = out_jac;
    // hsv_to_rgb of in-range inputs stays in range up to rounding
    (out.map(|v| v.clamp(0.0, 1.0)), extracted)
}

/// Pulls `d_out` back through one stage; adds parameter gradients into `grad`
/// and returns the adjoint of the stage input.
fn backward_stage(t: &StageTape, d_out: Rgb, params: &[f64], layout: Layout, grad: &mut [f64]) -> Rgb {
    let d_comb = t_mul(&t.out_jac, d_out);
    let idx = t.channel.hsv_index();
    let d_extracted = d_comb[idx];
    let mut d_hsv_prev = d_comb;
    d_hsv_prev[idx] = 0.0;
    let mut d_prev = [0.0; 3];
    match t.channel {
        Channel::Value => {
            let d_pre = if t.interior[0] { d_extracted } else { 0.0 };
            if d_pre != 0.0 {
                let base = layout.val();
                let m = layout.m as f64;
                grad[base] += d_pre;
                for i in 0..layout.m {
                    let knot = i as f64 / m;
                    if t.v > knot {
                        grad[base + 1 + i] += d_pre * (t.v - knot);
                    }
                }
                d_hsv_prev[2] += d_pre * t.slope;
            }
        }
        Channel::Saturation => {
            let mut d_hsv_f = [0.0; 3];
            d_hsv_f[1] = d_extracted;
            let d_f = t_mul(&t.filtered_jac, d_hsv_f);
            let d_pre = [0, 1, 2].map(|c| if t.interior[c] { d_f[c] } else { 0.0 });
            let (dx, dsigma) = saturate_pre_backward(d_pre, t.prev, t.sigma, t.med, t.imax, t.imin);
            if t.sigma_active {
                grad[layout.sat()] += dsigma;
            }
            d_prev = dx;
        }
        Channel::Hue => {
            let mut d_hsv_f = [0.0; 3];
            d_hsv_f[0] = d_extracted;
            let d_f = t_mul(&t.filtered_jac, d_hsv_f);
            let d_pre = [0, 1, 2].map(|c| if t.interior[c] { d_f[c] } else { 0.0 });
            let base = layout.hue();
            let delta = &params[base..base + 12];
            for r in 0..3 {
                if d_pre[r] == 0.0 {
                    continue;
                }
                for c in 0..3 {
                    grad[base + 4 * r + c] += d_pre[r] * t.prev[c];
                    d_prev[c] += delta[4 * r + c] * d_pre[r];
                }
                grad[base + 4 * r + 3] += d_pre[r];
            }
        }
    }
    let back = t_mul(&t.prev_jac, d_hsv_prev);
    [d_prev[0] + back[0], d_prev[1] + back[1], d_prev[2] + back[2]]
}

pub(crate) fn forward_pixel<K: Kinks>(
    input: Rgb,
    params: &[f64],
    layout: Layout,
    order: StageOrder,
    tape: &mut PixelTape,
    k: &mut K,
) -> PixelOut {
    let mut x = input;
    let mut stages = [[0.0; 3]; 3];
    let mut planes = [0.0; 3];
    for (s, channel) in order.stages().into_iter().enumerate() {
        let (out, extracted) = forward_stage(channel, x, params, layout, &mut tape.stages[s], k);
        stages[s] = out;
        planes[channel.hsv_index()] = extracted;
        x = out;
    }
    let a = layout.attn();
    let alpha = logistic(params[a]);
    let refined = affine(&params[a + 1..a + 13], x);
    let pre = [0, 1, 2].map(|c| input[c] * alpha + refined[c] * (1.0 - alpha));
    let (final_rgb, interior) = clamp_rgb(pre, k);
    tape.input = input;
    tape.i3 = x;
    tape.alpha = alpha;
    tape.refined = refined;
    tape.final_interior = interior;
    PixelOut { stages, final_rgb, planes }
}

/// Reverse pass for one pixel. `d_stages` are adjoints on the three stage
/// outputs, `d_final` on the attentive output.
pub(crate) fn backward_pixel(
    tape: &PixelTape,
    params: &[f64],
    layout: Layout,
    d_stages: [Rgb; 3],
    d_final: Rgb,
    grad: &mut [f64],
) {
    let a = layout.attn();
    let alpha = tape.alpha;
    let d_pre = [0, 1, 2].map(|c| if tape.final_interior[c] { d_final[c] } else { 0.0 });
    let mut d_x = d_stages[2];
    if d_pre.iter().any(|v| *v != 0.0) {
        let mut d_alpha = 0.0;
        let w = &params[a + 1..a + 13];
        for r in 0..3 {
            d_alpha += d_pre[r] * (tape.input[r] - tape.refined[r]);
            let g = (1.0 - alpha) * d_pre[r];
            for c in 0..3 {
                grad[a + 1 + 4 * r + c] += g * tape.i3[c];
                d_x[c] += w[4 * r + c] * g;
            }
            grad[a + 1 + 4 * r + 3] += g;
        }
        grad[a] += d_alpha * alpha * (1.0 - alpha);
    }
    for s in (0..3).rev() {
        let d_prev = backward_stage(&tape.stages[s], d_x, params, layout, grad);
        d_x = if s > 0 {
            [d_prev[0] + d_stages[s - 1][0], d_prev[1] + d_stages[s - 1][1], d_prev[2] + d_stages[s - 1][2]]
        } else {
            d_prev
        };
    }
}
