use crate::assembly::{cell_coverage, cell_support, pipeline_backward, pipeline_kink_margins, run_pipeline, PipelineTrace};
use crate::diff::{MarginMap, NoKinks};
use crate::error::{Error, Result};
use crate::filters::{Channel, FilterMap, FilterStack};
use crate::image::{fit_within, Mask, RgbImage};
use crate::losses::{fg_mse_grad, fg_norm, stack_tv, stack_tv_grad, AuxTarget, LossBreakdown, LossMode, LossWeights};

/// Longest side of the low-resolution stream.
pub const LOW_STREAM_MAX_SIDE: usize = 256;

#[derive(Debug, Clone)]
struct Stream {
    composite: RgbImage,
    gt: RgbImage,
    mask: Mask,
    norm: f64,
}

impl Stream {
    fn new(composite: RgbImage, gt: RgbImage, mask: Mask) -> Self {
        let norm = fg_norm(&mask);
        Self { composite, gt, mask, norm }
    }
}

/// The fitting objective for one (composite, ground truth, mask) triple.
///
/// When the working image already fits within [`LOW_STREAM_MAX_SIDE`] the
/// low and high streams coincide and are evaluated once.
#[derive(Debug, Clone)]
pub struct Objective {
    high: Stream,
    low: Option<Stream>,
    aux: Option<AuxTarget>,
    weights: LossWeights,
    mode: LossMode,
}

impl Objective {
    pub fn new(composite: &RgbImage, gt: &RgbImage, mask: &Mask, weights: LossWeights, mode: LossMode) -> Result<Self> {
        Error::check_dims(composite.dims(), gt.dims())?;
        Error::check_dims(composite.dims(), mask.dims())?;
        weights.validate()?;
        let dims = composite.dims();
        let (lw, lh) = fit_within(dims, LOW_STREAM_MAX_SIDE);
        let high = Stream::new(composite.clone(), gt.clone(), mask.clone());
        let low = ((lw, lh) != dims).then(|| {
            Stream::new(composite.resize_area(lw, lh), gt.resize_area(lw, lh), mask.resize_area(lw, lh))
        });
        let aux_stream = low.as_ref().unwrap_or(&high);
        let aux = match mode {
            LossMode::RgbOnly => None,
            _ => Some(AuxTarget::new(&aux_stream.gt, &aux_stream.mask, mode)?),
        };
        Ok(Self { high, low, aux, weights, mode })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn mode(&self) -> LossMode {
        self.mode
    }

    pub fn composite(&self) -> &RgbImage {
        &self.high.composite
    }

    pub fn gt(&self) -> &RgbImage {
        &self.high.gt
    }

    pub fn loss(&self, stack: &FilterStack) -> Result<LossBreakdown> {
        self.evaluate(stack, false).map(|(l, _)| l)
    }

    /// Loss and its gradient in the order of [`FilterStack::params`].
    pub fn loss_and_grad(&self, stack: &FilterStack) -> Result<(LossBreakdown, Vec<f64>)> {
        self.evaluate(stack, true).map(|(l, g)| (l, g.expect("requested")))
    }

    fn evaluate(&self, stack: &FilterStack, want_grad: bool) -> Result<(LossBreakdown, Option<Vec<f64>>)> {
        let w = &self.weights;
        let mut out = LossBreakdown::default();
        let mut grad = want_grad.then(|| vec![0.0; stack.param_count()]);
        match &self.low {
            None => {
                let (rgb, aux) = self.stream(&self.high, stack, w.rgb_low + w.rgb_high, true, grad.as_deref_mut())?;
                out.rgb_low = w.rgb_low * rgb;
                out.rgb_high = w.rgb_high * rgb;
                (out.val, out.sat, out.hue) = aux;
            }
            Some(low) => {
                let (rgb_low, aux) = self.stream(low, stack, w.rgb_low, true, grad.as_deref_mut())?;
                let (rgb_high, _) = self.stream(&self.high, stack, w.rgb_high, false, grad.as_deref_mut())?;
                out.rgb_low = w.rgb_low * rgb_low;
                out.rgb_high = w.rgb_high * rgb_high;
                (out.val, out.sat, out.hue) = aux;
            }
        }
        out.tv = w.tv * stack_tv(stack);
        if let Some(g) = grad.as_deref_mut() {
            if w.tv > 0.0 {
                stack_tv_grad(stack, w.tv, g, &mut NoKinks);
            }
        }
        Ok((out.sum(), grad))
    }

    /// Unweighted RGB error (I3 + I4) and weighted aux terms of one stream;
    /// adds the weighted gradient into `grad`.
    fn stream(
        &self,
        s: &Stream,
        stack: &FilterStack,
        rgb_weight: f64,
        with_aux: bool,
        grad: Option<&mut [f64]>,
    ) -> Result<(f64, (f64, f64, f64))> {
        let trace = run_pipeline(&s.composite, stack)?;
        let n = 3 * s.composite.len();
        let aux = if with_aux { self.aux.as_ref() } else { None };
        let Some(grad) = grad else {
            let rgb = fg_mse_plain(&trace.i3, &s.gt, s.norm) + fg_mse_plain(&trace.i4, &s.gt, s.norm);
            return Ok((rgb, self.aux_terms(aux, &trace, None)));
        };
        let mut d_final = vec![0.0; n];
        let mut d_stages = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let rgb = fg_mse_grad(&trace.i3, &s.gt, s.norm, rgb_weight, &mut d_stages[2])
            + fg_mse_grad(&trace.i4, &s.gt, s.norm, rgb_weight, &mut d_final);
        let terms = self.aux_terms(aux, &trace, Some(&mut d_stages));
        let used = |d: &Vec<f64>| d.iter().any(|v| *v != 0.0);
        let stage_refs = [0, 1, 2].map(|i| used(&d_stages[i]).then(|| d_stages[i].as_slice()));
        let g = pipeline_backward(&s.composite, stack, stage_refs, used(&d_final).then_some(d_final.as_slice()));
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        Ok((rgb, terms))
    }

    fn aux_terms(
        &self,
        aux: Option<&AuxTarget>,
        trace: &PipelineTrace,
        mut d_stages: Option<&mut [Vec<f64>; 3]>,
    ) -> (f64, f64, f64) {
        let Some(aux) = aux else { return (0.0, 0.0, 0.0) };
        let w = &self.weights;
        let order = trace.order;
        let mut term = |c: Channel, weight: f64| -> f64 {
            if weight == 0.0 {
                return 0.0;
            }
            let pred = trace.after(c);
            let g = d_stages.as_deref_mut().map(|d| d[order.position(c)].as_mut_slice());
            weight
                * match c {
                    Channel::Value => aux.value(pred, g, weight, &mut NoKinks),
                    Channel::Saturation => aux.saturation(pred, g, weight, &mut NoKinks),
                    Channel::Hue => aux.hue(pred, g, weight, &mut NoKinks),
                }
        };
        let val = term(Channel::Value, w.val);
        let sat = term(Channel::Saturation, w.sat);
        let hue = term(Channel::Hue, w.hue);
        (val, sat, hue)
    }

    /// Diagonal step scaling: the loss normalizer over the squared bilinear
    /// coverage of each parameter's cell, so every cell moves at a similar
    /// rate regardless of grid and image size.
    pub(crate) fn preconditioner(&self, stack: &FilterStack) -> Vec<f64> {
        let (w, h) = self.high.composite.dims();
        let coverage = cell_coverage(stack.grid_dims(), w, h);
        let gw = stack.grid_dims().0;
        let rgb = (self.weights.rgb_low + self.weights.rgb_high).max(1e-12);
        (0..stack.param_count())
            .map(|i| {
                let (cx, cy) = stack.param_cell(i).expect("index in range");
                self.high.norm / (4.0 * rgb * coverage[cy * gw + cx].max(1e-12))
            })
            .collect()
    }

    /// Smallest distance to a kink that any pixel influenced by each
    /// parameter comes within, including the TV differences of the
    /// parameter itself. Indexed like [`FilterStack::params`].
    pub fn param_kink_margins(&self, stack: &FilterStack) -> Vec<f64> {
        let grid = stack.grid_dims();
        let mut streams = vec![(&self.high, self.low.is_none())];
        if let Some(low) = &self.low {
            streams.push((low, true));
        }
        let mut cell_margin = vec![f64::INFINITY; grid.0 * grid.1];
        for (s, with_aux) in streams {
            let margins = self.pixel_margins(s, stack, with_aux);
            let (w, h) = s.composite.dims();
            for cy in 0..grid.1 {
                for cx in 0..grid.0 {
                    let (x0, y0, x1, y1) = cell_support(grid, w, h, cx, cy);
                    let slot = &mut cell_margin[cy * grid.0 + cx];
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            *slot = slot.min(margins[y * w + x]);
                        }
                    }
                }
            }
        }
        let mut out: Vec<f64> = (0..stack.param_count())
            .map(|i| {
                let (cx, cy) = stack.param_cell(i).expect("index in range");
                cell_margin[cy * grid.0 + cx]
            })
            .collect();
        if self.weights.tv > 0.0 {
            tv_margins(stack, &mut out);
        }
        out
    }

    fn pixel_margins(&self, s: &Stream, stack: &FilterStack, with_aux: bool) -> Vec<f64> {
        let mut margins = MarginMap::new(s.composite.len());
        pipeline_kink_margins(&s.composite, stack, &mut margins);
        if let (true, Some(aux)) = (with_aux, &self.aux) {
            let trace = run_pipeline(&s.composite, stack).expect("dimensions checked");
            aux.value(trace.after(Channel::Value), None, 1.0, &mut margins);
            aux.saturation(trace.after(Channel::Saturation), None, 1.0, &mut margins);
            aux.hue(trace.after(Channel::Hue), None, 1.0, &mut margins);
        }
        margins.data
    }
}

fn fg_mse_plain(pred: &RgbImage, gt: &RgbImage, norm: f64) -> f64 {
    pred.data().iter().zip(gt.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / norm
}

/// Distance of each parameter to equality with a grid neighbour.
fn tv_margins(stack: &FilterStack, out: &mut [f64]) {
    let grids = [stack.val.grid(), stack.sat.grid(), stack.hue.grid(), stack.attn.grid()];
    let mut offset = 0;
    for g in grids {
        let (w, h) = g.dims();
        let ch = g.channels();
        for y in 0..h {
            for x in 0..w {
                for c in 0..ch {
                    let v = g.cell(x, y)[c];
                    let mut d = f64::INFINITY;
                    for (nx, ny) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
                        if nx < w && ny < h {
                            d = d.min((g.cell(nx, ny)[c] - v).abs());
                        }
                    }
                    let i = offset + (y * w + x) * ch + c;
                    out[i] = out[i].min(d);
                }
            }
        }
        offset += w * h * ch;
    }
}

/// Central difference of the total loss along one parameter.
pub fn finite_diff_probe(objective: &Objective, stack: &FilterStack, index: usize, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    if index >= stack.param_count() {
        return Err(Error::invalid(format!("parameter index {index} out of range")));
    }
    let mut params = stack.params();
    let mut probe = stack.clone();
    let base = params[index];
    params[index] = base + h;
    probe.set_params(&params)?;
    let up = objective.loss(&probe)?.total;
    params[index] = base - h;
    probe.set_params(&params)?;
    let down = objective.loss(&probe)?.total;
    Ok((up - down) / (2.0 * h))
}

/// Relative disagreement between two derivative estimates.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::identity_stack;

    #[test]
    fn large_images_get_a_separate_low_stream() {
        let img = RgbImage::filled(300, 20, [0.3, 0.5, 0.7]);
        let m = Mask::full(300, 20);
        let o = Objective::new(&img, &img, &m, LossWeights::default(), LossMode::Smooth).unwrap();
        assert_eq!(o.low.as_ref().unwrap().composite.dims(), (256, 17));
        let (l, g) = o.loss_and_grad(&identity_stack(4, 2).unwrap()).unwrap();
        assert!(l.total < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_probe_arguments() {
        let img = RgbImage::filled(8, 8, [0.3, 0.5, 0.7]);
        let o = Objective::new(&img, &img, &Mask::full(8, 8), LossWeights::default(), LossMode::Smooth).unwrap();
        let s = identity_stack(2, 2).unwrap();
        assert!(finite_diff_probe(&o, &s, 0, 0.0).is_err());
        assert!(finite_diff_probe(&o, &s, s.param_count(), 1e-4).is_err());
    }
}
