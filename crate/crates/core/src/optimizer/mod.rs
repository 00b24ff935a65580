//! Direct fitting of filter-map grids to a reference image.
//!
//! Every parameter of an identity-initialized [`FilterStack`] is optimized
//! by preconditioned gradient descent with heavy-ball momentum. A step that
//! raises the loss is undone, the velocity is dropped and the step halved.

mod objective;
mod synth;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::run_pipeline;
use crate::error::{Error, Result};
use crate::filters::{identity_stack_with, FilterStack, StageOrder, DEFAULT_CURVE_SEGMENTS};
use crate::image::{mse, psnr_from_mse, Mask, RgbImage};
use crate::losses::{LossBreakdown, LossMode, LossWeights};

pub use objective::{finite_diff_probe, relative_error, Objective, LOW_STREAM_MAX_SIDE};
pub use synth::{synth_perturb, PerturbSpec};

/// Settings for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub grid_w: usize,
    pub grid_h: usize,
    pub weights: LossWeights,
    pub mode: LossMode,
    /// Step size applied to the preconditioned gradient.
    pub step: f64,
    pub momentum: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub order: StageOrder,
    /// Half-width of uniform noise added to the identity initialization.
    pub init_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid_w: 64,
            grid_h: 64,
            weights: LossWeights::default(),
            mode: LossMode::Smooth,
            step: 0.05,
            momentum: 0.9,
            max_iters: 500,
            seed: 0,
            order: StageOrder::VSH,
            init_noise: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_w == 0 || self.grid_h == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid("step must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::invalid("init_noise must be non-negative"));
        }
        self.weights.validate()
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Total loss of the iterate evaluated at each iteration.
    pub loss_history: Vec<f64>,
    /// Plain MSE between the final image and the ground truth.
    pub final_mse: f64,
    pub final_psnr: f64,
    pub iterations_run: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl FitReport {
    /// Running minimum of [`Self::loss_history`].
    pub fn best_losses(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.loss_history
            .iter()
            .map(|l| {
                best = best.min(*l);
                best
            })
            .collect()
    }

    pub fn best_loss(&self) -> f64 {
        self.loss_history.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The report in its on-disk JSON layout.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "final_mse": self.final_mse,
            "final_psnr": self.final_psnr,
            "iterations": self.iterations_run,
            "wall_time_s": self.wall_time,
            "loss_history": self.loss_history,
        })
    }
}

/// Per-iteration progress passed to an observer.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub best: f64,
    pub step: f64,
}

/// Fits a stack mapping `composite` onto `gt`.
pub fn fit(composite: &RgbImage, gt: &RgbImage, mask: &Mask, cfg: &FitConfig) -> Result<(FilterStack, FitReport)> {
    fit_with(composite, gt, mask, cfg, |_| true)
}

/// [`fit`] with an observer called after every iteration; returning `false`
/// stops early.
pub fn fit_with(
    composite: &RgbImage,
    gt: &RgbImage,
    mask: &Mask,
    cfg: &FitConfig,
    mut observer: impl FnMut(&Progress) -> bool,
) -> Result<(FilterStack, FitReport)> {
    let start = Instant::now();
    cfg.validate()?;
    let objective = Objective::new(composite, gt, mask, cfg.weights, cfg.mode)?;
    let mut stack = initial_stack(cfg)?;
    let precond = objective.preconditioner(&stack);

    let mut params = stack.params();
    let (first, mut best_grad) = evaluate(&objective, &mut stack, &params, 0)?;
    let mut best = params.clone();
    let mut best_loss = first.total;
    let mut history = vec![first.total];
    let mut velocity = vec![0.0; params.len()];
    let mut step = cfg.step;
    let mut grad = best_grad.clone();
    let min_step = cfg.step * 1e-6;
    if !observer(&Progress { iteration: 0, loss: first, best: best_loss, step }) {
        return finish(&objective, stack, best, history, start);
    }

    for iteration in 1..cfg.max_iters {
        for ((v, g), p) in velocity.iter_mut().zip(&grad).zip(&precond) {
            *v = cfg.momentum * *v - step * p * g;
        }
        for (x, v) in params.iter_mut().zip(&velocity) {
            *x += v;
        }
        let (loss, g) = evaluate(&objective, &mut stack, &params, iteration)?;
        history.push(loss.total);
        if loss.total <= best_loss {
            best_loss = loss.total;
            best.copy_from_slice(&params);
            best_grad.copy_from_slice(&g);
            grad = g;
        } else {
            step *= 0.5;
            params.copy_from_slice(&best);
            grad.copy_from_slice(&best_grad);
            velocity.iter_mut().for_each(|v| *v = 0.0);
        }
        if !observer(&Progress { iteration, loss, best: best_loss, step }) || step < min_step {
            break;
        }
    }
    finish(&objective, stack, best, history, start)
}

fn initial_stack(cfg: &FitConfig) -> Result<FilterStack> {
    let mut stack = identity_stack_with(cfg.grid_w, cfg.grid_h, DEFAULT_CURVE_SEGMENTS, cfg.order)?;
    if cfg.init_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params: Vec<f64> = stack
            .params()
            .into_iter()
            .map(|p| p + rng.random_range(-cfg.init_noise..=cfg.init_noise))
            .collect();
        stack.set_params(&params)?;
    }
    Ok(stack)
}

fn evaluate(
    objective: &Objective,
    stack: &mut FilterStack,
    params: &[f64],
    iteration: usize,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if let Some(i) = params.iter().position(|p| !p.is_finite()) {
        return Err(Error::NonFinite { iteration, channel: stack.param_label(i) });
    }
    stack.set_params(params)?;
    let (loss, grad) = objective.loss_and_grad(stack)?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { iteration, channel: stack.param_label(i) });
    }
    if !loss.total.is_finite() {
        return Err(Error::NonFinite { iteration, channel: "loss".into() });
    }
    Ok((loss, grad))
}

fn finish(
    objective: &Objective,
    mut stack: FilterStack,
    best: Vec<f64>,
    loss_history: Vec<f64>,
    start: Instant,
) -> Result<(FilterStack, FitReport)> {
    stack.set_params(&best)?;
    let trace = run_pipeline(objective.composite(), &stack)?;
    let final_mse = mse(&trace.i4, objective.gt())?;
    let report = FitReport {
        iterations_run: loss_history.len(),
        loss_history,
        final_mse,
        final_psnr: psnr_from_mse(final_mse),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok((stack, report))
}

/// Gradient of the total loss for `stack`, ordered like [`FilterStack::params`].
pub fn analytic_gradients(
    stack: &FilterStack,
    composite: &RgbImage,
    gt: &RgbImage,
    mask: &Mask,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let objective = Objective::new(composite, gt, mask, cfg.weights, cfg.mode)?;
    objective.loss_and_grad(stack).map(|(_, g)| g)
}

/// Central differences `(L(p + h) - L(p - h)) / 2h` for every parameter.
pub fn finite_diff_oracle(
    stack: &FilterStack,
    composite: &RgbImage,
    gt: &RgbImage,
    mask: &Mask,
    cfg: &FitConfig,
    h: f64,
) -> Result<Vec<f64>> {
    let objective = Objective::new(composite, gt, mask, cfg.weights, cfg.mode)?;
    (0..stack.param_count()).map(|i| finite_diff_probe(&objective, stack, i, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::identity_stack;

    fn scene(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 / w as f64, y as f64 / h as f64);
            [0.3 + 0.5 * x, 0.6 - 0.3 * y, 0.4 + 0.2 * (6.0 * x * y).sin()]
        })
    }

    fn small_cfg() -> FitConfig {
        FitConfig { grid_w: 4, grid_h: 4, max_iters: 20, ..Default::default() }
    }

    #[test]
    fn identity_is_stationary_on_equal_pair() {
        let img = scene(24, 24);
        let m = Mask::full(24, 24);
        let (stack, report) = fit(&img, &img, &m, &small_cfg()).unwrap();
        assert!(report.best_loss() <= report.loss_history[0]);
        assert!(report.loss_history[0] < 1e-12);
        let g = analytic_gradients(&identity_stack(4, 4).unwrap(), &img, &img, &m, &small_cfg()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-9));
        assert!(stack.params().iter().zip(identity_stack(4, 4).unwrap().params()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn single_iteration_records_one_loss() {
        let img = scene(16, 16);
        let gt = img.map(|p| [p[0] * 0.9, p[1], p[2]]);
        let cfg = FitConfig { max_iters: 1, ..small_cfg() };
        let (_, report) = fit(&img, &gt, &Mask::full(16, 16), &cfg).unwrap();
        assert_eq!(report.loss_history.len(), 1);
        assert_eq!(report.iterations_run, 1);
    }

    #[test]
    fn fitting_reduces_loss_and_is_deterministic() {
        let img = scene(32, 32);
        let gt = img.map(|p| [p[0] * 0.8 + 0.1, p[1] * 0.9, p[2] * 1.1]);
        let m = Mask::full(32, 32);
        let cfg = FitConfig { max_iters: 40, init_noise: 1e-3, seed: 7, ..small_cfg() };
        let (_, a) = fit(&img, &gt, &m, &cfg).unwrap();
        let (_, b) = fit(&img, &gt, &m, &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert!(a.best_loss() < 0.5 * a.loss_history[0], "{:?}", a.loss_history);
        let best = a.best_losses();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_validation() {
        let img = scene(8, 8);
        let m = Mask::full(8, 8);
        for cfg in [
            FitConfig { grid_w: 0, ..small_cfg() },
            FitConfig { step: 0.0, ..small_cfg() },
            FitConfig { max_iters: 0, ..small_cfg() },
            FitConfig { momentum: 1.0, ..small_cfg() },
        ] {
            assert!(matches!(fit(&img, &img, &m, &cfg), Err(Error::InvalidArgument(_))));
        }
        assert!(fit(&img, &scene(8, 9), &Mask::full(8, 9), &small_cfg()).is_err());
    }

    #[test]
    fn report_json_layout() {
        let r = FitReport { loss_history: vec![1.0, 0.5], final_mse: 0.1, final_psnr: 10.0, iterations_run: 2, wall_time: 0.25 };
        let j = r.to_json();
        assert_eq!(j["iterations"], 2);
        assert_eq!(j["wall_time_s"], 0.25);
        assert_eq!(j["loss_history"][1], 0.5);
    }
}
