//! Analytic gradients against central finite differences.
//!
//! `cargo run --release --example gradient_check [MODE]`

use dccf::filters::identity_stack;
use dccf::losses::{LossMode, LossWeights};
use dccf::optimizer::{finite_diff_probe, relative_error, synth_perturb, Objective, PerturbSpec};
use dccf::scenes::{feathered_mask, photo};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dccf::Result<()> {
    let mode: LossMode = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or_default();
    let gt = photo(32, 32, 1);
    let mask = feathered_mask(32, 32, (16.0, 16.0), (10.0, 9.0), 3.0);
    let composite = synth_perturb(&gt, &mask, PerturbSpec { theta: 0.4, sigma: 0.2, gamma: 1.2 })?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut stack = identity_stack(8, 8)?;
    let params: Vec<f64> = stack.params().iter().map(|p| p + rng.random_range(-0.05..0.05)).collect();
    stack.set_params(&params)?;

    let objective = Objective::new(&composite, &gt, &mask, LossWeights::default(), mode)?;
    let (loss, grad) = objective.loss_and_grad(&stack)?;
    let margins = objective.param_kink_margins(&stack);
    println!("{mode}: loss {:.5e}, {} parameters", loss.total, grad.len());

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i = rng.random_range(0..grad.len());
        let fd = finite_diff_probe(&objective, &stack, i, 1e-4)?;
        let err = relative_error(grad[i], fd, 1e-8);
        let smooth = margins[i] >= 1e-3;
        if smooth {
            worst = worst.max(err);
        }
        println!(
            "{:<18} analytic {:>12.5e}  fd {:>12.5e}  rel {:.1e}{}",
            stack.param_label(i),
            grad[i],
            fd,
            err,
            if smooth { "" } else { "  (near a kink)" }
        );
    }
    println!("worst relative error away from kinks: {worst:.2e}");
    Ok(())
}
