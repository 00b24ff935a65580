//! The objective's terms for one composite under each loss mode.
//!
//! `cargo run --example loss_terms`

use dccf::filters::identity_stack;
use dccf::losses::{fg_mse, LossMode, LossWeights};
use dccf::optimizer::{synth_perturb, Objective, PerturbSpec};
use dccf::scenes::{feathered_mask, photo};

fn main() -> dccf::Result<()> {
    let gt = photo(192, 192, 5);
    let mask = feathered_mask(192, 192, (96.0, 100.0), (60.0, 50.0), 10.0);
    let composite = synth_perturb(&gt, &mask, PerturbSpec { theta: 0.5, sigma: 0.3, gamma: 1.3 })?;
    println!("foreground MSE of the raw composite: {:.4e}", fg_mse(&composite, &gt, &mask)?);

    let stack = identity_stack(16, 16)?;
    println!("{:<9} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "mode", "rgb_low", "rgb_high", "val", "sat", "hue", "total");
    for mode in [LossMode::Smooth, LossMode::Standard, LossMode::RgbOnly] {
        let objective = Objective::new(&composite, &gt, &mask, LossWeights::default(), mode)?;
        let l = objective.loss(&stack)?;
        println!(
            "{:<9} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}",
            mode.name(),
            l.rgb_low,
            l.rgb_high,
            l.val,
            l.sat,
            l.hue,
            l.total
        );
    }
    Ok(())
}
