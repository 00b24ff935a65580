//! Deep color curve filters for image harmonization.
//!
//! A [`FilterStack`] holds four low-resolution parameter grids (value curve,
//! saturation, hue affine, attentive refinement). The stack is fitted at low
//! resolution against a target, then bilinearly upsampled and applied to the
//! full-resolution composite with [`run_pipeline`].

pub mod assembly;
pub mod colorspace;
mod diff;
pub mod error;
pub mod filters;
pub mod image;
pub mod interact;
pub mod io;
pub mod losses;
pub mod optimizer;
pub mod scenes;

pub use assembly::{assemble_stage, run_pipeline, upsample_filter_map, PipelineTrace};
pub use colorspace::{hsv_to_rgb, rgb_to_hsv, HsvImage};
pub use error::{Error, Result};
pub use filters::{
    identity_stack, AttentiveFilterMap, Channel, FilterMap, FilterStack, HueFilterMap, ParamGrid,
    SaturationFilterMap, StageOrder, ValueFilterMap,
};
pub use image::{mse, psnr, Mask, PlaneImage, Rgb, RgbImage};
pub use interact::{render_adjusted, Adjustment, HueAdjust, SaturationAdjust, ValueAdjust, ValueCurve};
pub use io::{load_image, load_mask, load_stack, save_image, save_stack};
pub use losses::{fg_mse, LossMode, LossWeights};
pub use optimizer::{fit, fit_with, synth_perturb, FitConfig, FitReport, PerturbSpec};
