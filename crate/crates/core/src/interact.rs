//! Blending user intentions into fitted filter maps.
//!
//! Each blend is a per-cell convex combination `α·user + (1 − α)·cell` and
//! returns a new map. Hue intentions are given as a rotation angle in
//! degrees; the blended 3x3 part is not re-orthogonalized and the
//! translation column is left alone.

use serde::{Deserialize, Serialize};

use crate::assembly::run_pipeline;
use crate::error::{Error, Result};
use crate::filters::{hue_rotation_matrix, FilterMap, FilterStack, HueFilterMap, SaturationFilterMap, ValueFilterMap};
use crate::image::RgbImage;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(())
}

/// Blends the rotation part of every cell towards a global hue rotation.
pub fn blend_hue(f: &HueFilterMap, theta_degrees: f64, alpha: f64) -> Result<HueFilterMap> {
    check_alpha(alpha)?;
    if !(0.0..=360.0).contains(&theta_degrees) {
        return Err(Error::invalid(format!("theta {theta_degrees} outside [0, 360] degrees")));
    }
    let r = hue_rotation_matrix(theta_degrees.to_radians());
    let mut grid = f.grid().clone();
    for cell in grid.data_mut().chunks_exact_mut(12) {
        for row in 0..3 {
            for col in 0..3 {
                let v = &mut cell[4 * row + col];
                *v = alpha * r[row][col] + (1.0 - alpha) * *v;
            }
        }
    }
    f.with_grid(grid)
}

/// A global value curve chosen by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCurve {
    pub v_min: f64,
    pub phis: Vec<f64>,
}

impl ValueCurve {
    pub fn identity(m: usize) -> Self {
        let mut phis = vec![0.0; m];
        if let Some(first) = phis.first_mut() {
            *first = 1.0;
        }
        Self { v_min: 0.0, phis }
    }
}

/// Blends every cell's curve parameters towards `user`.
pub fn blend_value(f: &ValueFilterMap, user: &ValueCurve, alpha: f64) -> Result<ValueFilterMap> {
    check_alpha(alpha)?;
    if user.phis.len() != f.m() {
        return Err(Error::invalid(format!("curve has {} segments, map has {}", user.phis.len(), f.m())));
    }
    if !user.v_min.is_finite() || user.phis.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("curve parameters must be finite"));
    }
    let mut grid = f.grid().clone();
    let target: Vec<f64> = std::iter::once(user.v_min).chain(user.phis.iter().copied()).collect();
    for cell in grid.data_mut().chunks_exact_mut(target.len()) {
        for (v, t) in cell.iter_mut().zip(&target) {
            *v = alpha * t + (1.0 - alpha) * *v;
        }
    }
    f.with_grid(grid)
}

/// Blends every cell's σ towards `sigma`.
pub fn blend_saturation(f: &SaturationFilterMap, sigma: f64, alpha: f64) -> Result<SaturationFilterMap> {
    check_alpha(alpha)?;
    if !(-1.0..=1.0).contains(&sigma) {
        return Err(Error::invalid(format!("sigma {sigma} outside [-1, 1]")));
    }
    let mut grid = f.grid().clone();
    for v in grid.data_mut() {
        *v = alpha * sigma + (1.0 - alpha) * *v;
    }
    f.with_grid(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HueAdjust {
    /// Degrees.
    pub theta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationAdjust {
    pub sigma: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueAdjust {
    pub v_min: f64,
    pub phis: Vec<f64>,
    pub alpha: f64,
}

/// A set of optional per-channel intentions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hue: Option<HueAdjust>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sat: Option<SaturationAdjust>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<ValueAdjust>,
}

impl Adjustment {
    /// A copy of `stack` with every present intention blended in.
    pub fn apply(&self, stack: &FilterStack) -> Result<FilterStack> {
        let mut out = stack.clone();
        if let Some(h) = self.hue {
            out.hue = blend_hue(&stack.hue, h.theta, h.alpha)?;
        }
        if let Some(s) = self.sat {
            out.sat = blend_saturation(&stack.sat, s.sigma, s.alpha)?;
        }
        if let Some(v) = &self.val {
            let curve = ValueCurve { v_min: v.v_min, phis: v.phis.clone() };
            out.val = blend_value(&stack.val, &curve, v.alpha)?;
        }
        Ok(out)
    }

    pub fn validate(&self, stack: &FilterStack) -> Result<()> {
        self.apply(stack).map(|_| ())
    }
}

/// Runs `stack` with `adjustment` on `image` and returns stage `stage`
/// (1 to 4). The shared rendering path for previews and exports.
pub fn render_adjusted(image: &RgbImage, stack: &FilterStack, adjustment: &Adjustment, stage: usize) -> Result<RgbImage> {
    if !(1..=4).contains(&stage) {
        return Err(Error::invalid(format!("stage {stage} outside 1..=4")));
    }
    let adjusted = adjustment.apply(stack)?;
    let trace = run_pipeline(image, &adjusted)?;
    Ok(match stage {
        1 => trace.i1,
        2 => trace.i2,
        3 => trace.i3,
        _ => trace.i4,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colorspace::rgb_to_hsv;
    use crate::filters::{identity_stack, rotation_affine, IDENTITY_AFFINE};
    use proptest::prelude::*;

    fn fitted_like_stack() -> FilterStack {
        let mut s = identity_stack(3, 2).unwrap();
        s.sat = SaturationFilterMap::uniform(3, 2, 0.4).unwrap();
        s.hue = HueFilterMap::uniform(3, 2, &rotation_affine(0.3)).unwrap();
        let mut g = s.hue.grid().clone();
        g.data_mut()[3] = 0.05;
        s.hue = s.hue.with_grid(g).unwrap();
        s
    }

    #[test]
    fn zero_alpha_leaves_maps_unchanged() {
        let s = fitted_like_stack();
        assert_eq!(blend_hue(&s.hue, 120.0, 0.0).unwrap(), s.hue);
        assert_eq!(blend_saturation(&s.sat, -0.5, 0.0).unwrap(), s.sat);
        let curve = ValueCurve { v_min: 0.2, phis: vec![0.5; 8] };
        assert_eq!(blend_value(&s.val, &curve, 0.0).unwrap(), s.val);
    }

    #[test]
    fn full_alpha_installs_user_intent() {
        let s = fitted_like_stack();
        let h = blend_hue(&s.hue, 120.0, 1.0).unwrap();
        let r = hue_rotation_matrix(120f64.to_radians());
        for cell in h.grid().data().chunks(12) {
            for row in 0..3 {
                for col in 0..3 {
                    assert!((cell[4 * row + col] - r[row][col]).abs() < 1e-12);
                }
            }
        }
        // translation survives
        assert_eq!(h.grid().data()[3], 0.05);
        let sat = blend_saturation(&s.sat, 0.0, 1.0).unwrap();
        assert!(sat.grid().data().iter().all(|v| *v == 0.0));
        let curve = ValueCurve { v_min: 0.1, phis: vec![0.9, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0] };
        let v = blend_value(&s.val, &curve, 1.0).unwrap();
        for cell in v.grid().data().chunks(9) {
            assert_eq!(cell[0], 0.1);
            assert_eq!(&cell[1..], curve.phis.as_slice());
        }
    }

    #[test]
    fn half_blends() {
        let ident = HueFilterMap::uniform(2, 2, &IDENTITY_AFFINE).unwrap();
        let h = blend_hue(&ident, 0.0, 0.5).unwrap();
        assert!(h.grid().data().iter().zip(ident.grid().data()).all(|(a, b)| (a - b).abs() < 1e-15));
        let sat = SaturationFilterMap::uniform(2, 2, 0.4).unwrap();
        let out = blend_saturation(&sat, -0.2, 0.5).unwrap();
        assert!(out.grid().data().iter().all(|v| (v - 0.1).abs() < 1e-15));
        let val = ValueFilterMap::identity(2, 2, 8).unwrap();
        let out = blend_value(&val, &ValueCurve::identity(8), 0.37).unwrap();
        assert_eq!(out, val);
    }

    #[test]
    fn range_checks() {
        let s = fitted_like_stack();
        assert!(blend_hue(&s.hue, 361.0, 0.5).is_err());
        assert!(blend_hue(&s.hue, -1.0, 0.5).is_err());
        assert!(blend_hue(&s.hue, 10.0, 2.0).is_err());
        assert!(blend_saturation(&s.sat, 1.5, 0.5).is_err());
        assert!(blend_saturation(&s.sat, 0.5, -0.1).is_err());
        assert!(blend_value(&s.val, &ValueCurve::identity(4), 0.5).is_err());
        assert!(render_adjusted(&RgbImage::filled(2, 2, [0.5; 3]), &s, &Adjustment::default(), 5).is_err());
    }

    #[test]
    fn hue_blend_only_moves_hue_of_i3() {
        let img = RgbImage::from_fn(24, 24, |x, y| [0.2 + 0.03 * x as f64, 0.8 - 0.02 * y as f64, 0.35]);
        let s = fitted_like_stack();
        let base = run_pipeline(&img, &s).unwrap();
        let adj = Adjustment { hue: Some(HueAdjust { theta: 200.0, alpha: 0.7 }), ..Default::default() };
        let blended = run_pipeline(&img, &adj.apply(&s).unwrap()).unwrap();
        let (a, b) = (rgb_to_hsv(&base.i3), rgb_to_hsv(&blended.i3));
        for (x, y) in a.v.data().iter().zip(b.v.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        for (x, y) in a.s.data().iter().zip(b.s.data()) {
            assert!((x - y).abs() < 1e-6);
        }
        assert_ne!(a.h, b.h);
    }

    #[test]
    fn adjustment_json_shape() {
        let json = r#"{"hue":{"theta":120,"alpha":1},"val":{"v_min":0,"phis":[1,0,0,0,0,0,0,0],"alpha":0.5}}"#;
        let adj: Adjustment = serde_json::from_str(json).unwrap();
        assert_eq!(adj.hue, Some(HueAdjust { theta: 120.0, alpha: 1.0 }));
        assert!(adj.sat.is_none());
        assert_eq!(adj.val.unwrap().phis.len(), 8);
    }

    proptest! {
        #[test]
        fn blends_are_convex(cell in -2.0f64..2.0, user in -1.0f64..1.0, alpha in 0.0f64..=1.0) {
            let sat = SaturationFilterMap::uniform(1, 1, cell).unwrap();
            let out = blend_saturation(&sat, user, alpha).unwrap().grid().data()[0];
            prop_assert!(out >= cell.min(user) - 1e-12 && out <= cell.max(user) + 1e-12);
        }
    }
}
