//! The four per-pixel color filters and the grids that hold their parameters.
//!
//! * value: `clamp01(V_min + Σ φ_i · max(x - (i-1)/m, 0))` on the V channel
//! * saturation: `clamp01(x + (x - C_med) · clip(σ))` per RGB channel
//! * hue: `clamp01(R·x + t)` with a 3x4 matrix `[R | t]`
//! * attentive: `clamp01(α·I + (1 - α)·(W·I₃ + t_w))` with `α = logistic(a_raw)`

use std::fmt;
use std::str::FromStr;

use crate::colorspace::saturate_pre;
use crate::diff::logistic;
use crate::error::{Error, Result};
use crate::image::{clamp01, PlaneImage, Rgb, RgbImage};

/// Number of ReLU segments in the value curve.
pub const DEFAULT_CURVE_SEGMENTS: usize = 8;

/// Logit magnitude used to represent an attention weight of exactly 0 or 1;
/// `logistic(40)` rounds to 1.0 in f64.
pub const ATTENTION_LOGIT_LIMIT: f64 = 40.0;

pub type Mat3x4 = [f64; 12];

pub const IDENTITY_AFFINE: Mat3x4 = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];

/// Dense grid of parameter vectors, cell-major (`channels` values per cell).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ParamGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid("grid dimensions and channel count must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "grid {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid parameters must be finite"));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Every cell holds `cell`.
    pub fn uniform(width: usize, height: usize, cell: &[f64]) -> Result<Self> {
        let data = cell.iter().copied().cycle().take(width * height * cell.len()).collect();
        Self::new(width, height, cell.len(), data)
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// One channel as a plane.
    pub fn channel_plane(&self, c: usize) -> PlaneImage {
        PlaneImage::from_fn(self.width, self.height, |x, y| self.cell(x, y)[c])
    }
}

/// Shared behaviour of the four filter-map variants.
pub trait FilterMap: Clone {
    fn grid(&self) -> &ParamGrid;
    fn grid_mut(&mut self) -> &mut ParamGrid;
    /// Same filter kind, different parameters (e.g. after resampling).
    fn with_grid(&self, grid: ParamGrid) -> Result<Self>;
    fn channel_name(&self, c: usize) -> String;

    fn dims(&self) -> (usize, usize) {
        self.grid().dims()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFilterMap {
    grid: ParamGrid,
}

impl ValueFilterMap {
    /// Cells hold `[V_min, φ_1 .. φ_m]`.
    pub fn new(grid: ParamGrid) -> Result<Self> {
        if grid.channels() < 2 {
            return Err(Error::invalid("value map needs V_min and at least one slope"));
        }
        Ok(Self { grid })
    }

    pub fn identity(width: usize, height: usize, m: usize) -> Result<Self> {
        Self::uniform(width, height, 0.0, &identity_curve(m)?)
    }

    pub fn uniform(width: usize, height: usize, v_min: f64, phis: &[f64]) -> Result<Self> {
        let mut cell = vec![v_min];
        cell.extend_from_slice(phis);
        Self::new(ParamGrid::uniform(width, height, &cell)?)
    }

    /// Segment count.
    pub fn m(&self) -> usize {
        self.grid.channels() - 1
    }
}

/// Slopes of the identity curve: `φ = (1, 0, …, 0)`.
pub fn identity_curve(m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::invalid("curve needs at least one segment"));
    }
    let mut phis = vec![0.0; m];
    phis[0] = 1.0;
    Ok(phis)
}

impl FilterMap for ValueFilterMap {
    fn grid(&self) -> &ParamGrid {
        &self.grid
    }
    fn grid_mut(&mut self) -> &mut ParamGrid {
        &mut self.grid
    }
    fn with_grid(&self, grid: ParamGrid) -> Result<Self> {
        Self::new(grid)
    }
    fn channel_name(&self, c: usize) -> String {
        if c == 0 {
            "v_min".into()
        } else {
            format!("phi{c}")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFilterMap {
    grid: ParamGrid,
}

impl SaturationFilterMap {
    pub fn new(grid: ParamGrid) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(Error::invalid("saturation map has exactly one channel"));
        }
        Ok(Self { grid })
    }

    pub fn uniform(width: usize, height: usize, sigma: f64) -> Result<Self> {
        Self::new(ParamGrid::uniform(width, height, &[sigma])?)
    }
}

impl FilterMap for SaturationFilterMap {
    fn grid(&self) -> &ParamGrid {
        &self.grid
    }
    fn grid_mut(&mut self) -> &mut ParamGrid {
        &mut self.grid
    }
    fn with_grid(&self, grid: ParamGrid) -> Result<Self> {
        Self::new(grid)
    }
    fn channel_name(&self, _: usize) -> String {
        "sigma".into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HueFilterMap {
    grid: ParamGrid,
}

impl HueFilterMap {
    /// Cells hold a row-major 3x4 matrix `[R | t]`.
    pub fn new(grid: ParamGrid) -> Result<Self> {
        if grid.channels() != 12 {
            return Err(Error::invalid("hue map has twelve channels"));
        }
        Ok(Self { grid })
    }

    pub fn uniform(width: usize, height: usize, delta: &Mat3x4) -> Result<Self> {
        Self::new(ParamGrid::uniform(width, height, delta)?)
    }
}

impl FilterMap for HueFilterMap {
    fn grid(&self) -> &ParamGrid {
        &self.grid
    }
    fn grid_mut(&mut self) -> &mut ParamGrid {
        &mut self.grid
    }
    fn with_grid(&self, grid: ParamGrid) -> Result<Self> {
        Self::new(grid)
    }
    fn channel_name(&self, c: usize) -> String {
        format!("delta{}{}", c / 4 + 1, c % 4 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentiveFilterMap {
    grid: ParamGrid,
}

impl AttentiveFilterMap {
    /// Cells hold `a_raw` followed by a row-major 3x4 `W_ref`.
    pub fn new(grid: ParamGrid) -> Result<Self> {
        if grid.channels() != 13 {
            return Err(Error::invalid("attentive map has thirteen channels"));
        }
        Ok(Self { grid })
    }

    /// Uniform map with the given blend weight; 0 and 1 are represented
    /// through [`ATTENTION_LOGIT_LIMIT`].
    pub fn uniform(width: usize, height: usize, alpha: f64, w_ref: &Mat3x4) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        let mut cell = vec![alpha_to_logit(alpha)];
        cell.extend_from_slice(w_ref);
        Self::new(ParamGrid::uniform(width, height, &cell)?)
    }

    pub fn alpha(&self, x: usize, y: usize) -> f64 {
        logistic(self.grid.cell(x, y)[0])
    }
}

pub fn alpha_to_logit(alpha: f64) -> f64 {
    (alpha / (1.0 - alpha))
        .ln()
        .clamp(-ATTENTION_LOGIT_LIMIT, ATTENTION_LOGIT_LIMIT)
}

impl FilterMap for AttentiveFilterMap {
    fn grid(&self) -> &ParamGrid {
        &self.grid
    }
    fn grid_mut(&mut self) -> &mut ParamGrid {
        &mut self.grid
    }
    fn with_grid(&self, grid: ParamGrid) -> Result<Self> {
        Self::new(grid)
    }
    fn channel_name(&self, c: usize) -> String {
        if c == 0 {
            "a_raw".into()
        } else {
            format!("w_ref{}{}", (c - 1) / 4 + 1, (c - 1) % 4 + 1)
        }
    }
}

/// One HSV channel, naming a chromatic stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Value,
    Saturation,
    Hue,
}

impl Channel {
    pub fn letter(self) -> char {
        match self {
            Channel::Value => 'V',
            Channel::Saturation => 'S',
            Channel::Hue => 'H',
        }
    }

    /// Index of the channel in an `[h, s, v]` triple.
    pub(crate) fn hsv_index(self) -> usize {
        match self {
            Channel::Hue => 0,
            Channel::Saturation => 1,
            Channel::Value => 2,
        }
    }
}

/// Execution order of the three chromatic stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageOrder([Channel; 3]);

impl StageOrder {
    pub const VSH: StageOrder = StageOrder([Channel::Value, Channel::Saturation, Channel::Hue]);

    pub fn new(stages: [Channel; 3]) -> Result<Self> {
        let distinct = stages[0] != stages[1] && stages[1] != stages[2] && stages[0] != stages[2];
        if !distinct {
            return Err(Error::invalid("stage order must be a permutation of V, S, H"));
        }
        Ok(Self(stages))
    }

    pub fn stages(&self) -> [Channel; 3] {
        self.0
    }

    /// Position (0-based) at which `channel` runs.
    pub fn position(&self, channel: Channel) -> usize {
        self.0.iter().position(|c| *c == channel).expect("permutation")
    }

    /// All six orders.
    pub fn all() -> [StageOrder; 6] {
        use Channel::*;
        [
            StageOrder([Value, Saturation, Hue]),
            StageOrder([Hue, Value, Saturation]),
            StageOrder([Saturation, Hue, Value]),
            StageOrder([Value, Hue, Saturation]),
            StageOrder([Hue, Saturation, Value]),
            StageOrder([Saturation, Value, Hue]),
        ]
    }
}

impl Default for StageOrder {
    fn default() -> Self {
        Self::VSH
    }
}

impl fmt::Display for StageOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.0 {
            write!(f, "{}", c.letter())?;
        }
        Ok(())
    }
}

impl FromStr for StageOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.trim().to_ascii_uppercase().chars().collect();
        if letters.len() != 3 {
            return Err(Error::invalid(format!("stage order {s:?} must have three letters")));
        }
        let mut stages = [Channel::Value; 3];
        for (slot, l) in stages.iter_mut().zip(letters) {
            *slot = match l {
                'V' => Channel::Value,
                'S' => Channel::Saturation,
                'H' => Channel::Hue,
                other => return Err(Error::invalid(format!("unknown stage {other:?}"))),
            };
        }
        Self::new(stages)
    }
}

/// The complete filter set and its stage order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStack {
    pub val: ValueFilterMap,
    pub sat: SaturationFilterMap,
    pub hue: HueFilterMap,
    pub attn: AttentiveFilterMap,
    pub order: StageOrder,
}

impl FilterStack {
    pub fn new(
        val: ValueFilterMap,
        sat: SaturationFilterMap,
        hue: HueFilterMap,
        attn: AttentiveFilterMap,
        order: StageOrder,
    ) -> Result<Self> {
        let dims = val.dims();
        Error::check_dims(dims, sat.dims())?;
        Error::check_dims(dims, hue.dims())?;
        Error::check_dims(dims, attn.dims())?;
        Ok(Self { val, sat, hue, attn, order })
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.val.dims()
    }

    pub fn m(&self) -> usize {
        self.val.m()
    }

    /// Parameters per grid cell across all four maps.
    pub fn cell_params(&self) -> usize {
        self.m() + 1 + 1 + 12 + 13
    }

    pub fn param_count(&self) -> usize {
        let (w, h) = self.grid_dims();
        w * h * self.cell_params()
    }

    fn grids(&self) -> [&ParamGrid; 4] {
        [self.val.grid(), self.sat.grid(), self.hue.grid(), self.attn.grid()]
    }

    fn grids_mut(&mut self) -> [&mut ParamGrid; 4] {
        [&mut self.val.grid, &mut self.sat.grid, &mut self.hue.grid, &mut self.attn.grid]
    }

    /// All parameters, map by map (value, saturation, hue, attentive), each cell-major.
    pub fn params(&self) -> Vec<f64> {
        self.grids().iter().flat_map(|g| g.data().iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for g in self.grids_mut() {
            let n = g.data.len();
            g.data.copy_from_slice(&params[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Human-readable name of flat parameter `index`, e.g. `hue.delta12[3,4]`.
    pub fn param_label(&self, index: usize) -> String {
        let mut offset = 0;
        let names = ["val", "sat", "hue", "attn"];
        for (k, g) in self.grids().iter().enumerate() {
            let n = g.data.len();
            if index < offset + n {
                let local = index - offset;
                let cell = local / g.channels;
                let c = local % g.channels;
                let (x, y) = (cell % g.width, cell / g.width);
                let channel = match k {
                    0 => self.val.channel_name(c),
                    1 => self.sat.channel_name(c),
                    2 => self.hue.channel_name(c),
                    _ => self.attn.channel_name(c),
                };
                return format!("{}.{}[{},{}]", names[k], channel, x, y);
            }
            offset += n;
        }
        format!("out-of-range parameter {index}")
    }

    /// Cell coordinates of flat parameter `index`.
    pub fn param_cell(&self, index: usize) -> Option<(usize, usize)> {
        let mut offset = 0;
        for g in self.grids() {
            let n = g.data.len();
            if index < offset + n {
                let cell = (index - offset) / g.channels;
                return Some((cell % g.width, cell / g.width));
            }
            offset += n;
        }
        None
    }
}

/// The stack that leaves every image unchanged: identity curve, σ = 0,
/// `Δ = [I | 0]`, and attention with α = 0, `W_ref = [I | 0]`.
pub fn identity_stack(grid_w: usize, grid_h: usize) -> Result<FilterStack> {
    identity_stack_with(grid_w, grid_h, DEFAULT_CURVE_SEGMENTS, StageOrder::VSH)
}

pub fn identity_stack_with(
    grid_w: usize,
    grid_h: usize,
    m: usize,
    order: StageOrder,
) -> Result<FilterStack> {
    if grid_w == 0 || grid_h == 0 {
        return Err(Error::invalid("grid dimensions must be at least 1x1"));
    }
    FilterStack::new(
        ValueFilterMap::identity(grid_w, grid_h, m)?,
        SaturationFilterMap::uniform(grid_w, grid_h, 0.0)?,
        HueFilterMap::uniform(grid_w, grid_h, &IDENTITY_AFFINE)?,
        AttentiveFilterMap::uniform(grid_w, grid_h, 0.0, &IDENTITY_AFFINE)?,
        order,
    )
}

/// Rotation by `theta` radians about the gray axis `(1,1,1)/√3`.
pub fn hue_rotation_matrix(theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let a = (1.0 - c) / 3.0;
    let b = s / 3f64.sqrt();
    [
        [c + a, a - b, a + b],
        [a + b, c + a, a - b],
        [a - b, a + b, c + a],
    ]
}

/// `[R | 0]` as a hue-filter cell.
pub fn rotation_affine(theta: f64) -> Mat3x4 {
    let r = hue_rotation_matrix(theta);
    [
        r[0][0], r[0][1], r[0][2], 0.0, r[1][0], r[1][1], r[1][2], 0.0, r[2][0], r[2][1], r[2][2], 0.0,
    ]
}

/// Value curve before clamping.
#[inline]
pub fn value_curve_pre(x: f64, v_min: f64, phis: &[f64]) -> f64 {
    let m = phis.len() as f64;
    let mut out = v_min;
    for (i, phi) in phis.iter().enumerate() {
        out += phi * (x - i as f64 / m).max(0.0);
    }
    out
}

#[inline]
pub fn affine(delta: &[f64], x: Rgb) -> Rgb {
    [
        delta[0] * x[0] + delta[1] * x[1] + delta[2] * x[2] + delta[3],
        delta[4] * x[0] + delta[5] * x[1] + delta[6] * x[2] + delta[7],
        delta[8] * x[0] + delta[9] * x[1] + delta[10] * x[2] + delta[11],
    ]
}

#[inline]
pub fn clip_sigma(sigma: f64) -> f64 {
    sigma.clamp(-1.0, 1.0)
}

#[inline]
pub fn saturate_pixel(x: Rgb, sigma: f64) -> Rgb {
    let (pre, ..) = saturate_pre(x, clip_sigma(sigma));
    pre.map(clamp01)
}

#[inline]
pub fn attentive_pixel(input: Rgb, i3: Rgb, a_raw: f64, w_ref: &[f64]) -> Rgb {
    let alpha = logistic(a_raw);
    let refined = affine(w_ref, i3);
    [0, 1, 2].map(|c| clamp01(input[c] * alpha + refined[c] * (1.0 - alpha)))
}

fn check_map<M: FilterMap>(dims: (usize, usize), f: &M) -> Result<()> {
    Error::check_dims(dims, f.dims())
}

/// Applies a value map already at the plane's resolution.
pub fn apply_value_curve(v: &PlaneImage, f: &ValueFilterMap) -> Result<PlaneImage> {
    check_map(v.dims(), f)?;
    let g = f.grid();
    let (w, h) = v.dims();
    Ok(PlaneImage::from_fn(w, h, |x, y| {
        let cell = g.cell(x, y);
        clamp01(value_curve_pre(v.get(x, y), cell[0], &cell[1..]))
    }))
}

pub fn apply_saturation(img: &RgbImage, f: &SaturationFilterMap) -> Result<RgbImage> {
    check_map(img.dims(), f)?;
    let g = f.grid();
    Ok(RgbImage::from_fn(img.width(), img.height(), |x, y| {
        saturate_pixel(img.pixel(x, y), g.cell(x, y)[0])
    }))
}

pub fn apply_hue_affine(img: &RgbImage, f: &HueFilterMap) -> Result<RgbImage> {
    check_map(img.dims(), f)?;
    let g = f.grid();
    Ok(RgbImage::from_fn(img.width(), img.height(), |x, y| {
        affine(g.cell(x, y), img.pixel(x, y))
    }))
}

pub fn apply_attentive(input: &RgbImage, i3: &RgbImage, f: &AttentiveFilterMap) -> Result<RgbImage> {
    Error::check_dims(input.dims(), i3.dims())?;
    check_map(input.dims(), f)?;
    let g = f.grid();
    Ok(RgbImage::from_fn(input.width(), input.height(), |x, y| {
        let cell = g.cell(x, y);
        attentive_pixel(input.pixel(x, y), i3.pixel(x, y), cell[0], &cell[1..])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    #[test]
    fn identity_curve_passes_values_through() {
        let phis = identity_curve(8).unwrap();
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!(close(value_curve_pre(x, 0.0, &phis), x, 1e-15));
        }
    }

    #[test]
    fn curve_at_zero_is_clamped_floor() {
        let phis = [0.3, -2.0, 5.0];
        let v = PlaneImage::filled(1, 1, 0.0);
        for v_min in [-0.2, 0.4, 1.3] {
            let f = ValueFilterMap::uniform(1, 1, v_min, &phis).unwrap();
            assert_eq!(apply_value_curve(&v, &f).unwrap().get(0, 0), v_min.clamp(0.0, 1.0));
        }
    }

    #[test]
    fn curve_hand_value() {
        let mut phis = vec![0.0; 8];
        phis[0] = 0.5;
        phis[1] = 0.5;
        // 0.1 + 0.5·0.5 + 0.5·(0.5 - 1/8)
        assert!(close(value_curve_pre(0.5, 0.1, &phis), 0.5375, 1e-15));
    }

    #[test]
    fn saturation_examples() {
        let img = RgbImage::filled(1, 1, [0.8, 0.4, 0.2]);
        let zero = SaturationFilterMap::uniform(1, 1, 0.0).unwrap();
        assert_eq!(apply_saturation(&img, &zero).unwrap(), img);
        let one = SaturationFilterMap::uniform(1, 1, 1.0).unwrap();
        let out = apply_saturation(&img, &one).unwrap().pixel(0, 0);
        for (a, b) in out.iter().zip([1.0, 0.3, 0.0]) {
            assert!(close(*a, b, 1e-12));
        }
        let gray = RgbImage::filled(1, 1, [0.37; 3]);
        for s in [-1.0, -0.3, 0.7, 3.0] {
            let f = SaturationFilterMap::uniform(1, 1, s).unwrap();
            assert_eq!(apply_saturation(&gray, &f).unwrap(), gray);
        }
    }

    #[test]
    fn affine_examples() {
        let img = RgbImage::from_fn(3, 2, |x, y| [x as f64 / 3.0, y as f64 / 2.0, 0.25]);
        let id = HueFilterMap::uniform(3, 2, &IDENTITY_AFFINE).unwrap();
        assert_eq!(apply_hue_affine(&img, &id).unwrap(), img);
        let flat = HueFilterMap::uniform(3, 2, &[0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0, 0.3]).unwrap();
        assert!(apply_hue_affine(&img, &flat).unwrap().pixels().all(|p| p == [0.3; 3]));
        let red = RgbImage::filled(2, 2, [1.0, 0.0, 0.0]);
        let rot = HueFilterMap::uniform(2, 2, &rotation_affine(2.0 * std::f64::consts::PI / 3.0)).unwrap();
        for p in apply_hue_affine(&red, &rot).unwrap().pixels() {
            assert!(close(p[0], 0.0, 1e-12) && close(p[1], 1.0, 1e-12) && close(p[2], 0.0, 1e-12));
        }
    }

    #[test]
    fn attentive_examples() {
        let input = RgbImage::filled(1, 1, [1.0, 0.0, 0.0]);
        let i3 = RgbImage::filled(1, 1, [0.0, 1.0, 0.0]);
        let keep = AttentiveFilterMap::uniform(1, 1, 1.0, &IDENTITY_AFFINE).unwrap();
        assert_eq!(apply_attentive(&input, &i3, &keep).unwrap(), input);
        let take = AttentiveFilterMap::uniform(1, 1, 0.0, &IDENTITY_AFFINE).unwrap();
        let out = apply_attentive(&input, &i3, &take).unwrap().pixel(0, 0);
        assert!(out.iter().zip(i3.pixel(0, 0)).all(|(a, b)| close(*a, b, 1e-15)));
        let half = AttentiveFilterMap::uniform(1, 1, 0.5, &IDENTITY_AFFINE).unwrap();
        let out = apply_attentive(&input, &i3, &half).unwrap().pixel(0, 0);
        assert!(out.iter().zip([0.5, 0.5, 0.0]).all(|(a, b)| close(*a, b, 1e-15)));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let img = RgbImage::filled(4, 4, [0.5; 3]);
        let f = SaturationFilterMap::uniform(2, 2, 0.0).unwrap();
        assert!(matches!(apply_saturation(&img, &f), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rotation_permutes_primaries() {
        let r = hue_rotation_matrix(2.0 * std::f64::consts::PI / 3.0);
        let apply = |v: [f64; 3]| [0, 1, 2].map(|i| (0..3).map(|k| r[i][k] * v[k]).sum::<f64>());
        let cases = [([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]), ([0.0, 1.0, 0.0], [0.0, 0.0, 1.0]), ([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])];
        for (from, to) in cases {
            let got = apply(from);
            assert!(got.iter().zip(to).all(|(a, b)| close(*a, b, 1e-9)));
        }
        let id = hue_rotation_matrix(0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(id[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn stage_order_parsing() {
        assert_eq!("vsh".parse::<StageOrder>().unwrap(), StageOrder::VSH);
        assert_eq!("HVS".parse::<StageOrder>().unwrap().to_string(), "HVS");
        assert!("VVS".parse::<StageOrder>().is_err());
        assert!("VS".parse::<StageOrder>().is_err());
    }

    #[test]
    fn identity_stack_accepts_single_cell() {
        let s = identity_stack(1, 1).unwrap();
        assert_eq!(s.param_count(), 35);
        assert!(identity_stack(0, 3).is_err());
    }

    #[test]
    fn param_roundtrip_and_labels() {
        let mut s = identity_stack(2, 3).unwrap();
        let mut p = s.params();
        p[7] = 0.25;
        s.set_params(&p).unwrap();
        assert_eq!(s.params(), p);
        assert_eq!(s.param_label(0), "val.v_min[0,0]");
        let hue_start = 6 * 9 + 6;
        assert_eq!(s.param_label(hue_start + 12 + 3), "hue.delta14[1,0]");
        assert_eq!(s.param_cell(hue_start + 12 + 3), Some((1, 0)));
    }

    proptest! {
        #[test]
        fn rotation_is_orthogonal_and_fixes_gray(theta in -10.0f64..10.0, g in 0.0f64..1.0) {
            let r = hue_rotation_matrix(theta);
            let mut rt = [[0.0; 3]; 3];
            for i in 0..3 { for j in 0..3 { rt[i][j] = r[j][i]; } }
            let p = matmul(&rt, &r);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!(close(p[i][j], want, 1e-9));
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
                - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            prop_assert!(close(det, 1.0, 1e-9));
            for row in r {
                prop_assert!(close(row.iter().sum::<f64>() * g, g, 1e-9));
            }
        }

        #[test]
        fn rotation_composes(a in -7.0f64..7.0, b in -7.0f64..7.0) {
            let ab = matmul(&hue_rotation_matrix(a), &hue_rotation_matrix(b));
            let sum = hue_rotation_matrix(a + b);
            for i in 0..3 { for j in 0..3 { prop_assert!(close(ab[i][j], sum[i][j], 1e-9)); } }
        }

        #[test]
        fn curve_monotone_for_nonnegative_slopes(
            v_min in -0.5f64..0.5,
            phis in proptest::collection::vec(0.0f64..2.0, 8),
        ) {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=100 {
                let y = value_curve_pre(i as f64 / 100.0, v_min, &phis).clamp(0.0, 1.0);
                prop_assert!(y >= prev);
                prev = y;
            }
        }

        #[test]
        fn saturation_preserves_median_when_interior(
            r in 0.0f64..1.0, g in 0.0f64..1.0, b in 0.0f64..1.0, sigma in -1.0f64..1.0,
        ) {
            let x = [r, g, b];
            let (pre, med, ..) = saturate_pre(x, sigma);
            prop_assume!(pre.iter().all(|v| (0.0..=1.0).contains(v)));
            let out = saturate_pixel(x, sigma);
            let hi = out.iter().copied().fold(f64::MIN, f64::max);
            let lo = out.iter().copied().fold(f64::MAX, f64::min);
            prop_assert!(close(0.5 * (hi + lo), med, 1e-12));
        }
    }
}
