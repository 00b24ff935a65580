//! Dense float image buffers and the resampling kernels shared by the
//! pipeline (bilinear, cell-centred) and the loss streams (area average).

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// Three-channel image, row-major, channels interleaved, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::invalid(format!(
                "expected {} samples for a {}x{} rgb image, got {}",
                width * height * 3,
                width,
                height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image from a per-pixel closure; samples are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| clamp01(*v)));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: Rgb) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
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

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.at(y * self.width + x)
    }

    /// Pixel by linear index.
    #[inline]
    pub fn at(&self, i: usize) -> Rgb {
        let p = &self.data[i * 3..i * 3 + 3];
        [p[0], p[1], p[2]]
    }

    #[inline]
    pub(crate) fn set_at(&mut self, i: usize, rgb: Rgb) {
        self.data[i * 3..i * 3 + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = Rgb> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Per-pixel map with clamping to `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(Rgb) -> Rgb) -> Self {
        let mut out = self.clone();
        for (dst, src) in out.data.chunks_exact_mut(3).zip(self.data.chunks_exact(3)) {
            let v = f([src[0], src[1], src[2]]);
            for c in 0..3 {
                dst[c] = clamp01(v[c]);
            }
        }
        out
    }

    /// Channel mean, one plane.
    pub fn channel_mean(&self) -> PlaneImage {
        PlaneImage {
            width: self.width,
            height: self.height,
            data: self.pixels().map(|p| (p[0] + p[1] + p[2]) / 3.0).collect(),
        }
    }

    pub fn resize_area(&self, width: usize, height: usize) -> Self {
        let data = resample(&self.data, 3, self.dims(), (width, height), area_taps);
        Self::from_clamped(width, height, data)
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let data = resample(&self.data, 3, self.dims(), (width, height), bilinear_taps);
        Self::from_clamped(width, height, data)
    }

    fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self { width, height, data }
    }
}

/// Single-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PlaneImage {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("plane dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} samples for a {}x{} plane, got {}",
                width * height,
                width,
                height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("plane contains non-finite samples"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Anisotropic total variation (sum of absolute neighbour differences).
    pub fn total_variation(&self) -> f64 {
        let (w, h) = self.dims();
        let mut tv = 0.0;
        for y in 0..h {
            for x in 0..w {
                let v = self.get(x, y);
                if x + 1 < w {
                    tv += (self.get(x + 1, y) - v).abs();
                }
                if y + 1 < h {
                    tv += (self.get(x, y + 1) - v).abs();
                }
            }
        }
        tv
    }

    pub fn resize_area(&self, width: usize, height: usize) -> Self {
        let data = resample(&self.data, 1, self.dims(), (width, height), area_taps);
        Self { width, height, data }
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let data = resample(&self.data, 1, self.dims(), (width, height), bilinear_taps);
        Self { width, height, data }
    }
}

/// Foreground mask; hard masks hold `{0, 1}`, soft masks anything in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask(PlaneImage);

impl Mask {
    pub fn new(plane: PlaneImage) -> Result<Self> {
        if plane.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("mask values must lie in [0, 1]"));
        }
        Ok(Self(plane))
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self(PlaneImage::filled(width, height, 1.0))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(PlaneImage::from_fn(width, height, |x, y| clamp01(f(x, y))))
    }

    pub fn plane(&self) -> &PlaneImage {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.0.data[i]
    }

    /// Sum of mask values.
    pub fn area(&self) -> f64 {
        self.0.data.iter().sum()
    }

    pub fn resize_area(&self, width: usize, height: usize) -> Self {
        let mut plane = self.0.resize_area(width, height);
        plane.data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self(plane)
    }

    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        let mut plane = self.0.resize_bilinear(width, height);
        plane.data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self(plane)
    }
}

#[inline]
pub fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    Error::check_dims(a.dims(), b.dims())?;
    let sse: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sse / a.data.len() as f64)
}

/// Largest PSNR ever reported; identical images would otherwise give infinity.
pub const PSNR_CAP_DB: f64 = 100.0;

/// PSNR in dB for unit-peak images, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    (-10.0 * mse.log10()).min(PSNR_CAP_DB)
}

/// Largest dimensions with the same aspect ratio whose longer side is at most `max_side`.
pub fn fit_within(dims: (usize, usize), max_side: usize) -> (usize, usize) {
    let (w, h) = dims;
    let side = w.max(h);
    if side <= max_side {
        return dims;
    }
    let scale = max_side as f64 / side as f64;
    let rw = ((w as f64 * scale).round() as usize).clamp(1, max_side);
    let rh = ((h as f64 * scale).round() as usize).clamp(1, max_side);
    (rw, rh)
}

/// Interpolation taps for one output coordinate: `(source index, weight)` pairs.
pub(crate) type Taps = Vec<Vec<(usize, f64)>>;

/// Bilinear taps with cell-centre alignment and clamp-to-edge.
pub(crate) fn bilinear_taps(src: usize, dst: usize) -> Taps {
    (0..dst)
        .map(|i| {
            let (i0, i1, f) = bilinear_coord(src, dst, i);
            if i0 == i1 || f == 0.0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - f), (i1, f)]
            }
        })
        .collect()
}

/// Source cells and blend factor for output index `i` when mapping `src` cells onto `dst`.
#[inline]
pub(crate) fn bilinear_coord(src: usize, dst: usize, i: usize) -> (usize, usize, f64) {
    let pos = (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5;
    let pos = pos.clamp(0.0, (src - 1) as f64);
    let i0 = pos.floor() as usize;
    let i1 = (i0 + 1).min(src - 1);
    (i0, i1, pos - i0 as f64)
}

/// Exact box-overlap weights (area averaging).
pub(crate) fn area_taps(src: usize, dst: usize) -> Taps {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * scale;
            let hi = (i + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let mut taps = Vec::with_capacity(last - first);
            for s in first..last {
                let overlap = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                if overlap > 0.0 {
                    taps.push((s, overlap / scale));
                }
            }
            taps
        })
        .collect()
}

fn resample(
    data: &[f64],
    channels: usize,
    src: (usize, usize),
    dst: (usize, usize),
    taps: fn(usize, usize) -> Taps,
) -> Vec<f64> {
    assert!(dst.0 > 0 && dst.1 > 0, "target dimensions must be positive");
    let xt = taps(src.0, dst.0);
    let yt = taps(src.1, dst.1);
    // horizontal pass
    let mut tmp = vec![0.0; dst.0 * src.1 * channels];
    for y in 0..src.1 {
        for (x, tx) in xt.iter().enumerate() {
            let out = &mut tmp[(y * dst.0 + x) * channels..][..channels];
            for &(sx, w) in tx {
                let inp = &data[(y * src.0 + sx) * channels..][..channels];
                for c in 0..channels {
                    out[c] += w * inp[c];
                }
            }
        }
    }
    let mut out = vec![0.0; dst.0 * dst.1 * channels];
    for (y, ty) in yt.iter().enumerate() {
        for &(sy, w) in ty {
            let src_row = &tmp[sy * dst.0 * channels..][..dst.0 * channels];
            let dst_row = &mut out[y * dst.0 * channels..][..dst.0 * channels];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += w * s;
            }
        }
    }
    out
}
