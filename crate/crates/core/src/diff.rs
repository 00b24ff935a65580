//! Small helpers for the hand-written reverse pass: local 3x3 Jacobians and
//! a sink that records how close a forward evaluation came to a kink
//! (clamp bound, ReLU knot, max/min tie, hue sector edge).

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

pub const ZERO3: Mat3 = [[0.0; 3]; 3];

/// `J^T v`, i.e. pulls an output adjoint back through a Jacobian `J[out][in]`.
#[inline]
pub fn t_mul(j: &Mat3, v: Vec3) -> Vec3 {
    [
        j[0][0] * v[0] + j[1][0] * v[1] + j[2][0] * v[2],
        j[0][1] * v[0] + j[1][1] * v[1] + j[2][1] * v[2],
        j[0][2] * v[0] + j[1][2] * v[1] + j[2][2] * v[2],
    ]
}

#[cfg(test)]
pub fn mul(j: &Mat3, v: Vec3) -> Vec3 {
    [
        j[0][0] * v[0] + j[0][1] * v[1] + j[0][2] * v[2],
        j[1][0] * v[0] + j[1][1] * v[1] + j[1][2] * v[2],
        j[2][0] * v[0] + j[2][1] * v[1] + j[2][2] * v[2],
    ]
}

/// Receives distances from the current evaluation point to the nearest
/// non-differentiable point of each piecewise operation.
pub trait Kinks {
    fn note(&mut self, distance: f64);

    /// Announces which pixel subsequent notes belong to.
    #[inline]
    fn pixel(&mut self, _index: usize) {}

    /// Records the distance of a pre-clamp value to the `[0, 1]` bounds.
    #[inline]
    fn clamp01(&mut self, v: f64) {
        self.note(v.abs().min((v - 1.0).abs()));
    }
}

/// Discards everything; used on the hot path.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoKinks;

impl Kinks for NoKinks {
    #[inline(always)]
    fn note(&mut self, _: f64) {}
}

/// Per-pixel minimum distances.
#[derive(Debug, Clone)]
pub struct MarginMap {
    pub data: Vec<f64>,
    current: usize,
}

impl MarginMap {
    pub fn new(len: usize) -> Self {
        Self { data: vec![f64::INFINITY; len], current: 0 }
    }
}

impl Kinks for MarginMap {
    #[inline]
    fn note(&mut self, distance: f64) {
        let slot = &mut self.data[self.current];
        if distance < *slot {
            *slot = distance;
        }
    }

    #[inline]
    fn pixel(&mut self, index: usize) {
        self.current = index;
    }
}

/// Clamp with its derivative mask.
#[inline]
pub fn clamp01_d<K: Kinks>(v: f64, k: &mut K) -> (f64, bool) {
    k.clamp01(v);
    if v <= 0.0 {
        (0.0, false)
    } else if v >= 1.0 {
        (1.0, false)
    } else {
        (v, true)
    }
}

/// Piecewise-linear ramp falling from 1 at `lo` to 0 at `hi`, with derivative.
#[inline]
pub fn ramp_down<K: Kinks>(x: f64, lo: f64, hi: f64, k: &mut K) -> (f64, f64) {
    k.note((x - lo).abs().min((x - hi).abs()));
    if x <= lo {
        (1.0, 0.0)
    } else if x >= hi {
        (0.0, 0.0)
    } else {
        ((hi - x) / (hi - lo), -1.0 / (hi - lo))
    }
}

#[inline]
pub fn ramp_up<K: Kinks>(x: f64, lo: f64, hi: f64, k: &mut K) -> (f64, f64) {
    let (v, d) = ramp_down(x, lo, hi, k);
    (1.0 - v, -d)
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_product_matches_definition() {
        let j = [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]];
        assert_eq!(t_mul(&j, [1.0, 0.0, 0.0]), [1.0, 2.0, 3.0]);
        assert_eq!(mul(&j, [1.0, 0.0, 0.0]), [1.0, 4.0, 7.0]);
    }

    #[test]
    fn margin_map_tracks_minimum_per_pixel() {
        let mut m = MarginMap::new(2);
        m.clamp01(0.3);
        m.clamp01(0.999);
        m.pixel(1);
        m.clamp01(-0.25);
        assert!((m.data[0] - 0.001).abs() < 1e-12);
        assert_eq!(m.data[1], 0.25);
    }
}
