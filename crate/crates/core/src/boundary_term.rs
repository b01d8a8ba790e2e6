//! Perimeter weights `g` discounting the cost of region boundaries where an
//! edge is likely: from color gradients, from learned boundary maps, and from
//! learned image boundaries fused with motion boundaries.

use crate::error::Result;
use crate::media_io::{BoundaryMap, BoundarySign, Dims, FlowField, Frame};

/// Per-pixel perimeter weight. For the default constructors `0 < g <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerimeterWeight {
    dims: Dims,
    g: Vec<f64>,
    fallback: bool,
}

impl PerimeterWeight {
    pub fn new(dims: Dims, g: Vec<f64>) -> Self {
        assert_eq!(dims.len(), g.len());
        PerimeterWeight { dims, g, fallback: false }
    }

    pub fn uniform(dims: Dims) -> Self {
        PerimeterWeight::new(dims, vec![1.0; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.g
    }

    #[inline]
    pub fn get(&self, pixel: usize) -> f64 {
        self.g[pixel]
    }

    /// True when a learned map carried no boundary at all and the weight
    /// fell back to `g = 1`.
    pub fn is_fallback(&self) -> bool {
        self.fallback
    }
}

/// Frobenius norm of the 2-channel-per-plane Jacobian, forward differences
/// with a backward difference on the last row and column.
fn jacobian_norms<const C: usize>(dims: Dims, values: &[[f64; C]]) -> Vec<f64> {
    let (w, h) = (dims.width, dims.height);
    let diff = |a: usize, b: usize, c: usize| values[b][c] - values[a][c];
    (0..dims.len())
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut sq = 0.0;
            for c in 0..C {
                let dx = match (w, x + 1 < w) {
                    (1, _) => 0.0,
                    (_, true) => diff(i, i + 1, c),
                    (_, false) => diff(i - 1, i, c),
                };
                let dy = match (h, y + 1 < h) {
                    (1, _) => 0.0,
                    (_, true) => diff(i, i + w, c),
                    (_, false) => diff(i - w, i, c),
                };
                sq += dx * dx + dy * dy;
            }
            sq.sqrt()
        })
        .collect()
}

/// `g(x) = exp(-gamma * |grad I(x)|)`.
pub fn gradient_weight(frame: &Frame, gamma: f64) -> PerimeterWeight {
    let g =
        jacobian_norms(frame.dims(), frame.pixels()).into_iter().map(|norm| (-gamma * norm).exp()).collect();
    PerimeterWeight::new(frame.dims(), g)
}

/// `g(x) = exp(-E(x)^beta / E_bar)` with `E_bar = 2 * mean(E)`. `sign`
/// flips the exponent for comparison runs. A map without any boundary
/// gives `g = 1` and sets [`PerimeterWeight::is_fallback`].
pub fn learned_weight(boundary: &BoundaryMap, beta: f64, sign: BoundarySign) -> PerimeterWeight {
    let dims = boundary.dims();
    let e_bar = 2.0 * boundary.strength().iter().sum::<f64>() / dims.len() as f64;
    if e_bar <= 0.0 {
        let mut w = PerimeterWeight::uniform(dims);
        w.fallback = true;
        return w;
    }
    let s = match sign {
        BoundarySign::Negative => -1.0,
        BoundarySign::Literal => 1.0,
    };
    let g = boundary.strength().iter().map(|&e| (s * e.powf(beta) / e_bar).exp()).collect();
    PerimeterWeight::new(dims, g)
}

/// Sum of image and motion boundaries, clipped to 1, thinned by
/// non-maximum suppression.
pub fn fuse_boundaries(image_b: &BoundaryMap, motion_b: &BoundaryMap) -> Result<BoundaryMap> {
    let dims = image_b.dims();
    dims.ensure_eq(motion_b.dims(), "motion boundary map")?;
    let summed: Vec<f64> =
        image_b.strength().iter().zip(motion_b.strength()).map(|(a, b)| (a + b).min(1.0)).collect();
    let thinned = non_maximum_suppression(dims, &summed);
    BoundaryMap::new(dims.width, dims.height, thinned)
}

/// Motion boundaries from a flow field: the Frobenius norm of the flow
/// Jacobian divided by its 95th percentile, clipped to 1.
pub fn motion_boundaries(flow: &FlowField) -> Result<BoundaryMap> {
    let dims = flow.dims();
    let vectors: Vec<[f64; 2]> = flow.vectors().iter().map(|v| v.map(f64::from)).collect();
    let norms = jacobian_norms(dims, &vectors);
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.95 * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1);
    let q95 = sorted[rank];
    let strength =
        if q95 > 0.0 { norms.iter().map(|v| (v / q95).min(1.0)).collect() } else { vec![0.0; dims.len()] };
    BoundaryMap::new(dims.width, dims.height, strength)
}

const BLUR_TAPS: [f64; 5] = [
    0.054_488_684_549_642_34,
    0.244_201_342_003_233_6,
    0.402_619_946_894_248_1,
    0.244_201_342_003_233_6,
    0.054_488_684_549_642_34,
];

fn clamp_index(v: isize, len: usize) -> usize {
    v.clamp(0, len as isize - 1) as usize
}

/// Separable Gaussian blur with unit standard deviation, replicated borders.
fn blur(dims: Dims, src: &[f64]) -> Vec<f64> {
    let (w, h) = (dims.width, dims.height);
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = BLUR_TAPS
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + clamp_index(x as isize + k as isize - 2, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = BLUR_TAPS
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[clamp_index(y as isize + k as isize - 2, h) * w + x])
                .sum();
        }
    }
    out
}

fn sample_clamped(dims: Dims, src: &[f64], x: f64, y: f64) -> f64 {
    let (w, h) = (dims.width, dims.height);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
    let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Keeps a value only if it is at least as large as both neighbours along
/// the local gradient of the blurred map. Reads a snapshot of `src`.
pub fn non_maximum_suppression(dims: Dims, src: &[f64]) -> Vec<f64> {
    let (w, h) = (dims.width, dims.height);
    let smooth = blur(dims, src);
    let at = |x: isize, y: isize| smooth[clamp_index(y, h) * w + clamp_index(x, w)];
    (0..dims.len())
        .map(|i| {
            let value = src[i];
            if value <= 0.0 {
                return 0.0;
            }
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let norm = gx.hypot(gy);
            if norm <= 1e-12 {
                return value;
            }
            let (ux, uy) = (gx / norm, gy / norm);
            let (xf, yf) = (x as f64, y as f64);
            let ahead = sample_clamped(dims, src, xf + ux, yf + uy);
            let behind = sample_clamped(dims, src, xf - ux, yf - uy);
            if value >= ahead && value >= behind {
                value
            } else {
                0.0
            }
        })
        .collect()
}
