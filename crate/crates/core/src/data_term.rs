//! Label costs: the augmented color+motion feature image, the spatially
//! varying kernel density costs built from scribbles, CNN probability costs,
//! hard clamps from confident label transfer, and lost object retrieval.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow_consistency::{ConfidenceMap, Scribble, ScribbleSet, WarpedLabels};
use crate::media_io::{Dims, FlowField, Frame, LabelMask, ProbabilityMaps};

/// Cost of a label that has neither scribbles nor retrieved evidence.
pub const C_MISSING: f64 = 20.0;
/// Cost of every non-clamped label at a clamped pixel.
pub const C_HARD: f64 = 1e4;
/// Floor on the kernel density before taking its logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Floor on CNN probabilities before taking their logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-6;

pub const FEATURE_DIM: usize = 5;

/// Per-pixel `(R, G, B, alpha * flow magnitude, theta * flow direction)`,
/// flow channels normalized to `[0, 255]` before weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    dims: Dims,
    features: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureImage {
    /// Augments `frame` with the magnitude and direction of the backward flow
    /// defined on the same frame. Magnitudes are scaled by the frame's maximum
    /// (0 when the flow vanishes); directions map `atan2` from `[-pi, pi]` to
    /// `[0, 255]`, with `atan2(0, 0) = 0`.
    pub fn build(frame: &Frame, backward: &FlowField, alpha: f64, theta: f64) -> Result<Self> {
        let dims = frame.dims();
        dims.ensure_eq(backward.dims(), "backward flow")?;
        let magnitudes: Vec<f64> =
            backward.vectors().iter().map(|&[u, v]| (u as f64).hypot(v as f64)).collect();
        let max_mag = magnitudes.iter().copied().fold(0.0, f64::max);
        let features = frame
            .pixels()
            .iter()
            .zip(backward.vectors())
            .zip(&magnitudes)
            .map(|((rgb, &[u, v]), &mag)| {
                let mag_norm = if max_mag > 0.0 { 255.0 * mag / max_mag } else { 0.0 };
                let dir_norm = 255.0 * ((v as f64).atan2(u as f64) + PI) / (2.0 * PI);
                [rgb[0], rgb[1], rgb[2], alpha * mag_norm, theta * dir_norm]
            })
            .collect();
        Ok(FeatureImage { dims, features })
    }

    pub fn from_raw(dims: Dims, features: Vec<[f64; FEATURE_DIM]>) -> Self {
        assert_eq!(dims.len(), features.len());
        FeatureImage { dims, features }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn features(&self) -> &[[f64; FEATURE_DIM]] {
        &self.features
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; FEATURE_DIM] {
        self.features[self.dims.index(x, y)]
    }
}

/// Per-pixel per-label assignment costs plus optional hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    dims: Dims,
    n: usize,
    /// Pixel-major: `costs[pixel * n + label]`.
    costs: Vec<f64>,
    clamp: Vec<Option<u16>>,
}

impl CostVolume {
    pub fn new(dims: Dims, n: usize, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != dims.len() * n {
            return Err(Error::RejectedInput(format!(
                "cost volume holds {} values, expected {}",
                costs.len(),
                dims.len() * n
            )));
        }
        if let Some(bad) = costs.iter().find(|c| !c.is_finite() || **c < 0.0) {
            return Err(Error::RejectedInput(format!("cost {bad} is not finite and >= 0")));
        }
        Ok(CostVolume { dims, n, costs, clamp: vec![None; dims.len()] })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Costs of all labels at one pixel.
    #[inline]
    pub fn pixel(&self, pixel: usize) -> &[f64] {
        &self.costs[pixel * self.n..(pixel + 1) * self.n]
    }

    #[inline]
    pub fn get(&self, pixel: usize, label: usize) -> f64 {
        self.costs[pixel * self.n + label]
    }

    pub fn clamps(&self) -> &[Option<u16>] {
        &self.clamp
    }

    pub fn clamped_count(&self) -> usize {
        self.clamp.iter().filter(|c| c.is_some()).count()
    }
}

/// Kernel density cost of every label at every pixel.
///
/// For label `i` with scribbles `S_i` at pixel `x`:
/// `h_i(x) = -ln( 1/|S_i| * sum_s k_rho(x - x_s) * k_sigma(J(x) - J_s) )`
/// with unnormalized Gaussians `k_r(d) = exp(-|d|^2 / (2 r^2))` and
/// `rho_i(x) = max(1, distance from x to the nearest scribble of label i)`.
/// Labels without scribbles cost [`C_MISSING`].
pub fn kde_costs(scribbles: &ScribbleSet, features: &FeatureImage, sigma: f64) -> Result<CostVolume> {
    kde_costs_where(scribbles, features, sigma, |_| true)
}

/// [`kde_costs`] evaluated only at pixels accepted by `wanted`; other pixels
/// get zero cost for every label.
pub fn kde_costs_where(
    scribbles: &ScribbleSet,
    features: &FeatureImage,
    sigma: f64,
    wanted: impl Fn(usize) -> bool + Sync,
) -> Result<CostVolume> {
    let dims = features.dims();
    dims.ensure_eq(scribbles.dims(), "scribble set")?;
    if scribbles.is_empty() {
        return Err(Error::NoEvidence);
    }
    let n = scribbles.num_labels();
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let mut costs = vec![0.0; dims.len() * n];
    costs.par_chunks_mut(n).enumerate().for_each(|(px, out)| {
        if !wanted(px) {
            return;
        }
        let (x, y) = ((px % dims.width) as f64, (px / dims.width) as f64);
        let feature = &features.features[px];
        for (label, cost) in out.iter_mut().enumerate() {
            let seeds = scribbles.label(label);
            *cost =
                if seeds.is_empty() { C_MISSING } else { label_cost(x, y, feature, seeds, inv_two_sigma_sq) };
        }
    });
    CostVolume::new(dims, n, costs)
}

fn label_cost(
    x: f64,
    y: f64,
    feature: &[f64; FEATURE_DIM],
    seeds: &[Scribble],
    inv_two_sigma_sq: f64,
) -> f64 {
    let spatial_sq = |s: &Scribble| (x - s.x).powi(2) + (y - s.y).powi(2);
    let nearest_sq = seeds.iter().map(spatial_sq).fold(f64::INFINITY, f64::min);
    let rho = nearest_sq.sqrt().max(1.0);
    let inv_two_rho_sq = 1.0 / (2.0 * rho * rho);
    let mut sum = 0.0;
    for s in seeds {
        let feature_sq: f64 = feature.iter().zip(&s.feature).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += (-spatial_sq(s) * inv_two_rho_sq).exp() * (-feature_sq * inv_two_sigma_sq).exp();
    }
    -(sum / seeds.len() as f64).max(DENSITY_FLOOR).ln()
}

/// `h_i(x) = -ln(max(p_i(x), 1e-6))`.
pub fn cnn_costs(maps: &ProbabilityMaps) -> Result<CostVolume> {
    let dims = maps.dims();
    let n = maps.num_labels();
    let costs = (0..dims.len() * n).map(|k| -maps.get(k / n, k % n).max(PROBABILITY_FLOOR).ln()).collect();
    CostVolume::new(dims, n, costs)
}

/// Fixes every pixel with a known transferred label: zero cost for that
/// label, [`C_HARD`] for the others.
pub fn apply_clamps(mut costs: CostVolume, warped: &WarpedLabels) -> Result<CostVolume> {
    costs.dims.ensure_eq(warped.dims(), "warped labels")?;
    if warped.num_labels() != costs.n {
        return Err(Error::SequenceInconsistency(format!(
            "warped labels declare {} labels, cost volume has {}",
            warped.num_labels(),
            costs.n
        )));
    }
    let n = costs.n;
    for (px, label) in warped.labels().iter().enumerate() {
        if let Some(label) = *label {
            for (i, c) in costs.costs[px * n..(px + 1) * n].iter_mut().enumerate() {
                *c = if i == label as usize { 0.0 } else { C_HARD };
            }
            costs.clamp[px] = Some(label);
        }
    }
    Ok(costs)
}

/// Mean key-frame color of each label.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorModel {
    means: Vec<Option<[f64; 3]>>,
}

impl ColorModel {
    pub fn from_key_frame(frame: &Frame, mask: &LabelMask) -> Result<Self> {
        frame.dims().ensure_eq(mask.dims(), "key-frame annotation")?;
        let n = mask.num_labels();
        let mut sums = vec![[0.0; 3]; n];
        let mut counts = vec![0usize; n];
        for (rgb, &l) in frame.pixels().iter().zip(mask.labels()) {
            let s = &mut sums[l as usize];
            for c in 0..3 {
                s[c] += rgb[c];
            }
            counts[l as usize] += 1;
        }
        let means =
            sums.into_iter().zip(counts).map(|(s, c)| (c > 0).then(|| s.map(|v| v / c as f64))).collect();
        Ok(ColorModel { means })
    }

    pub fn num_labels(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, label: usize) -> Option<[f64; 3]> {
        self.means.get(label).copied().flatten()
    }
}

/// Re-seeds vanished foreground labels: every low-confidence pixel whose
/// color lies within `threshold` (RGB Euclidean) of the label's key-frame
/// mean becomes a scribble of that label. Only applies to binary
/// segmentations; returns an empty set otherwise.
pub fn lost_object_retrieval(
    conf: &ConfidenceMap,
    features: &FeatureImage,
    model: &ColorModel,
    missing_labels: &[u16],
    threshold: f64,
) -> Result<ScribbleSet> {
    let dims = features.dims();
    dims.ensure_eq(conf.dims(), "confidence map")?;
    let n = model.num_labels();
    let mut found = ScribbleSet::new(dims, n);
    if n != 2 {
        return Ok(found);
    }
    for &label in missing_labels.iter().filter(|&&l| l != 0) {
        let Some(mean) = model.mean(label as usize) else { continue };
        for (px, &confident) in conf.confident().iter().enumerate() {
            if confident {
                continue;
            }
            let feature = features.features[px];
            let dist = ((feature[0] - mean[0]).powi(2)
                + (feature[1] - mean[1]).powi(2)
                + (feature[2] - mean[2]).powi(2))
            .sqrt();
            if dist < threshold {
                let (x, y) = (px % dims.width, px / dims.width);
                found.push(label, Scribble { x: x as f64, y: y as f64, feature });
            }
        }
    }
    Ok(found)
}
