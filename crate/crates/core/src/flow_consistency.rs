//! Forward-backward flow consistency, confident label transfer from frame t
//! to frame t+1 and scribble sampling on the transferred labels.
//!
//! A pixel `y` of frame t+1 is followed back to `x' = y + b(y)` in frame t and
//! forward again to `x' + f(x')`. The round trip error
//! `d(y) = |y - (x' + f(x'))|` is small where both flows agree; such pixels
//! inherit the label found at `x'`.

use rayon::prelude::*;

use crate::data_term::FeatureImage;
use crate::error::Result;
use crate::media_io::{Dims, FlowField, LabelMask, RunConfig, TauMode};

/// Binary confidence with the underlying round-trip distance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    dims: Dims,
    tau: f64,
    confident: Vec<bool>,
    distance: Vec<f64>,
}

impl ConfidenceMap {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Threshold the map was built with.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn confident(&self) -> &[bool] {
        &self.confident
    }

    /// Round-trip distances; `+inf` where the backward step leaves the image.
    pub fn distance(&self) -> &[f64] {
        &self.distance
    }

    #[inline]
    pub fn is_confident(&self, x: usize, y: usize) -> bool {
        self.confident[self.dims.index(x, y)]
    }

    pub fn confident_count(&self) -> usize {
        self.confident.iter().filter(|&&c| c).count()
    }
}

/// Round-trip error at pixel `(x, y)` of frame t+1. The forward flow is
/// sampled bilinearly; `+inf` when `y + b(y)` falls outside the image.
pub fn fb_distance(forward: &FlowField, backward: &FlowField, x: usize, y: usize) -> f64 {
    let [bx, by] = backward.get(x, y);
    let (sx, sy) = (x as f64 + bx, y as f64 + by);
    match forward.sample_bilinear(sx, sy) {
        Some([fx, fy]) => {
            let (ex, ey) = (x as f64 - (sx + fx), y as f64 - (sy + fy));
            ex.hypot(ey)
        }
        None => f64::INFINITY,
    }
}

/// `conf(y) = 1` iff `d(y) < tau`.
pub fn confidence_map(forward: &FlowField, backward: &FlowField, tau: f64) -> Result<ConfidenceMap> {
    let dims = backward.dims();
    dims.ensure_eq(forward.dims(), "forward flow")?;
    let distance: Vec<f64> = (0..dims.len())
        .into_par_iter()
        .map(|i| fb_distance(forward, backward, i % dims.width, i / dims.width))
        .collect();
    let confident = distance.iter().map(|&d| d < tau).collect();
    Ok(ConfidenceMap { dims, tau, confident, distance })
}

/// Threshold for [`confidence_map`]: the configured constant, or the mean
/// backward flow magnitude summed in pixel order.
pub fn resolve_tau(config: &RunConfig, backward: &FlowField) -> f64 {
    match config.tau_mode {
        TauMode::Fixed(t) => t,
        TauMode::MeanFlowMagnitude => {
            let total: f64 = backward.vectors().iter().map(|&[u, v]| (u as f64).hypot(v as f64)).sum();
            total / backward.vectors().len() as f64
        }
    }
}

/// Per-pixel label or unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpedLabels {
    dims: Dims,
    n: usize,
    labels: Vec<Option<u16>>,
}

impl WarpedLabels {
    pub fn new(dims: Dims, n: usize, labels: Vec<Option<u16>>) -> Self {
        assert_eq!(dims.len(), labels.len());
        WarpedLabels { dims, n, labels }
    }

    /// Every pixel known.
    pub fn from_mask(mask: &LabelMask) -> Self {
        WarpedLabels::new(mask.dims(), mask.num_labels(), mask.labels().iter().map(|&l| Some(l)).collect())
    }

    pub fn unknown(dims: Dims, n: usize) -> Self {
        WarpedLabels::new(dims, n, vec![None; dims.len()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[Option<u16>] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<u16> {
        self.labels[self.dims.index(x, y)]
    }

    pub fn known_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

/// Transfers labels of frame t to the confident pixels of frame t+1, reading
/// the label at the nearest integer position of `y + b(y)`.
pub fn warp_labels(mask_t: &LabelMask, backward: &FlowField, conf: &ConfidenceMap) -> Result<WarpedLabels> {
    let dims = mask_t.dims();
    dims.ensure_eq(backward.dims(), "backward flow")?;
    dims.ensure_eq(conf.dims(), "confidence map")?;
    let labels = (0..dims.len())
        .map(|i| {
            if !conf.confident[i] {
                return None;
            }
            let (x, y) = (i % dims.width, i / dims.width);
            let [bx, by] = backward.get(x, y);
            let sx = (x as f64 + bx).round();
            let sy = (y as f64 + by).round();
            if sx < 0.0 || sy < 0.0 || sx >= dims.width as f64 || sy >= dims.height as f64 {
                return None;
            }
            Some(mask_t.get(sx as usize, sy as usize))
        })
        .collect();
    Ok(WarpedLabels::new(dims, mask_t.num_labels(), labels))
}

/// Sparse labelled seed carrying the target-frame feature at its position.
#[derive(Debug, Clone, PartialEq)]
pub struct Scribble {
    pub x: f64,
    pub y: f64,
    pub feature: [f64; 5],
}

/// Scribbles grouped by label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScribbleSet {
    dims: Dims,
    per_label: Vec<Vec<Scribble>>,
}

impl ScribbleSet {
    pub fn new(dims: Dims, n: usize) -> Self {
        ScribbleSet { dims, per_label: vec![Vec::new(); n] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.per_label.len()
    }

    /// Adds a scribble; positions outside the image are ignored.
    pub fn push(&mut self, label: u16, scribble: Scribble) {
        let inside = scribble.x >= 0.0
            && scribble.y >= 0.0
            && scribble.x <= (self.dims.width - 1) as f64
            && scribble.y <= (self.dims.height - 1) as f64;
        if inside {
            self.per_label[label as usize].push(scribble);
        }
    }

    pub fn label(&self, label: usize) -> &[Scribble] {
        &self.per_label[label]
    }

    pub fn total(&self) -> usize {
        self.per_label.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Labels without any scribble.
    pub fn missing_labels(&self) -> Vec<u16> {
        (0..self.per_label.len()).filter(|&i| self.per_label[i].is_empty()).map(|i| i as u16).collect()
    }

    /// Appends every scribble of `other` under the same label.
    pub fn extend(&mut self, other: ScribbleSet) {
        for (mine, theirs) in self.per_label.iter_mut().zip(other.per_label) {
            mine.extend(theirs);
        }
    }
}

/// Takes one scribble per known pixel of the grid `(i * stride, j * stride)`.
pub fn sample_scribbles(
    warped: &WarpedLabels,
    features: &FeatureImage,
    stride: usize,
) -> Result<ScribbleSet> {
    let dims = warped.dims();
    dims.ensure_eq(features.dims(), "feature image")?;
    let stride = stride.max(1);
    let mut set = ScribbleSet::new(dims, warped.num_labels());
    for y in (0..dims.height).step_by(stride) {
        for x in (0..dims.width).step_by(stride) {
            if let Some(label) = warped.get(x, y) {
                set.push(label, Scribble { x: x as f64, y: y as f64, feature: features.get(x, y) });
            }
        }
    }
    Ok(set)
}
