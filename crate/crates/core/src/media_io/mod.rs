//! Dense per-frame inputs and outputs: color frames, flow fields, boundary
//! strength maps, label masks, CNN probability maps and the run
//! configuration, together with their on-disk containers.
//!
//! Every grid is stored row-major, index `y * width + x`.

mod config;
mod flo;
mod maps;
mod mask;

pub use config::{
    parse_key_values, BoundarySign, BoundarySource, DataTermSource, LambdaMode, RunConfig, TauMode,
};
pub use flo::{load_flow, load_flow_with_report, save_flow, FlowLoadReport, FLO_MAGIC};
pub use maps::{load_boundary, load_frame, load_probability_maps, save_frame};
pub use mask::{davis_palette, load_mask, save_mask};

use crate::error::{Error, Result};

/// Width and height shared by every grid of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Self {
        Dims { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Fails with a sequence-inconsistency error unless `other` matches.
    pub fn ensure_eq(&self, other: Dims, what: &str) -> Result<()> {
        if *self != other {
            return Err(Error::SequenceInconsistency(format!(
                "{what} is {}x{}, expected {}x{}",
                other.width, other.height, self.width, self.height
            )));
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::RejectedInput(format!("{what} has empty dimensions {width}x{height}")));
    }
    if width * height != len {
        return Err(Error::RejectedInput(format!(
            "{what} payload holds {len} pixels, expected {}",
            width * height
        )));
    }
    Ok(())
}

/// RGB color frame with channel values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    dims: Dims,
    pixels: Vec<[f64; 3]>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height, pixels.len(), "frame")?;
        if let Some(bad) = pixels.iter().flatten().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::RejectedInput(format!("frame channel value {bad} outside [0, 255]")));
        }
        Ok(Frame { dims: Dims::new(width, height), pixels })
    }

    /// Frame filled with a single color.
    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        Frame::new(width, height, vec![color; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[self.dims.index(x, y)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Frame t to frame t+1.
    Forward,
    /// Frame t+1 to frame t.
    Backward,
}

/// Dense displacement field in pixels, `(dx, dy)` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dims: Dims,
    direction: FlowDirection,
    vectors: Vec<[f32; 2]>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        direction: FlowDirection,
        vectors: Vec<[f32; 2]>,
    ) -> Result<Self> {
        check_dims(width, height, vectors.len(), "flow field")?;
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("flow field contains non-finite vectors".into()));
        }
        Ok(FlowField { dims: Dims::new(width, height), direction, vectors })
    }

    /// Field holding the same vector at every pixel.
    pub fn constant(width: usize, height: usize, direction: FlowDirection, v: [f32; 2]) -> Result<Self> {
        FlowField::new(width, height, direction, vec![v; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn direction(&self) -> FlowDirection {
        self.direction
    }

    pub fn with_direction(mut self, direction: FlowDirection) -> Self {
        self.direction = direction;
        self
    }

    pub fn vectors(&self) -> &[[f32; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        let v = self.vectors[self.dims.index(x, y)];
        [v[0] as f64, v[1] as f64]
    }

    /// Bilinear sample at a sub-pixel position; `None` outside
    /// `[0, width-1] x [0, height-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (w, h) = (self.dims.width, self.dims.height);
        if !(x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(w - 1);
        let y0 = (y.floor() as usize).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let top = self.get(x0, y0)[c] * (1.0 - fx) + self.get(x1, y0)[c] * fx;
            let bottom = self.get(x0, y1)[c] * (1.0 - fx) + self.get(x1, y1)[c] * fx;
            *o = top * (1.0 - fy) + bottom * fy;
        }
        Some(out)
    }
}

/// Edge strength map with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMap {
    dims: Dims,
    strength: Vec<f64>,
}

impl BoundaryMap {
    pub fn new(width: usize, height: usize, strength: Vec<f64>) -> Result<Self> {
        check_dims(width, height, strength.len(), "boundary map")?;
        if let Some(bad) = strength.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::RejectedInput(format!("boundary strength {bad} outside [0, 1]")));
        }
        Ok(BoundaryMap { dims: Dims::new(width, height), strength })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        BoundaryMap::new(width, height, vec![0.0; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn strength(&self) -> &[f64] {
        &self.strength
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.strength[self.dims.index(x, y)]
    }
}

/// Per-pixel label in `0..n`; label 0 is the background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    dims: Dims,
    n: usize,
    labels: Vec<u16>,
}

impl LabelMask {
    /// Mask with an explicitly declared label count. Labels need not all be
    /// present.
    pub fn new(width: usize, height: usize, n: usize, labels: Vec<u16>) -> Result<Self> {
        check_dims(width, height, labels.len(), "label mask")?;
        if n < 2 {
            return Err(Error::InvalidMask(format!("label count {n} < 2")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= n) {
            return Err(Error::InvalidMask(format!("label {bad} outside 0..{n}")));
        }
        Ok(LabelMask { dims: Dims::new(width, height), n, labels })
    }

    /// Mask whose label count is inferred as `max label + 1`. Every label in
    /// `0..n` must occur.
    pub fn infer(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        let n = labels.iter().copied().max().map_or(0, |m| m as usize + 1);
        if n < 2 {
            return Err(Error::InvalidMask(format!(
                "inferred label count {n} < 2; declare the label count explicitly"
            )));
        }
        let mut seen = vec![false; n];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidMask(format!(
                "labels must be contiguous 0..{n}; label {missing} is absent"
            )));
        }
        LabelMask::new(width, height, n, labels)
    }

    /// Mask with every pixel set to `label`.
    pub fn filled(width: usize, height: usize, n: usize, label: u16) -> Result<Self> {
        LabelMask::new(width, height, n, vec![label; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[self.dims.index(x, y)]
    }

    /// Number of pixels carrying a non-background label.
    pub fn foreground_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Number of pixels carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Same labels under a larger declared label count.
    pub fn with_num_labels(self, n: usize) -> Result<Self> {
        LabelMask::new(self.dims.width, self.dims.height, n, self.labels)
    }
}

/// Per-pixel label probabilities; each pixel sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMaps {
    dims: Dims,
    n: usize,
    /// Pixel-major: `values[pixel * n + label]`.
    values: Vec<f64>,
}

impl ProbabilityMaps {
    /// Builds maps from per-label planes, renormalizing every pixel to sum to
    /// one. Pixels with zero total mass become uniform.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let n = planes.len();
        if n < 2 {
            return Err(Error::RejectedInput(format!("{n} probability planes, need at least 2")));
        }
        for plane in planes {
            check_dims(width, height, plane.len(), "probability map")?;
            if let Some(bad) = plane.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::RejectedInput(format!("probability {bad} outside [0, 1]")));
            }
        }
        let len = width * height;
        let mut values = vec![0.0; len * n];
        for px in 0..len {
            let total: f64 = planes.iter().map(|p| p[px]).sum();
            for (i, plane) in planes.iter().enumerate() {
                values[px * n + i] = if total > 0.0 { plane[px] / total } else { 1.0 / n as f64 };
            }
        }
        Ok(ProbabilityMaps { dims: Dims::new(width, height), n, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn num_labels(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, pixel: usize, label: usize) -> f64 {
        self.values[pixel * self.n + label]
    }
}
