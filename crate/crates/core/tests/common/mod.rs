#![allow(dead_code, unused_imports)]

pub mod kde_oracle;
pub mod maxflow;
pub mod synthetic;

use flowseg::data_term::FeatureImage;
use flowseg::flow_consistency::{Scribble, ScribbleSet};
use flowseg::media_io::{FlowDirection, FlowField, Frame};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub use kde_oracle::kde_oracle;
pub use maxflow::BinaryInstance;

/// Random frame, flow-augmented features and scribbles. Half of the
/// scribbles copy the feature under them, the rest carry random features.
pub fn random_kde_instance(seed: u64) -> (FeatureImage, ScribbleSet, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (w, h) = (rng.random_range(4..=32), rng.random_range(4..=32));
    let pixels = (0..w * h).map(|_| [0; 3].map(|_| rng.random_range(0.0..=255.0))).collect();
    let frame = Frame::new(w, h, pixels).unwrap();
    let vectors = (0..w * h).map(|_| [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)]).collect();
    let flow = FlowField::new(w, h, FlowDirection::Backward, vectors).unwrap();
    let features = FeatureImage::build(&frame, &flow, 0.5, 0.5).unwrap();
    let n = rng.random_range(2..=4);
    let mut set = ScribbleSet::new(features.dims(), n);
    let count = rng.random_range(1..=50);
    for k in 0..count {
        let x = rng.random_range(0.0..=(w - 1) as f64);
        let y = rng.random_range(0.0..=(h - 1) as f64);
        let feature = if k % 2 == 0 {
            features.get(x.round() as usize, y.round() as usize)
        } else {
            [0; 5].map(|_| rng.random_range(0.0..=255.0))
        };
        set.push(rng.random_range(0..n) as u16, Scribble { x, y, feature });
    }
    let sigma = rng.random_range(8.0..128.0);
    (features, set, sigma)
}

/// Binary 32x32 instance: a noisy disk against noisy background costs,
/// random perimeter weights and lambda.
pub fn random_binary_instance(seed: u64) -> BinaryInstance {
    let mut rng = StdRng::seed_from_u64(seed);
    let (w, h) = (32, 32);
    let (cx, cy) = (rng.random_range(8.0..24.0), rng.random_range(8.0..24.0));
    let r: f64 = rng.random_range(5.0..12.0);
    let mut h0 = Vec::with_capacity(w * h);
    let mut h1 = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        let inside = (x - cx).powi(2) + (y - cy).powi(2) < r * r;
        let (m0, m1) = if inside { (2.0, 0.0) } else { (0.0, 2.0) };
        h0.push(rng.random_range(0.0..4.0) + m0);
        h1.push(rng.random_range(0.0..4.0) + m1);
    }
    let g = (0..w * h).map(|_| rng.random_range(0.3..1.0)).collect();
    BinaryInstance { width: w, height: h, h0, h1, g, lambda: rng.random_range(1.0..4.0) }
}

/// Solver limits with the early-stop threshold scaled from a 854x480 frame
/// down to `pixels`, so small instances are not cut off after a few steps.
pub fn oracle_limits(pixels: usize) -> flowseg::solver::SolverLimits {
    let defaults = flowseg::solver::SolverLimits::default();
    flowseg::solver::SolverLimits {
        min_decrease: defaults.min_decrease * pixels as f64 / (854.0 * 480.0),
        ..defaults
    }
}
