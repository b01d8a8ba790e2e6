//! Frame-by-frame propagation of the key-frame annotation.
//!
//! For every frame t+1: consistency check of the flows, confident label
//! transfer, scribble sampling, feature image, label costs (kernel density or
//! CNN probabilities, plus lost object retrieval), clamps, perimeter weight,
//! primal-dual solve. The solver output becomes the source mask of the next
//! frame.

mod spec;

pub use spec::{Sequence, SequenceSpec};

use rayon::prelude::*;

use crate::boundary_term::{
    fuse_boundaries, gradient_weight, learned_weight, motion_boundaries, PerimeterWeight,
};
use crate::data_term::{
    apply_clamps, cnn_costs, kde_costs_where, lost_object_retrieval, ColorModel, CostVolume, FeatureImage,
    C_MISSING,
};
use crate::error::{Error, Result};
use crate::flow_consistency::{confidence_map, resolve_tau, sample_scribbles, warp_labels};
use crate::media_io::{BoundarySource, DataTermSource, LabelMask, LambdaMode, RunConfig};
use crate::solver::{solve, SolverReport};

/// Candidate weights of the perimeter term for the grid search.
pub const LAMBDA_GRID: [f64; 12] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0];

/// Threshold used when the mean-flow rule yields zero (a static frame).
pub const STATIC_TAU: f64 = 1.0;

/// Diagnostics of one propagation step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub frame: usize,
    pub tau: f64,
    pub confident: usize,
    pub clamped: usize,
    pub scribbles: usize,
    pub retrieved: usize,
    /// Labels without any scribble before retrieval.
    pub missing: Vec<u16>,
    pub solver: SolverReport,
}

/// Result of segmenting a whole sequence.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub lambda: f64,
    /// One mask per frame; the first is the annotation.
    pub masks: Vec<LabelMask>,
    pub steps: Vec<StepReport>,
}

/// Segments frame `target` (>= 1) from the mask of frame `target - 1`.
pub fn segment_step(
    seq: &Sequence,
    config: &RunConfig,
    color_model: &ColorModel,
    target: usize,
    previous: &LabelMask,
    lambda: f64,
) -> Result<(LabelMask, StepReport)> {
    assert!(target >= 1 && target < seq.len());
    let frame = &seq.frames[target];
    let forward = &seq.forward[target - 1];
    let backward = &seq.backward[target - 1];
    let n = seq.num_labels();

    let mut tau = resolve_tau(config, backward);
    if tau <= 0.0 {
        tau = STATIC_TAU;
    }
    let conf = confidence_map(forward, backward, tau)?;
    let warped = warp_labels(previous, backward, &conf)?;
    let features = FeatureImage::build(frame, backward, config.alpha, config.theta)?;
    let mut scribbles = sample_scribbles(&warped, &features, config.scribble_stride)?;
    let missing = scribbles.missing_labels();

    let mut retrieved = 0;
    if config.lor_enabled && n == 2 && missing.iter().any(|&l| l != 0) {
        let found =
            lost_object_retrieval(&conf, &features, color_model, &missing, config.lor_color_threshold)?;
        retrieved = found.total();
        scribbles.extend(found);
    }

    let costs = match config.data_term_source {
        DataTermSource::Kde => {
            let unknown = |px: usize| warped.labels()[px].is_none();
            match kde_costs_where(&scribbles, &features, config.sigma, unknown) {
                Ok(c) => c,
                Err(Error::NoEvidence) => {
                    CostVolume::new(frame.dims(), n, vec![C_MISSING; frame.dims().len() * n])?
                }
                Err(e) => return Err(e),
            }
        }
        DataTermSource::CnnProbabilities => {
            let maps = seq
                .probabilities
                .as_ref()
                .and_then(|p| p[target].as_ref())
                .ok_or_else(|| Error::RejectedInput("no CNN probability maps for this frame".into()))?;
            if maps.num_labels() != n {
                return Err(Error::SequenceInconsistency(format!(
                    "{} probability maps for {n} labels",
                    maps.num_labels()
                )));
            }
            cnn_costs(maps)?
        }
    };
    let costs = apply_clamps(costs, &warped)?;
    let weight = perimeter_weight(seq, config, target)?;
    let (mask, solver) = solve(&costs, &weight, lambda, &config.solver)?;

    let report = StepReport {
        frame: target,
        tau,
        confident: conf.confident_count(),
        clamped: costs.clamped_count(),
        scribbles: scribbles.total(),
        retrieved,
        missing,
        solver,
    };
    Ok((mask, report))
}

fn perimeter_weight(seq: &Sequence, config: &RunConfig, target: usize) -> Result<PerimeterWeight> {
    let frame = &seq.frames[target];
    let learned = || {
        seq.boundaries
            .as_ref()
            .and_then(|b| b[target].as_ref())
            .ok_or_else(|| Error::RejectedInput("no learned boundary map for this frame".into()))
    };
    Ok(match config.boundary_source {
        BoundarySource::Gradient => gradient_weight(frame, config.gamma),
        BoundarySource::Learned => learned_weight(learned()?, config.beta, config.boundary_sign),
        BoundarySource::LearnedPlusMotion => {
            let motion = match seq.motion_boundaries.as_ref().and_then(|m| m[target].as_ref()) {
                Some(m) => m.clone(),
                None => motion_boundaries(&seq.backward[target - 1])?,
            };
            let fused = fuse_boundaries(learned()?, &motion)?;
            learned_weight(&fused, config.beta, config.boundary_sign)
        }
    })
}

/// Picks the candidate whose segmentation of frame 1 deviates least in
/// foreground size from the annotation. Ties go to the smaller candidate.
pub fn select_lambda_by<F>(annotation: &LabelMask, candidates: &[f64], segment: F) -> Result<f64>
where
    F: Fn(f64) -> Result<LabelMask> + Sync,
{
    let target = annotation.foreground_count() as i64;
    let deviations = candidates
        .par_iter()
        .map(|&lambda| Ok((segment(lambda)?.foreground_count() as i64 - target).abs()))
        .collect::<Result<Vec<i64>>>()?;
    let best = deviations
        .iter()
        .enumerate()
        .min_by_key(|&(i, &d)| (d, i))
        .map(|(i, _)| candidates[i])
        .ok_or_else(|| Error::Config("empty lambda grid".into()))?;
    Ok(best)
}

/// Grid search over [`LAMBDA_GRID`] on the first propagation step.
pub fn select_lambda(seq: &Sequence, config: &RunConfig) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::SequenceInconsistency("lambda selection needs at least 2 frames".into()));
    }
    let model = ColorModel::from_key_frame(&seq.frames[0], &seq.annotation)?;
    select_lambda_by(&seq.annotation, &LAMBDA_GRID, |lambda| {
        segment_step(seq, config, &model, 1, &seq.annotation, lambda).map(|(mask, _)| mask)
    })
}

/// Segments every frame, chaining each output into the next step.
pub fn segment_sequence(seq: &Sequence, config: &RunConfig) -> Result<SequenceRun> {
    config.validate()?;
    let lambda = match config.lambda_mode {
        LambdaMode::Fixed(l) => l,
        LambdaMode::GridSearch if seq.len() >= 2 => select_lambda(seq, config)?,
        LambdaMode::GridSearch => LAMBDA_GRID[0],
    };
    let model = ColorModel::from_key_frame(&seq.frames[0], &seq.annotation)?;
    let mut masks = vec![seq.annotation.clone()];
    let mut steps = Vec::with_capacity(seq.len().saturating_sub(1));
    for target in 1..seq.len() {
        let previous = masks.last().expect("annotation seeds the chain");
        let (mask, report) =
            segment_step(seq, config, &model, target, previous, lambda).map_err(|e| e.at_frame(target))?;
        masks.push(mask);
        steps.push(report);
    }
    Ok(SequenceRun { lambda, masks, steps })
}
