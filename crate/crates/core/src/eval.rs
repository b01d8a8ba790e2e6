//! Region similarity (Jaccard) and boundary accuracy (F-measure) of predicted
//! masks, with mean, recall and decay statistics over a sequence.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::media_io::{Dims, LabelMask};

/// `|pred_l ∩ gt_l| / |pred_l ∪ gt_l|`; 1 when both are empty.
pub fn jaccard(pred: &LabelMask, gt: &LabelMask, label: u16) -> Result<f64> {
    pred.dims().ensure_eq(gt.dims(), "prediction")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        let (a, b) = (p == label, g == label);
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Matching tolerance of ~0.8% of the image diagonal, rounded up.
pub fn default_tolerance(dims: Dims) -> usize {
    let diag = (dims.width as f64).hypot(dims.height as f64);
    (0.008 * diag).ceil() as usize
}

/// Pixels of the region with a 4-neighbour outside the region. Neighbours
/// beyond the image border do not count.
fn boundary_pixels(mask: &LabelMask, label: u16) -> Vec<bool> {
    let (w, h) = (mask.width(), mask.height());
    let inside = |x: usize, y: usize| mask.get(x, y) == label;
    (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            inside(x, y)
                && ((x > 0 && !inside(x - 1, y))
                    || (x + 1 < w && !inside(x + 1, y))
                    || (y > 0 && !inside(x, y - 1))
                    || (y + 1 < h && !inside(x, y + 1)))
        })
        .collect()
}

/// Pixels within Euclidean distance `tol` of a set pixel.
fn dilate_disk(dims: Dims, set: &[bool], tol: usize) -> Vec<bool> {
    let (w, h) = (dims.width as isize, dims.height as isize);
    let t = tol as isize;
    let offsets: Vec<(isize, isize)> = (-t..=t)
        .flat_map(|dy| (-t..=t).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= t * t)
        .collect();
    let mut out = vec![false; set.len()];
    for (i, _) in set.iter().enumerate().filter(|(_, &s)| s) {
        let (x, y) = ((i as isize) % w, (i as isize) / w);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                out[(ny * w + nx) as usize] = true;
            }
        }
    }
    out
}

/// Boundary F-measure of one label: precision and recall of boundary
/// pixels matched within `tol` pixels. Two empty boundaries score 1.
pub fn boundary_f(pred: &LabelMask, gt: &LabelMask, label: u16, tol: usize) -> Result<f64> {
    let dims = gt.dims();
    dims.ensure_eq(pred.dims(), "prediction")?;
    let pb = boundary_pixels(pred, label);
    let gb = boundary_pixels(gt, label);
    let (np, ng) = (pb.iter().filter(|&&b| b).count(), gb.iter().filter(|&&b| b).count());
    match (np, ng) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let near_gt = dilate_disk(dims, &gb, tol);
    let near_pred = dilate_disk(dims, &pb, tol);
    let matched_p = pb.iter().zip(&near_gt).filter(|(&b, &n)| b && n).count();
    let matched_g = gb.iter().zip(&near_pred).filter(|(&b, &n)| b && n).count();
    let precision = matched_p as f64 / np as f64;
    let recall = matched_g as f64 / ng as f64;
    Ok(if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) })
}

/// Mean, recall (fraction above 0.5) and decay (mean of the first quarter
/// of frames minus mean of the last quarter) of a per-frame metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub recall: f64,
    pub decay: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stats { mean: f64::NAN, recall: f64::NAN, decay: f64::NAN };
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let recall = values.iter().filter(|&&v| v > 0.5).count() as f64 / values.len() as f64;
        let quarter = values.len().div_ceil(4);
        let decay = mean(&values[..quarter]) - mean(&values[values.len() - quarter..]);
        Stats { mean: mean(values), recall, decay }
    }
}

/// One row of the machine-readable metrics output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub sequence: String,
    pub frame: usize,
    pub object: u16,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectEval {
    pub object: u16,
    pub j: Stats,
    pub f: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    /// Indices of the evaluated frames (the key frame 0 is excluded).
    pub frames: Vec<usize>,
    /// Per evaluated frame, averaged over objects.
    pub frame_j: Vec<f64>,
    pub frame_f: Vec<f64>,
    pub j: Stats,
    pub f: Stats,
    pub objects: Vec<ObjectEval>,
    pub records: Vec<FrameRecord>,
}

/// Scores `preds` against `gts` frame by frame, skipping the key frame.
/// Objects are the labels `1..n` of the first ground-truth mask.
pub fn evaluate_sequence(
    sequence: &str,
    preds: &[LabelMask],
    gts: &[LabelMask],
    tol: Option<usize>,
) -> Result<EvalResult> {
    if preds.len() != gts.len() {
        return Err(Error::SequenceInconsistency(format!(
            "{} predictions for {} ground-truth frames",
            preds.len(),
            gts.len()
        )));
    }
    if gts.len() < 2 {
        return Err(Error::RejectedInput("no frames left to evaluate after excluding the key frame".into()));
    }
    let tol = tol.unwrap_or_else(|| default_tolerance(gts[0].dims()));
    let objects: Vec<u16> = (1..gts[0].num_labels() as u16).collect();
    let frames: Vec<usize> = (1..gts.len()).collect();
    let mut per_object_j = vec![Vec::new(); objects.len()];
    let mut per_object_f = vec![Vec::new(); objects.len()];
    let mut records = Vec::new();
    for &t in &frames {
        for (k, &obj) in objects.iter().enumerate() {
            let j = jaccard(&preds[t], &gts[t], obj)?;
            let f = boundary_f(&preds[t], &gts[t], obj, tol)?;
            per_object_j[k].push(j);
            per_object_f[k].push(f);
            records.push(FrameRecord { sequence: sequence.to_string(), frame: t, object: obj, j, f });
        }
    }
    let average = |per: &[Vec<f64>], i: usize| per.iter().map(|v| v[i]).sum::<f64>() / per.len() as f64;
    let frame_j: Vec<f64> = (0..frames.len()).map(|i| average(&per_object_j, i)).collect();
    let frame_f: Vec<f64> = (0..frames.len()).map(|i| average(&per_object_f, i)).collect();
    let objects = objects
        .iter()
        .enumerate()
        .map(|(k, &object)| ObjectEval {
            object,
            j: Stats::of(&per_object_j[k]),
            f: Stats::of(&per_object_f[k]),
        })
        .collect();
    Ok(EvalResult {
        j: Stats::of(&frame_j),
        f: Stats::of(&frame_f),
        frames,
        frame_j,
        frame_f,
        objects,
        records,
    })
}

/// Aggregate over several sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    /// Mean of the per-sequence means.
    pub per_sequence_j: f64,
    pub per_sequence_f: f64,
    /// Mean over all objects of all sequences.
    pub per_object_j: f64,
    pub per_object_f: f64,
}

pub fn summarize(results: &[EvalResult]) -> Summary {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let objects = || results.iter().flat_map(|r| r.objects.iter());
    Summary {
        per_sequence_j: mean(results.iter().map(|r| r.j.mean).collect()),
        per_sequence_f: mean(results.iter().map(|r| r.f.mean).collect()),
        per_object_j: mean(objects().map(|o| o.j.mean).collect()),
        per_object_f: mean(objects().map(|o| o.f.mean).collect()),
    }
}

/// Text table of per-sequence and overall scores. Means are in percent,
/// recall and decay as fractions.
pub fn format_table(names: &[&str], results: &[EvalResult]) -> String {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max("per object".len());
    let mut out = format!(
        "{:<width$}  {:>7} {:>6} {:>7}  {:>7} {:>6} {:>7}\n",
        "sequence", "M(J)", "R(J)", "D(J)", "M(F)", "R(F)", "D(F)"
    );
    let row = |out: &mut String, name: &str, j: &Stats, f: &Stats| {
        out.push_str(&format!(
            "{:<width$}  {:>7.1} {:>6.3} {:>7.3}  {:>7.1} {:>6.3} {:>7.3}\n",
            name,
            100.0 * j.mean,
            j.recall,
            j.decay,
            100.0 * f.mean,
            f.recall,
            f.decay
        ));
    };
    for (name, r) in names.iter().zip(results) {
        row(&mut out, name, &r.j, &r.f);
    }
    if !results.is_empty() {
        let s = summarize(results);
        out.push_str(&format!(
            "{:<width$}  {:>7.1} {:>23.1}\n{:<width$}  {:>7.1} {:>23.1}\n",
            "per seq.",
            100.0 * s.per_sequence_j,
            100.0 * s.per_sequence_f,
            "per object",
            100.0 * s.per_object_j,
            100.0 * s.per_object_f
        ));
    }
    out
}
