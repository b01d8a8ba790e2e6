//! Sequence description files and loading a whole sequence into memory.
//!
//! A sequence file is a flat `key = value` file. Path keys are resolved
//! relative to the file's directory; glob matches are sorted by name.
//!
//! | key | meaning |
//! |---|---|
//! | `frame_glob` | the ℓ frames, in order |
//! | `flow_fw_glob` | ℓ-1 forward flows, frame t to t+1 |
//! | `flow_bw_glob` | ℓ-1 backward flows, frame t+1 to t |
//! | `annotation` | key-frame label mask of the first frame |
//! | `boundary_glob` | learned image boundaries, ℓ or ℓ-1 maps |
//! | `boundary_glob_<name>` | alternative learned boundaries, e.g. `boundary_glob_cob` |
//! | `motion_boundary_glob` | motion boundaries, ℓ or ℓ-1 maps |
//! | `prob_glob` | CNN probabilities; `{label}` is replaced by each label index |
//! | `name` | sequence name used in reports |
//!
//! Every run configuration key is accepted as well.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::media_io::{
    load_boundary, load_flow, load_frame, load_mask, load_probability_maps, parse_key_values, BoundaryMap,
    FlowDirection, FlowField, Frame, LabelMask, ProbabilityMaps, RunConfig,
};

const SPEC_KEYS: &[&str] = &[
    "name",
    "frame_glob",
    "flow_fw_glob",
    "flow_bw_glob",
    "boundary_glob",
    "motion_boundary_glob",
    "annotation",
    "prob_glob",
];

/// File locations of one sequence plus its run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub flow_forward: Vec<PathBuf>,
    pub flow_backward: Vec<PathBuf>,
    pub annotation: PathBuf,
    pub boundaries: Option<Vec<PathBuf>>,
    /// Alternative learned boundary sets keyed by name.
    pub named_boundaries: BTreeMap<String, Vec<PathBuf>>,
    pub motion_boundaries: Option<Vec<PathBuf>>,
    /// Per label, one map per frame.
    pub probabilities: Option<Vec<Vec<PathBuf>>>,
    pub config: RunConfig,
}

fn expand(base: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let full = if Path::new(pattern).is_absolute() { PathBuf::from(pattern) } else { base.join(pattern) };
    let full = full.to_string_lossy().into_owned();
    let mut paths: Vec<PathBuf> = glob::glob(&full)
        .map_err(|e| Error::Config(format!("bad glob `{pattern}`: {e}")))?
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("glob `{pattern}`: {e}")))?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("glob `{pattern}` matches no files")));
    }
    Ok(paths)
}

impl SequenceSpec {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut spec = SequenceSpec::from_text(&text, base)?;
        if spec.name.is_empty() {
            spec.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(spec)
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let kv = parse_key_values(text)?;
        for key in kv.keys() {
            let known = SPEC_KEYS.contains(&key.as_str())
                || key.starts_with("boundary_glob_")
                || crate::media_io::RunConfig::KEYS.contains(&key.as_str());
            if !known {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        let required =
            |key: &str| kv.get(key).ok_or_else(|| Error::Config(format!("missing required key `{key}`")));
        let optional_glob = |key: &str| kv.get(key).map(|p| expand(base, p)).transpose();

        let mut config = RunConfig::default();
        config.apply(&kv)?;

        let annotation = base.join(required("annotation")?);
        let probabilities = match kv.get("prob_glob") {
            None => None,
            Some(pattern) if pattern.contains("{label}") => {
                let mut per_label = Vec::new();
                for label in 0.. {
                    let p = pattern.replace("{label}", &label.to_string());
                    match expand(base, &p) {
                        Ok(paths) => per_label.push(paths),
                        Err(_) if label >= 2 => break,
                        Err(e) => return Err(e),
                    }
                }
                Some(per_label)
            }
            Some(_) => return Err(Error::Config("`prob_glob` must contain a `{label}` placeholder".into())),
        };
        let named_boundaries = kv
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("boundary_glob_").map(|name| (name, v)))
            .map(|(name, v)| Ok((name.to_string(), expand(base, v)?)))
            .collect::<Result<_>>()?;

        let spec = SequenceSpec {
            name: kv.get("name").cloned().unwrap_or_default(),
            frames: expand(base, required("frame_glob")?)?,
            flow_forward: expand(base, required("flow_fw_glob")?)?,
            flow_backward: expand(base, required("flow_bw_glob")?)?,
            annotation,
            boundaries: optional_glob("boundary_glob")?,
            named_boundaries,
            motion_boundaries: optional_glob("motion_boundary_glob")?,
            probabilities,
            config,
        };
        spec.check_counts()?;
        Ok(spec)
    }

    fn check_counts(&self) -> Result<()> {
        let frames = self.frames.len();
        if frames < 2 {
            return Err(Error::SequenceInconsistency(format!("{frames} frames, need at least 2")));
        }
        let pairs = frames - 1;
        for (what, n) in
            [("forward flows", self.flow_forward.len()), ("backward flows", self.flow_backward.len())]
        {
            if n != pairs {
                return Err(Error::SequenceInconsistency(format!(
                    "{n} {what} for {frames} frames, expected {pairs}"
                )));
            }
        }
        let per_frame = |what: &str, n: usize| {
            if n == frames || n == pairs {
                Ok(())
            } else {
                Err(Error::SequenceInconsistency(format!(
                    "{n} {what} for {frames} frames, expected {frames} or {pairs}"
                )))
            }
        };
        if let Some(b) = &self.boundaries {
            per_frame("boundary maps", b.len())?;
        }
        for (name, b) in &self.named_boundaries {
            per_frame(&format!("`{name}` boundary maps"), b.len())?;
        }
        if let Some(b) = &self.motion_boundaries {
            per_frame("motion boundary maps", b.len())?;
        }
        if let Some(p) = &self.probabilities {
            for maps in p {
                per_frame("probability maps", maps.len())?;
            }
        }
        Ok(())
    }

    /// Makes the named boundary set the primary learned boundaries.
    pub fn select_boundaries(&mut self, name: &str) -> Result<()> {
        let chosen = self
            .named_boundaries
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("sequence file has no `boundary_glob_{name}`")))?;
        self.boundaries = Some(chosen);
        Ok(())
    }

    /// Reads every file and checks that all grids agree in size.
    pub fn load(&self) -> Result<Sequence> {
        let frames = self.frames.iter().map(load_frame).collect::<Result<Vec<_>>>()?;
        let forward = self
            .flow_forward
            .iter()
            .map(|p| load_flow(p, FlowDirection::Forward))
            .collect::<Result<Vec<_>>>()?;
        let backward = self
            .flow_backward
            .iter()
            .map(|p| load_flow(p, FlowDirection::Backward))
            .collect::<Result<Vec<_>>>()?;
        let annotation = load_mask(&self.annotation, None)?;
        let aligned = |paths: &Option<Vec<PathBuf>>| -> Result<Option<Vec<Option<BoundaryMap>>>> {
            paths
                .as_ref()
                .map(|ps| align(ps.iter().map(load_boundary).collect::<Result<Vec<_>>>()?, frames.len()))
                .transpose()
        };
        let boundaries = aligned(&self.boundaries)?;
        let motion_boundaries = aligned(&self.motion_boundaries)?;
        let probabilities = match &self.probabilities {
            None => None,
            Some(per_label) => {
                let count = per_label[0].len();
                let per_frame = (0..count)
                    .map(|k| {
                        let paths: Vec<&PathBuf> = per_label.iter().map(|maps| &maps[k]).collect();
                        load_probability_maps(&paths)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(align(per_frame, frames.len())?)
            }
        };
        Sequence::new(frames, forward, backward, annotation, boundaries, motion_boundaries, probabilities)
    }
}

/// Pads a list of ℓ-1 per-frame inputs (frames 2..ℓ) to ℓ entries.
fn align<T>(items: Vec<T>, frames: usize) -> Result<Vec<Option<T>>> {
    let mut out: Vec<Option<T>> = items.into_iter().map(Some).collect();
    if out.len() + 1 == frames {
        out.insert(0, None);
    }
    if out.len() != frames {
        return Err(Error::SequenceInconsistency(format!(
            "{} per-frame inputs for {frames} frames",
            out.len()
        )));
    }
    Ok(out)
}

/// A fully loaded, validated sequence. Frame 0 is the annotated key frame.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub frames: Vec<Frame>,
    /// `forward[t]`: frame t to t+1.
    pub forward: Vec<FlowField>,
    /// `backward[t]`: frame t+1 to t.
    pub backward: Vec<FlowField>,
    pub annotation: LabelMask,
    pub boundaries: Option<Vec<Option<BoundaryMap>>>,
    pub motion_boundaries: Option<Vec<Option<BoundaryMap>>>,
    pub probabilities: Option<Vec<Option<ProbabilityMaps>>>,
}

impl Sequence {
    pub fn new(
        frames: Vec<Frame>,
        forward: Vec<FlowField>,
        backward: Vec<FlowField>,
        annotation: LabelMask,
        boundaries: Option<Vec<Option<BoundaryMap>>>,
        motion_boundaries: Option<Vec<Option<BoundaryMap>>>,
        probabilities: Option<Vec<Option<ProbabilityMaps>>>,
    ) -> Result<Self> {
        let seq =
            Sequence { frames, forward, backward, annotation, boundaries, motion_boundaries, probabilities };
        seq.validate()?;
        Ok(seq)
    }

    /// Sequence with flows and frames only.
    pub fn basic(
        frames: Vec<Frame>,
        forward: Vec<FlowField>,
        backward: Vec<FlowField>,
        annotation: LabelMask,
    ) -> Result<Self> {
        Sequence::new(frames, forward, backward, annotation, None, None, None)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_labels(&self) -> usize {
        self.annotation.num_labels()
    }

    /// First `k` frames with their flows and per-frame inputs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        let cut = |k: usize| k.min(self.frames.len());
        let pairs = cut(k).saturating_sub(1);
        Sequence::new(
            self.frames[..cut(k)].to_vec(),
            self.forward[..pairs].to_vec(),
            self.backward[..pairs].to_vec(),
            self.annotation.clone(),
            self.boundaries.as_ref().map(|b| b[..cut(k)].to_vec()),
            self.motion_boundaries.as_ref().map(|b| b[..cut(k)].to_vec()),
            self.probabilities.as_ref().map(|b| b[..cut(k)].to_vec()),
        )
    }

    fn validate(&self) -> Result<()> {
        let frames = self.frames.len();
        if frames < 1 {
            return Err(Error::SequenceInconsistency("empty sequence".into()));
        }
        let dims = self.frames[0].dims();
        for (t, f) in self.frames.iter().enumerate() {
            dims.ensure_eq(f.dims(), &format!("frame {t}"))?;
        }
        let pairs = frames - 1;
        if self.forward.len() != pairs || self.backward.len() != pairs {
            return Err(Error::SequenceInconsistency(format!(
                "{} forward and {} backward flows for {frames} frames",
                self.forward.len(),
                self.backward.len()
            )));
        }
        for (t, (f, b)) in self.forward.iter().zip(&self.backward).enumerate() {
            dims.ensure_eq(f.dims(), &format!("forward flow {t}"))?;
            dims.ensure_eq(b.dims(), &format!("backward flow {t}"))?;
        }
        dims.ensure_eq(self.annotation.dims(), "annotation")?;
        for (what, maps) in [("boundary", &self.boundaries), ("motion boundary", &self.motion_boundaries)] {
            if let Some(maps) = maps {
                if maps.len() != frames {
                    return Err(Error::SequenceInconsistency(format!("{what} maps misaligned")));
                }
                for (t, m) in maps.iter().enumerate() {
                    if let Some(m) = m {
                        dims.ensure_eq(m.dims(), &format!("{what} map {t}"))?;
                    }
                }
            }
        }
        if let Some(probs) = &self.probabilities {
            if probs.len() != frames {
                return Err(Error::SequenceInconsistency("probability maps misaligned".into()));
            }
            for (t, p) in probs.iter().enumerate() {
                if let Some(p) = p {
                    dims.ensure_eq(p.dims(), &format!("probability maps {t}"))?;
                    if p.num_labels() != self.num_labels() {
                        return Err(Error::SequenceInconsistency(format!(
                            "frame {t}: {} probability maps for {} labels",
                            p.num_labels(),
                            self.num_labels()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
