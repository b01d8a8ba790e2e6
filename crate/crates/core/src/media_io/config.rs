//! Run configuration and the flat `key = value` text format shared by
//! configuration and sequence files. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::solver::SolverLimits;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauMode {
    Fixed(f64),
    /// Mean magnitude of the backward flow of the frame being segmented.
    MeanFlowMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    Fixed(f64),
    GridSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySource {
    /// Color gradient weight.
    Gradient,
    /// Learned image boundaries.
    Learned,
    /// Learned image boundaries fused with motion boundaries.
    LearnedPlusMotion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataTermSource {
    Kde,
    CnnProbabilities,
}

/// Sign of the exponent in the learned-boundary weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySign {
    /// `exp(-E^beta / mean)`: cheaper to cut along strong boundaries.
    Negative,
    /// `exp(+E^beta / mean)`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tau_mode: TauMode,
    pub lambda_mode: LambdaMode,
    pub sigma: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub boundary_sign: BoundarySign,
    pub lor_enabled: bool,
    pub lor_color_threshold: f64,
    pub scribble_stride: usize,
    pub boundary_source: BoundarySource,
    pub data_term_source: DataTermSource,
    pub solver: SolverLimits,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tau_mode: TauMode::Fixed(5.0),
            lambda_mode: LambdaMode::GridSearch,
            sigma: 64.0,
            gamma: 1.0 / 255.0,
            alpha: 0.5,
            theta: 0.5,
            beta: 1.0,
            boundary_sign: BoundarySign::Negative,
            lor_enabled: true,
            lor_color_threshold: 5.0,
            scribble_stride: 4,
            boundary_source: BoundarySource::Gradient,
            data_term_source: DataTermSource::Kde,
            solver: SolverLimits::default(),
        }
    }
}

impl RunConfig {
    /// Keys understood by [`RunConfig::apply`].
    pub const KEYS: &'static [&'static str] = &[
        "tau_mode",
        "lambda_mode",
        "sigma",
        "gamma",
        "alpha",
        "theta",
        "beta",
        "boundary_sign",
        "lor_enabled",
        "lor_color_threshold",
        "scribble_stride",
        "boundary_source",
        "data_term_source",
        "max_iters",
        "extended_max_iters",
        "extend_threshold",
        "min_decrease",
    ];
}

/// Parses `key = value` lines. Duplicate keys are an error.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(out)
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

/// `fixed(v)` or a bare number.
fn parse_fixed(key: &str, value: &str) -> Option<Result<f64>> {
    let inner = value
        .strip_prefix("fixed(")
        .and_then(|v| v.strip_suffix(')'))
        .or_else(|| value.parse::<f64>().is_ok().then_some(value))?;
    Some(parse_num(key, inner.trim()))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        if let Some(unknown) = kv.keys().find(|k| !RunConfig::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{unknown}`")));
        }
        let mut cfg = RunConfig::default();
        cfg.apply(&kv)?;
        Ok(cfg)
    }

    /// Overrides fields from any recognised keys in `kv`; other keys are
    /// ignored. Validates the result.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in kv {
            let (k, v) = (key.as_str(), value.as_str());
            match k {
                "tau_mode" => {
                    self.tau_mode = match v {
                        "mean_flow_magnitude" => TauMode::MeanFlowMagnitude,
                        _ => TauMode::Fixed(parse_fixed(k, v).ok_or_else(|| {
                            Error::Config(format!(
                                "`tau_mode`: expected fixed(v) or mean_flow_magnitude, got `{v}`"
                            ))
                        })??),
                    }
                }
                "lambda_mode" => {
                    self.lambda_mode = match v {
                        "grid_search" => LambdaMode::GridSearch,
                        _ => LambdaMode::Fixed(parse_fixed(k, v).ok_or_else(|| {
                            Error::Config(format!(
                                "`lambda_mode`: expected fixed(v) or grid_search, got `{v}`"
                            ))
                        })??),
                    }
                }
                "sigma" => self.sigma = parse_num(k, v)?,
                "gamma" => self.gamma = parse_num(k, v)?,
                "alpha" => self.alpha = parse_num(k, v)?,
                "theta" => self.theta = parse_num(k, v)?,
                "beta" => self.beta = parse_num(k, v)?,
                "boundary_sign" => {
                    self.boundary_sign = match v {
                        "negative" => BoundarySign::Negative,
                        "literal" => BoundarySign::Literal,
                        _ => return Err(Error::Config(format!("`boundary_sign`: unknown `{v}`"))),
                    }
                }
                "lor_enabled" => self.lor_enabled = parse_bool(k, v)?,
                "lor_color_threshold" => self.lor_color_threshold = parse_num(k, v)?,
                "scribble_stride" => self.scribble_stride = parse_num(k, v)?,
                "boundary_source" => {
                    self.boundary_source = match v {
                        "gradient" => BoundarySource::Gradient,
                        "learned" => BoundarySource::Learned,
                        "learned_plus_motion" => BoundarySource::LearnedPlusMotion,
                        _ => return Err(Error::Config(format!("`boundary_source`: unknown `{v}`"))),
                    }
                }
                "data_term_source" => {
                    self.data_term_source = match v {
                        "kde" => DataTermSource::Kde,
                        "cnn_probabilities" => DataTermSource::CnnProbabilities,
                        _ => return Err(Error::Config(format!("`data_term_source`: unknown `{v}`"))),
                    }
                }
                "max_iters" => self.solver.max_iters = parse_num(k, v)?,
                "extended_max_iters" => self.solver.extended_max_iters = parse_num(k, v)?,
                "extend_threshold" => self.solver.extend_threshold = parse_num(k, v)?,
                "min_decrease" => self.solver.min_decrease = parse_num(k, v)?,
                _ => {}
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be > 0, got {v}")))
            }
        };
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must lie in [0, 1], got {v}")))
            }
        };
        if let TauMode::Fixed(t) = self.tau_mode {
            positive("tau_mode", t)?;
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            positive("lambda_mode", l)?;
        }
        positive("sigma", self.sigma)?;
        positive("gamma", self.gamma)?;
        positive("beta", self.beta)?;
        positive("lor_color_threshold", self.lor_color_threshold)?;
        unit("alpha", self.alpha)?;
        unit("theta", self.theta)?;
        if self.scribble_stride == 0 {
            return Err(Error::Config("`scribble_stride` must be >= 1".into()));
        }
        self.solver.validate()
    }
}

impl fmt::Display for TauMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TauMode::Fixed(v) => write!(f, "fixed({v})"),
            TauMode::MeanFlowMagnitude => f.write_str("mean_flow_magnitude"),
        }
    }
}

impl fmt::Display for LambdaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaMode::Fixed(v) => write!(f, "fixed({v})"),
            LambdaMode::GridSearch => f.write_str("grid_search"),
        }
    }
}

impl fmt::Display for RunConfig {
    /// Writes the configuration in the key-value format read by
    /// [`RunConfig::from_text`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.boundary_sign {
            BoundarySign::Negative => "negative",
            BoundarySign::Literal => "literal",
        };
        let boundary = match self.boundary_source {
            BoundarySource::Gradient => "gradient",
            BoundarySource::Learned => "learned",
            BoundarySource::LearnedPlusMotion => "learned_plus_motion",
        };
        let data = match self.data_term_source {
            DataTermSource::Kde => "kde",
            DataTermSource::CnnProbabilities => "cnn_probabilities",
        };
        writeln!(f, "tau_mode = {}", self.tau_mode)?;
        writeln!(f, "lambda_mode = {}", self.lambda_mode)?;
        writeln!(f, "sigma = {}", self.sigma)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "theta = {}", self.theta)?;
        writeln!(f, "beta = {}", self.beta)?;
        writeln!(f, "boundary_sign = {sign}")?;
        writeln!(f, "lor_enabled = {}", self.lor_enabled)?;
        writeln!(f, "lor_color_threshold = {}", self.lor_color_threshold)?;
        writeln!(f, "scribble_stride = {}", self.scribble_stride)?;
        writeln!(f, "boundary_source = {boundary}")?;
        writeln!(f, "data_term_source = {data}")?;
        writeln!(f, "max_iters = {}", self.solver.max_iters)?;
        writeln!(f, "extended_max_iters = {}", self.solver.extended_max_iters)?;
        writeln!(f, "extend_threshold = {}", self.solver.extend_threshold)?;
        writeln!(f, "min_decrease = {}", self.solver.min_decrease)
    }
}
