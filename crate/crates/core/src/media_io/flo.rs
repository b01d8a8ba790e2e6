//! Middlebury `.flo` container: `PIEH` tag, `i32` width and height, then
//! interleaved `f32` (u, v) pairs row-major, all little endian.

use std::fs;
use std::path::Path;

use super::{FlowDirection, FlowField};
use crate::error::{Error, Result};

/// The tag bytes; read as a little-endian `f32` they equal 202021.25.
pub const FLO_MAGIC: [u8; 4] = *b"PIEH";

/// Components with a larger magnitude mark unknown flow.
const SENTINEL_MAGNITUDE: f32 = 1e9;
const MAX_NAN_FRACTION: f64 = 0.10;
const MAX_SIDE: i32 = 1 << 15;

/// Pixels whose vectors were replaced by zero while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowLoadReport {
    pub sentinel_pixels: Vec<usize>,
    pub nan_pixels: Vec<usize>,
}

impl FlowLoadReport {
    pub fn is_clean(&self) -> bool {
        self.sentinel_pixels.is_empty() && self.nan_pixels.is_empty()
    }
}

pub fn load_flow(path: impl AsRef<Path>, direction: FlowDirection) -> Result<FlowField> {
    load_flow_with_report(path, direction).map(|(flow, _)| flow)
}

pub fn load_flow_with_report(
    path: impl AsRef<Path>,
    direction: FlowDirection,
) -> Result<(FlowField, FlowLoadReport)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, direction, path)
}

fn decode(bytes: &[u8], direction: FlowDirection, path: &Path) -> Result<(FlowField, FlowLoadReport)> {
    let corrupt = |msg: String| Error::CorruptFile { path: path.to_path_buf(), msg };
    if bytes.len() < 4 || bytes[..4] != FLO_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "not a .flo file (missing PIEH tag)".into(),
        });
    }
    if bytes.len() < 12 {
        return Err(corrupt("truncated header".into()));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if !(1..=MAX_SIDE).contains(&width) || !(1..=MAX_SIDE).contains(&height) {
        return Err(corrupt(format!("implausible dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = 12 + width * height * 8;
    if bytes.len() < expected {
        return Err(corrupt(format!("payload holds {} bytes, expected {expected}", bytes.len())));
    }

    let mut report = FlowLoadReport::default();
    let mut vectors = Vec::with_capacity(width * height);
    for (px, chunk) in bytes[12..expected].chunks_exact(8).enumerate() {
        let u = f32::from_le_bytes(chunk[..4].try_into().unwrap());
        let v = f32::from_le_bytes(chunk[4..].try_into().unwrap());
        if u.is_nan() || v.is_nan() {
            report.nan_pixels.push(px);
            vectors.push([0.0, 0.0]);
        } else if u.abs() > SENTINEL_MAGNITUDE || v.abs() > SENTINEL_MAGNITUDE {
            report.sentinel_pixels.push(px);
            vectors.push([0.0, 0.0]);
        } else {
            vectors.push([u, v]);
        }
    }
    let nan_fraction = report.nan_pixels.len() as f64 / (width * height) as f64;
    if nan_fraction > MAX_NAN_FRACTION {
        return Err(Error::RejectedInput(format!(
            "{}: {:.1}% of flow vectors are NaN",
            path.display(),
            100.0 * nan_fraction
        )));
    }
    let flow = FlowField::new(width, height, direction, vectors)?;
    Ok((flow, report))
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_flow(flow)).map_err(|e| Error::io(path, e))
}

fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(12 + flow.vectors().len() * 8);
    bytes.extend_from_slice(&FLO_MAGIC);
    bytes.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for [u, v] in flow.vectors() {
        bytes.extend_from_slice(&u.to_le_bytes());
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}
