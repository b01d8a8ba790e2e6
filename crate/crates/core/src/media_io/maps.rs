use std::path::Path;

use image::DynamicImage;

use super::{BoundaryMap, Frame, ProbabilityMaps};
use crate::error::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Loads any supported color or gray image as an RGB frame in `[0, 255]`.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let img = open(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            img.to_rgb16().pixels().map(|p| p.0.map(|c| c as f64 / 257.0)).collect()
        }
        _ => img.to_rgb8().pixels().map(|p| p.0.map(f64::from)).collect(),
    };
    Frame::new(width, height, pixels)
}

/// Writes an 8-bit RGB image, rounding channel values.
pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> =
        frame.pixels().iter().flat_map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8)).collect();
    image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, raw)
        .expect("buffer sized from frame")
        .save(path)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Single-channel 8- or 16-bit image scaled to `[0, 1]` by the container's
/// maximum value.
fn load_unit_plane(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = open(path)?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("expected an 8/16-bit single-channel map, found {:?}", other.color()),
            })
        }
    };
    Ok((width, height, values))
}

pub fn load_boundary(path: impl AsRef<Path>) -> Result<BoundaryMap> {
    let (width, height, values) = load_unit_plane(path.as_ref())?;
    BoundaryMap::new(width, height, values)
}

/// One single-channel map per label, in label order.
pub fn load_probability_maps<P: AsRef<Path>>(paths: &[P]) -> Result<ProbabilityMaps> {
    let mut planes = Vec::with_capacity(paths.len());
    let mut dims = None;
    for path in paths {
        let (width, height, values) = load_unit_plane(path.as_ref())?;
        match dims {
            None => dims = Some((width, height)),
            Some(d) if d != (width, height) => {
                return Err(Error::SequenceInconsistency(format!(
                    "{}: probability map is {width}x{height}, expected {}x{}",
                    path.as_ref().display(),
                    d.0,
                    d.1
                )))
            }
            Some(_) => {}
        }
        planes.push(values);
    }
    let (width, height) = dims.ok_or_else(|| Error::RejectedInput("no probability maps".into()))?;
    ProbabilityMaps::from_planes(width, height, &planes)
}
