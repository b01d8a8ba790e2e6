//! Label masks as paletted (or grayscale) PNG and binary PGM. The stored
//! palette index (or gray value) is the label.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::LabelMask;
use crate::error::{Error, Result};

/// Loads a mask. With `declared_labels`, labels only need to lie in
/// `0..declared_labels`; otherwise the count is inferred and labels must be
/// contiguous from 0.
pub fn load_mask(path: impl AsRef<Path>, declared_labels: Option<usize>) -> Result<LabelMask> {
    let path = path.as_ref();
    let (width, height, labels) =
        if has_extension(path, "png") { read_png_indices(path)? } else { read_gray_image(path)? };
    match declared_labels {
        Some(n) => LabelMask::new(width, height, n, labels),
        None => LabelMask::infer(width, height, labels),
    }
}

/// Writes `.pgm` for a `.pgm` path and a paletted PNG otherwise.
pub fn save_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if mask.num_labels() > 256 {
        return Err(Error::InvalidMask(format!(
            "{} labels do not fit an 8-bit container",
            mask.num_labels()
        )));
    }
    let bytes: Vec<u8> = mask.labels().iter().map(|&l| l as u8).collect();
    if has_extension(path, "pgm") {
        let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, bytes)
            .expect("buffer sized from mask");
        return img
            .save_with_format(path, image::ImageFormat::Pnm)
            .map_err(|source| Error::Image { path: path.to_path_buf(), source });
    }
    write_png_indexed(path, mask.width(), mask.height(), &bytes)
}

/// The 256-entry color palette used by the DAVIS annotations.
pub fn davis_palette() -> Vec<[u8; 3]> {
    (0..256u32)
        .map(|i| {
            let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
            let mut c = i;
            for j in 0..8 {
                r |= ((c & 1) as u8) << (7 - j);
                g |= (((c >> 1) & 1) as u8) << (7 - j);
                b |= (((c >> 2) & 1) as u8) << (7 - j);
                c >>= 3;
            }
            [r, g, b]
        })
        .collect()
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn png_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format { path: path.to_path_buf(), msg: format!("png: {e}") }
}

fn read_png_indices(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_error(path, e))?;
    let size = reader.output_buffer_size().ok_or_else(|| png_error(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_error(path, e))?;
    let (width, height) = (info.width as usize, info.height as usize);
    match info.color_type {
        png::ColorType::Indexed | png::ColorType::Grayscale => {}
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("mask must be paletted or single-channel, found {other:?}"),
            })
        }
    }
    let bits = info.bit_depth as usize;
    let mut labels = Vec::with_capacity(width * height);
    for row in buf.chunks(info.line_size).take(height) {
        for x in 0..width {
            let value = match bits {
                16 => u16::from_be_bytes([row[2 * x], row[2 * x + 1]]),
                8 => row[x] as u16,
                _ => {
                    let per_byte = 8 / bits;
                    let byte = row[x / per_byte];
                    let shift = 8 - bits * (x % per_byte + 1);
                    ((byte >> shift) & ((1u8 << bits) - 1)) as u16
                }
            };
            labels.push(value);
        }
    }
    Ok((width, height, labels))
}

fn read_gray_image(path: &Path) -> Result<(usize, usize, Vec<u16>)> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let labels = match img {
        image::DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(u16::from).collect(),
        image::DynamicImage::ImageLuma16(g) => g.into_raw(),
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                msg: format!("mask must be single-channel, found {:?}", other.color()),
            })
        }
    };
    Ok((width, height, labels))
}

fn write_png_indexed(path: &Path, width: usize, height: usize, indices: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Indexed);
    encoder.set_depth(png::BitDepth::Eight);
    let palette: Vec<u8> = davis_palette().into_iter().flatten().collect();
    encoder.set_palette(palette);
    let mut writer = encoder.write_header().map_err(|e| png_error(path, e))?;
    writer.write_image_data(indices).map_err(|e| png_error(path, e))?;
    writer.finish().map_err(|e| png_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn temp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("flowseg-mask-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn palette_starts_like_davis() {
        let p = davis_palette();
        assert_eq!(p[0], [0, 0, 0]);
        assert_eq!(p[1], [128, 0, 0]);
        assert_eq!(p[2], [0, 128, 0]);
        assert_eq!(p[3], [128, 128, 0]);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = temp_dir("pgm");
        let path = dir.join("m.pgm");
        let mask = LabelMask::new(3, 2, 3, vec![0, 1, 2, 2, 1, 0]).unwrap();
        save_mask(&mask, &path).unwrap();
        assert_eq!(load_mask(&path, None).unwrap(), mask);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn inferred_load_rejects_gaps() {
        let dir = temp_dir("gap");
        let path = dir.join("m.png");
        let mask = LabelMask::new(3, 1, 4, vec![0, 1, 3]).unwrap();
        save_mask(&mask, &path).unwrap();
        assert!(matches!(load_mask(&path, None), Err(Error::InvalidMask(_))));
        assert_eq!(load_mask(&path, Some(4)).unwrap(), mask);
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn rgb_png_is_not_a_mask() {
        let dir = temp_dir("rgb");
        let path = dir.join("rgb.png");
        image::RgbImage::new(2, 2).save(&path).unwrap();
        assert!(matches!(load_mask(&path, Some(2)), Err(Error::Format { .. })));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn grayscale_png_reads_values_as_labels() {
        let dir = temp_dir("gray");
        let path = dir.join("g.png");
        image::GrayImage::from_raw(2, 1, vec![0, 1]).unwrap().save(&path).unwrap();
        let mask = load_mask(&path, None).unwrap();
        assert_eq!(mask.labels(), &[0, 1]);
        std::fs::remove_dir_all(dir).ok();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn png_round_trip_preserves_labels(
            width in 1usize..9,
            height in 1usize..9,
            n in 2usize..6,
            raw in proptest::collection::vec(0u16..6, 64),
        ) {
            let labels: Vec<u16> = raw[..width * height].iter().map(|l| l % n as u16).collect();
            let mask = LabelMask::new(width, height, n, labels).unwrap();
            let dir = temp_dir("prop");
            let path = dir.join(format!("{width}x{height}x{n}.png"));
            save_mask(&mask, &path).unwrap();
            prop_assert_eq!(load_mask(&path, Some(n)).unwrap(), mask);
        }
    }
}
