//! 8-bit PNG map I/O.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};
use log::warn;
use spnet_core::map::GrayMap;
use spnet_core::tensor::Tensor;

use crate::{HarnessError, Result};

fn image_error(path: &Path, message: impl ToString) -> HarnessError {
    HarnessError::Image { path: path.to_path_buf(), message: message.to_string() }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path).map_err(|e| HarnessError::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| HarnessError::io(path, e))?;
    reader.decode().map_err(|e| image_error(path, e))
}

/// Grey levels `0..=255` per pixel. Colour images are averaged to grey with a
/// warning; 16-bit and float images are rejected.
fn gray_levels(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let levels = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(g) => {
            warn!("{}: ignoring alpha channel", path.display());
            g.pixels().map(|p| f64::from(p.0[0])).collect()
        }
        DynamicImage::ImageRgb8(rgb) => {
            warn!("{}: colour map averaged to grey", path.display());
            rgb.pixels().map(|p| p.0.iter().map(|&c| f64::from(c)).sum::<f64>() / 3.0).collect()
        }
        DynamicImage::ImageRgba8(rgba) => {
            warn!("{}: colour map averaged to grey", path.display());
            rgba.pixels().map(|p| p.0[..3].iter().map(|&c| f64::from(c)).sum::<f64>() / 3.0).collect()
        }
        other => return Err(image_error(path, format!("unsupported pixel format {:?}; expected 8-bit", other.color()))),
    };
    Ok((h, w, levels))
}

/// Loads a prediction or depth map scaled to `[0, 1]`.
pub fn load_map(path: impl AsRef<Path>) -> Result<GrayMap> {
    let path = path.as_ref();
    let (h, w, levels) = gray_levels(path)?;
    Ok(GrayMap::new(h, w, levels.into_iter().map(|v| v / 255.0).collect()).expect("decoded dimensions"))
}

/// Loads a ground-truth mask binarized at grey level 128.
pub fn load_mask(path: impl AsRef<Path>) -> Result<GrayMap> {
    let path = path.as_ref();
    let (h, w, levels) = gray_levels(path)?;
    Ok(GrayMap::new(h, w, levels.into_iter().map(|v| if v >= 128.0 { 1.0 } else { 0.0 }).collect())
        .expect("decoded dimensions"))
}

/// `round_half_up(clamp(v, 0, 1) * 255)`.
pub fn to_level(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn save_map(map: &GrayMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = map.data().iter().map(|&v| to_level(v)).collect();
    let img = GrayImage::from_raw(map.width() as u32, map.height() as u32, bytes).expect("buffer matches dimensions");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| image_error(path, e))
}

/// Loads an RGB image as a `(1, 3, H, W)` tensor in `[0, 1]`; grey images are
/// replicated across channels.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = decode(path)?;
    let rgb = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) => {
            img.to_rgb8()
        }
        other => return Err(image_error(path, format!("unsupported pixel format {:?}; expected 8-bit", other.color()))),
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| f64::from(rgb.get_pixel(x as u32, y as u32).0[c]) / 255.0))
}

pub fn save_rgb(t: &Tensor, n: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (t.height(), t.width());
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb([0, 1, 2].map(|c| to_level(t.at(n, c, y as usize, x as usize))))
    });
    img.save_with_format(path, ImageFormat::Png).map_err(|e| image_error(path, e))
}

pub fn create_dir(path: impl AsRef<Path>) -> Result<()> {
    fs::create_dir_all(path.as_ref()).map_err(|e| HarnessError::io(path.as_ref(), e))
}

pub fn write_file(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path.as_ref(), contents).map_err(|e| HarnessError::io(path.as_ref(), e))
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

/// PNG files in `dir` keyed by file stem, sorted.
pub fn png_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        let is_png = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Pairs files of two directories by stem. Any file without a partner makes
/// the whole pairing fail, listing every unpaired name.
pub fn pair_by_stem(left: &Path, right: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let a = png_stems(left)?;
    let b = png_stems(right)?;
    let mut unpaired = Vec::new();
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x.0 == y.0 => {
                pairs.push((x.0.clone(), x.1.clone(), y.1.clone()));
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 => {
                unpaired.push(x.1.display().to_string());
                i += 1;
            }
            (Some(x), None) => {
                unpaired.push(x.1.display().to_string());
                i += 1;
            }
            (_, Some(y)) => {
                unpaired.push(y.1.display().to_string());
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if !unpaired.is_empty() {
        return Err(HarnessError::validation(format!("unpaired files: {}", unpaired.join(", "))));
    }
    if pairs.is_empty() {
        return Err(HarnessError::validation(format!(
            "no PNG pairs found in {} and {}",
            left.display(),
            right.display()
        )));
    }
    Ok(pairs)
}
