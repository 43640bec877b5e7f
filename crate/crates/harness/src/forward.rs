//! Saliency maps for one RGB-D pair from saved weights.

use std::path::{Path, PathBuf};

use spnet_core::map::GrayMap;
use spnet_core::model::{probabilities, SpNet};
use spnet_core::tensor::{io as weights, precision, Tensor};

use crate::config::RunConfig;
use crate::data::resize_channels;
use crate::{io, HarnessError, Result};

/// Runs the model at its input size and writes `<stem>_shared.png` (plus
/// `<stem>_rgb.png` and `<stem>_depth.png` when the model has
/// modality-specific decoders) at the size of the RGB input.
pub fn forward_files(run: &RunConfig, weights_path: &Path, rgb_path: &Path, depth_path: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    run.model.validate()?;
    let mut model = SpNet::new(run.model.clone())?;
    weights::load_into(model.params_mut(), weights_path)
        .map_err(|e| HarnessError::validation(format!("{}: {e}", weights_path.display())))?;
    let rgb = io::load_rgb(rgb_path)?;
    let depth = io::load_map(depth_path)?;
    let (h, w) = (rgb.height(), rgb.width());
    if depth.dims() != (h, w) {
        return Err(HarnessError::validation(format!(
            "rgb is {h}x{w} but depth is {}x{}",
            depth.height(),
            depth.width()
        )));
    }
    let maps = precision::scoped(run.precision, || forward_maps(&model, &rgb, &depth.to_tensor()))?;
    let stem = rgb_path.file_stem().and_then(|s| s.to_str()).unwrap_or("pred");
    io::create_dir(out)?;
    let mut written = Vec::new();
    for (suffix, map) in maps {
        let path = out.join(format!("{stem}_{suffix}.png"));
        io::save_map(&map.resize_bilinear(h, w), &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Probability maps at the model's input size, labelled `shared`, `rgb`,
/// `depth`.
pub fn forward_maps(model: &SpNet, rgb: &Tensor, depth: &Tensor) -> Result<Vec<(&'static str, GrayMap)>> {
    let s = model.config().input_size;
    let out = model.predict(&resize_channels(rgb, s, s), &resize_channels(depth, s, s))?;
    let mut maps = vec![("shared", GrayMap::from_tensor_plane(&probabilities(&out.s_shared), 0, 0))];
    if let (Some(r), Some(d)) = (&out.s_rgb, &out.s_depth) {
        maps.push(("rgb", GrayMap::from_tensor_plane(&probabilities(r), 0, 0)));
        maps.push(("depth", GrayMap::from_tensor_plane(&probabilities(d), 0, 0)));
    }
    Ok(maps)
}
