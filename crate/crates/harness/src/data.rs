//! Training triples and their on-disk layout (`rgb/`, `depth/`, `gt/`
//! subdirectories of PNGs paired by stem).

use std::path::Path;

use spnet_core::map::GrayMap;
use spnet_core::tensor::Tensor;

use crate::{io, HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    /// `(1, 3, S, S)`.
    pub rgb: Tensor,
    /// `(1, 1, S, S)`.
    pub depth: Tensor,
    /// `(1, 1, S, S)`, binary.
    pub gt: Tensor,
}

/// Resizes every channel of a `(1, C, H, W)` tensor bilinearly.
pub fn resize_channels(t: &Tensor, height: usize, width: usize) -> Tensor {
    if t.height() == height && t.width() == width {
        return t.clone();
    }
    let planes: Vec<GrayMap> =
        (0..t.channels()).map(|c| GrayMap::from_tensor_plane(t, 0, c).resize_bilinear(height, width)).collect();
    Tensor::from_fn([1, t.channels(), height, width], |_, c, y, x| planes[c].get(y, x))
}

fn mask_tensor(gt: &GrayMap, size: usize) -> Tensor {
    gt.resize_nearest(size, size).to_tensor()
}

pub fn load_dataset(dir: &Path, size: usize) -> Result<Vec<Sample>> {
    let rgb_gt = io::pair_by_stem(&dir.join("rgb"), &dir.join("gt"))?;
    let depth_gt = io::pair_by_stem(&dir.join("depth"), &dir.join("gt"))?;
    debug_assert_eq!(rgb_gt.len(), depth_gt.len());
    rgb_gt
        .into_iter()
        .zip(depth_gt)
        .map(|((name, rgb_path, gt_path), (_, depth_path, _))| {
            let rgb = io::load_rgb(&rgb_path)?;
            let depth = io::load_map(&depth_path)?;
            let gt = io::load_mask(&gt_path)?;
            if (rgb.height(), rgb.width()) != gt.dims() || depth.dims() != gt.dims() {
                return Err(HarnessError::validation(format!("{name}: rgb, depth and gt sizes differ")));
            }
            Ok(Sample {
                name,
                rgb: resize_channels(&rgb, size, size),
                depth: resize_channels(&depth.to_tensor(), size, size),
                gt: mask_tensor(&gt, size),
            })
        })
        .collect()
}

pub fn save_dataset(samples: &[Sample], dir: &Path) -> Result<()> {
    for sub in ["rgb", "depth", "gt"] {
        io::create_dir(dir.join(sub))?;
    }
    for s in samples {
        let file = format!("{}.png", s.name);
        io::save_rgb(&s.rgb, 0, dir.join("rgb").join(&file))?;
        io::save_map(&GrayMap::from_tensor_plane(&s.depth, 0, 0), dir.join("depth").join(&file))?;
        io::save_map(&GrayMap::from_tensor_plane(&s.gt, 0, 0), dir.join("gt").join(&file))?;
    }
    Ok(())
}

/// Stacks samples into `(rgb, depth, gt)` batch tensors.
pub fn stack(samples: &[&Sample]) -> Result<(Tensor, Tensor, Tensor)> {
    let rgb: Vec<Tensor> = samples.iter().map(|s| s.rgb.clone()).collect();
    let depth: Vec<Tensor> = samples.iter().map(|s| s.depth.clone()).collect();
    let gt: Vec<Tensor> = samples.iter().map(|s| s.gt.clone()).collect();
    Ok((Tensor::stack_batch(&rgb)?, Tensor::stack_batch(&depth)?, Tensor::stack_batch(&gt)?))
}
