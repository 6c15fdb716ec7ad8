use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian_blur, Dataset, Image};
use crate::error::{invalid, CdlError, Result};

/// Training-set construction from images.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchOptions {
    pub size: usize,
    pub stride: usize,
    /// Keep at most this many patches, chosen by `seed` and kept in scan
    /// order.
    pub max_patches: Option<usize>,
    pub seed: u64,
    /// Samples are multiplied by this before centering; 255 puts errors in
    /// 8-bit gray levels.
    pub pixel_scale: f64,
}

impl Default for PatchOptions {
    fn default() -> Self {
        Self {
            size: 8,
            stride: 1,
            max_patches: None,
            seed: 0,
            pixel_scale: 255.0,
        }
    }
}

fn subset(count: usize, opts: &PatchOptions) -> Vec<usize> {
    match opts.max_patches {
        Some(k) if k < count => {
            let mut picked = index::sample(&mut ChaCha8Rng::seed_from_u64(opts.seed), count, k).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..count).collect(),
    }
}

/// Extracted, subsampled, scaled and mean-centered patches of one image.
pub fn patch_set(image: &Image, opts: &PatchOptions) -> Result<Dataset> {
    let all = extract_patches(image, opts.size, opts.stride)?;
    let picked = all.select(&subset(all.count(), opts))?;
    Ok(mean_center(&picked.scaled(opts.pixel_scale)?))
}

/// Aligned patch pairs of `image` (space 1) and its Gaussian blur (space
/// 2). Each space is centered with its own means.
pub fn blur_pairs(image: &Image, sigma: f64, opts: &PatchOptions) -> Result<(Dataset, Dataset)> {
    let blurred = gaussian_blur(image, sigma)?;
    Ok((patch_set(image, opts)?, patch_set(&blurred, opts)?))
}

fn offsets(extent: usize, size: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=extent - size).step_by(stride)
}

/// Cuts `size x size` patches at the given stride.
///
/// Patches are enumerated left-to-right, then top-to-bottom; each column is
/// the patch flattened in row-major order.
pub fn extract_patches(image: &Image, size: usize, stride: usize) -> Result<Dataset> {
    if size == 0 || stride == 0 {
        return invalid("patch size and stride must be positive");
    }
    if size > image.width().min(image.height()) {
        return invalid(format!(
            "patch size {size} exceeds image {}x{}",
            image.width(),
            image.height()
        ));
    }
    let xs: Vec<usize> = offsets(image.width(), size, stride).collect();
    let ys: Vec<usize> = offsets(image.height(), size, stride).collect();
    let dim = size * size;
    let mut data = Vec::with_capacity(dim * xs.len() * ys.len());
    for &y0 in &ys {
        for &x0 in &xs {
            for y in y0..y0 + size {
                let row = y * image.width();
                data.extend_from_slice(&image.samples()[row + x0..row + x0 + size]);
            }
        }
    }
    Dataset::from_col_major(dim, xs.len() * ys.len(), data)
}

/// Writes patches back to their positions. Overlapping pixels take the value
/// of the last patch covering them; uncovered pixels are `None`.
pub fn reassemble_patches(
    data: &Dataset,
    width: usize,
    height: usize,
    size: usize,
    stride: usize,
) -> Result<Vec<Option<f64>>> {
    if size == 0 || stride == 0 || size > width.min(height) {
        return invalid("invalid patch geometry");
    }
    let xs: Vec<usize> = offsets(width, size, stride).collect();
    let ys: Vec<usize> = offsets(height, size, stride).collect();
    if data.dim() != size * size || data.count() != xs.len() * ys.len() {
        return Err(CdlError::ShapeMismatch(format!(
            "dataset {}x{} does not match {} patches of {}x{}",
            data.dim(),
            data.count(),
            xs.len() * ys.len(),
            size,
            size
        )));
    }
    let mut out = vec![None; width * height];
    let mut i = 0;
    for &y0 in &ys {
        for &x0 in &xs {
            let patch = data.column(i);
            for dy in 0..size {
                for dx in 0..size {
                    out[(y0 + dy) * width + x0 + dx] = Some(patch[dy * size + dx]);
                }
            }
            i += 1;
        }
    }
    Ok(out)
}

/// Subtracts each signal's mean. Means already stored on the input are
/// accumulated so [`Dataset::restore_means`] still recovers the original.
pub fn mean_center(data: &Dataset) -> Dataset {
    let m = data.dim();
    let mut out = Vec::with_capacity(data.as_slice().len());
    let mut means = Vec::with_capacity(data.count());
    for i in 0..data.count() {
        let c = data.column(i);
        let mean = c.iter().sum::<f64>() / m as f64;
        out.extend(c.iter().map(|v| v - mean));
        means.push(mean + data.means().map_or(0.0, |prev| prev[i]));
    }
    Dataset::from_col_major(m, data.count(), out)
        .and_then(|d| d.with_means(means))
        .expect("centering preserves shape and finiteness")
}
