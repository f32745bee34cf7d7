use crate::error::{Error, Result};
use crate::numcore::Tensor;

/// One training example: a `44 x 44` image in `[-1, 1]` and its binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

/// Min-max normalization to `[-1, 1]`; constant input maps to zeros.
pub fn normalize_unit(values: &[f64]) -> Vec<f32> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    let span = hi - lo;
    values
        .iter()
        .map(|&v| (2.0 * ((v - lo) / span) - 1.0).clamp(-1.0, 1.0) as f32)
        .collect()
}

/// Top-left corners of sliding windows along one axis.
pub fn window_starts(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len < window || stride == 0 {
        return Vec::new();
    }
    (0..=len - window).step_by(stride).collect()
}

/// Copies the `size x size` window at `(top, left)` of a row-major `[H x W]` grid.
pub fn crop(data: &[f64], width: usize, top: usize, left: usize, size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(size * size);
    for z in top..top + size {
        out.extend_from_slice(&data[z * width + left..z * width + left + size]);
    }
    out
}

/// Sliding-window patches; images are normalized per patch, masks cropped as is.
pub fn extract_patches(section: &Tensor<f64>, mask: &Tensor<f64>, patch: usize, stride: usize) -> Result<Vec<Sample>> {
    if section.rank() != 2 || section.shape() != mask.shape() {
        return Err(Error::Dimension(format!(
            "section {:?} and mask {:?} must be matching 2-D grids",
            section.shape(),
            mask.shape()
        )));
    }
    let (h, w) = (section.shape()[0], section.shape()[1]);
    if h < patch || w < patch {
        return Err(Error::Dimension(format!(
            "section {h}x{w} is smaller than the {patch}x{patch} patch"
        )));
    }
    if stride == 0 {
        return Err(Error::Config("patch stride must be positive".into()));
    }
    let mut out = Vec::new();
    for &top in &window_starts(h, patch, stride) {
        for &left in &window_starts(w, patch, stride) {
            let image = normalize_unit(&crop(section.data(), w, top, left, patch));
            let m: Vec<f32> = crop(mask.data(), w, top, left, patch).into_iter().map(|v| v as f32).collect();
            out.push(Sample {
                image: Tensor::new(&[patch, patch], image)?,
                mask: Tensor::new(&[patch, patch], m)?,
            });
        }
    }
    Ok(out)
}
