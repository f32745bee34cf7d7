use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::volume::Axis;
use crate::error::{Error, Result};
use crate::model::{class_probability, NetworkModel, PATCH};
use crate::numcore::Tensor;
use crate::pgm::{quantize, GrayImage};
use crate::synthgen::{crop, normalize_unit, window_starts, Sample};

pub const REAL_WINDOW: usize = 20;
pub const REAL_STRIDE: usize = 10;

const PREDICT_BATCH: usize = 64;

fn source_coordinate(i: usize, from: usize, to: usize) -> f64 {
    if to <= 1 || from <= 1 {
        0.0
    } else {
        i as f64 * (from - 1) as f64 / (to - 1) as f64
    }
}

/// Bilinear resize of a row-major `[h x w]` grid with corners aligned.
pub fn resize_bilinear(data: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = source_coordinate(i, h, out_h);
        let y0 = (y.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f64;
        for j in 0..out_w {
            let x = source_coordinate(j, w, out_w);
            let x0 = (x.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f64;
            let top = data[y0 * w + x0] + fx * (data[y0 * w + x1] - data[y0 * w + x0]);
            let bottom = data[y1 * w + x0] + fx * (data[y1 * w + x1] - data[y1 * w + x0]);
            out.push(top + fy * (bottom - top));
        }
    }
    out
}

/// Nearest-neighbour resize with corners aligned.
pub fn resize_nearest(data: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = (source_coordinate(i, h, out_h).round() as usize).min(h - 1);
        for j in 0..out_w {
            let x = (source_coordinate(j, w, out_w).round() as usize).min(w - 1);
            out.push(data[y * w + x]);
        }
    }
    out
}

fn grid_dims(t: &Tensor<f64>, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::Dimension(format!("{what} must be a 2-D grid, got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn check_window(h: usize, w: usize, src: usize, stride: usize) -> Result<()> {
    if src == 0 || stride == 0 {
        return Err(Error::Config("window size and stride must be positive".into()));
    }
    if h < src || w < src {
        return Err(Error::Dimension(format!(
            "section {h}x{w} is smaller than the {src}x{src} window"
        )));
    }
    Ok(())
}

fn prepare_window(section: &[f64], width: usize, top: usize, left: usize, src: usize, dst: usize) -> Vec<f32> {
    let window = crop(section, width, top, left, src);
    normalize_unit(&resize_bilinear(&window, src, src, dst, dst))
}

/// Sliding `src x src` windows rescaled to `dst x dst`: bilinear and
/// normalized to `[-1, 1]` for amplitudes, nearest and re-binarized for masks.
pub fn real_patches(section: &Tensor<f64>, mask: &Tensor<f64>, src: usize, dst: usize, stride: usize) -> Result<Vec<Sample>> {
    let (h, w) = grid_dims(section, "section")?;
    if section.shape() != mask.shape() {
        return Err(Error::Dimension(format!(
            "mask {:?} does not match section {:?}",
            mask.shape(),
            section.shape()
        )));
    }
    check_window(h, w, src, stride)?;
    let mut out = Vec::new();
    for &top in &window_starts(h, src, stride) {
        for &left in &window_starts(w, src, stride) {
            let image = prepare_window(section.data(), w, top, left, src, dst);
            let m = resize_nearest(&crop(mask.data(), w, top, left, src), src, src, dst, dst)
                .into_iter()
                .map(|v| if v >= 0.5 { 1.0 } else { 0.0 })
                .collect();
            out.push(Sample {
                image: Tensor::new(&[dst, dst], image)?,
                mask: Tensor::new(&[dst, dst], m)?,
            });
        }
    }
    Ok(out)
}

/// Tiled inference with an arbitrary patch predictor.
///
/// `predict` maps a `[n x 1 x dst x dst]` batch to `[n x dst x dst]`
/// probabilities. Each window's map is resized back to `src x src` and
/// averaged where windows overlap; pixels no window covers are 0.
pub fn tile_predict_with(
    section: &Tensor<f64>,
    src: usize,
    dst: usize,
    stride: usize,
    mut predict: impl FnMut(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<Tensor<f64>> {
    let (h, w) = grid_dims(section, "section")?;
    check_window(h, w, src, stride)?;
    let corners: Vec<(usize, usize)> = window_starts(h, src, stride)
        .into_iter()
        .flat_map(|top| window_starts(w, src, stride).into_iter().map(move |left| (top, left)))
        .collect();
    let mut sum = vec![0.0; h * w];
    let mut hits = vec![0u32; h * w];
    for chunk in corners.chunks(PREDICT_BATCH) {
        let mut batch = Vec::with_capacity(chunk.len() * dst * dst);
        for &(top, left) in chunk {
            batch.extend(prepare_window(section.data(), w, top, left, src, dst));
        }
        let probs = predict(&Tensor::new(&[chunk.len(), 1, dst, dst], batch)?)?;
        if probs.shape() != [chunk.len(), dst, dst] {
            return Err(Error::Dimension(format!(
                "predictor returned {:?} for {} windows of {dst}x{dst}",
                probs.shape(),
                chunk.len()
            )));
        }
        for (k, &(top, left)) in chunk.iter().enumerate() {
            let p: Vec<f64> = probs.data()[k * dst * dst..(k + 1) * dst * dst].iter().map(|&v| v as f64).collect();
            let back = resize_bilinear(&p, dst, dst, src, src);
            for r in 0..src {
                for c in 0..src {
                    let at = (top + r) * w + left + c;
                    sum[at] += back[r * src + c];
                    hits[at] += 1;
                }
            }
        }
    }
    let map = sum
        .iter()
        .zip(&hits)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { (s / n as f64).clamp(0.0, 1.0) })
        .collect();
    Tensor::new(&[h, w], map)
}

/// Full-section heterogeneity confidence map from a trained network.
pub fn tile_predict(model: &NetworkModel<f32>, section: &Tensor<f64>, src: usize, stride: usize) -> Result<Tensor<f64>> {
    tile_predict_with(section, src, PATCH, stride, |x| Ok(class_probability(&model.forward(x)?)))
}

/// Output encoding of a confidence map.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFormat {
    Pgm,
    Csv,
}

impl MapFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MapFormat::Pgm => "pgm",
            MapFormat::Csv => "csv",
        }
    }
}

impl FromStr for MapFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(MapFormat::Pgm),
            "csv" => Ok(MapFormat::Csv),
            other => Err(Error::Config(format!("unknown map format {other:?} (pgm or csv)"))),
        }
    }
}

/// Encodes a `[H x W]` map in `[0, 1]` as PGM bytes (`round(255 p)`).
pub fn map_to_pgm(map: &Tensor<f64>) -> Result<GrayImage> {
    let (h, w) = grid_dims(map, "map")?;
    GrayImage::new(w, h, map.data().iter().map(|&p| quantize(p)).collect())
}

/// Encodes a map as comma-separated rows with shortest round-trip floats.
pub fn map_to_csv(map: &Tensor<f64>) -> Result<String> {
    let (_, w) = grid_dims(map, "map")?;
    let mut out = String::new();
    for row in map.data().chunks(w.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a confidence map as PGM or CSV.
pub fn export_map(map: &Tensor<f64>, path: &Path, format: MapFormat) -> Result<()> {
    if map.data().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("confidence map values must lie in [0, 1]".into()));
    }
    match format {
        MapFormat::Pgm => map_to_pgm(map)?.write(path),
        MapFormat::Csv => fs::write(path, map_to_csv(map)?).map_err(|e| Error::io(path, e)),
    }
}

/// File name of the annotation mask for one line, e.g. `mask_inline120.pgm`.
pub fn mask_file_name(axis: Axis, line: i32) -> String {
    format!("mask_{}{line}.pgm", axis.tag())
}

/// Converts a PGM annotation to a binary grid (pixels above 127 are positive).
pub fn mask_from_image(image: &GrayImage) -> Tensor<f64> {
    let data = image.pixels.iter().map(|&p| if p > 127 { 1.0 } else { 0.0 }).collect();
    Tensor::new(&[image.height, image.width], data).expect("image dimensions are consistent")
}

/// Loads `mask_<axis><line>.pgm` from `dir`, checking it matches `shape`.
pub fn load_mask(dir: &Path, axis: Axis, line: i32, shape: &[usize]) -> Result<Tensor<f64>> {
    let path = dir.join(mask_file_name(axis, line));
    if !path.exists() {
        return Err(Error::NotFound(format!("annotation mask {}", path.display())));
    }
    let mask = mask_from_image(&GrayImage::read(&path)?);
    if mask.shape() != shape {
        return Err(Error::Dimension(format!(
            "{} is {:?} but the section is {:?}",
            path.display(),
            mask.shape(),
            shape
        )));
    }
    Ok(mask)
}
