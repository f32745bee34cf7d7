//! Dataset directory: `manifest.json`, `img_%06d.f32` (little-endian f32,
//! row-major) and `msk_%06d.pgm` (P5, 0 background, 255 heterogeneity).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor;
use crate::pgm::GrayImage;

use super::config::SyntheticConfig;
use super::patches::Sample;

pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub count: usize,
    pub patch: usize,
    pub seed: u64,
    /// `synthetic` or `segy`.
    pub source: String,
    /// Generator settings for synthetic corpora.
    pub config: Option<SyntheticConfig>,
}

fn image_name(i: usize) -> String {
    format!("img_{i:06}.f32")
}

fn mask_name(i: usize) -> String {
    format!("msk_{i:06}.pgm")
}

/// Writes samples one at a time so a corpus never has to fit in memory.
pub struct DatasetWriter {
    dir: PathBuf,
    patch: Option<usize>,
    written: usize,
}

impl DatasetWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(DatasetWriter {
            dir: dir.to_path_buf(),
            patch: None,
            written: 0,
        })
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        let side = sample.image.shape()[0];
        if sample.image.shape() != [side, side] || sample.mask.shape() != sample.image.shape() {
            return Err(Error::Dimension(format!(
                "sample image {:?} and mask {:?} must be equal squares",
                sample.image.shape(),
                sample.mask.shape()
            )));
        }
        if *self.patch.get_or_insert(side) != side {
            return Err(Error::Dimension(format!(
                "sample side {side} differs from earlier samples"
            )));
        }
        let i = self.written;
        let mut bytes = Vec::with_capacity(4 * sample.image.len());
        for v in sample.image.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = self.dir.join(image_name(i));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let mut pixels = Vec::with_capacity(sample.mask.len());
        for &v in sample.mask.data() {
            pixels.push(match v {
                0.0 => 0,
                1.0 => 255,
                other => return Err(Error::Label(format!("mask value {other} is not binary"))),
            });
        }
        GrayImage::new(side, side, pixels)?.write(&self.dir.join(mask_name(i)))?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    /// Writes the manifest; `count` and `patch` are filled in from the samples.
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.version = DATASET_VERSION;
        manifest.count = self.written;
        manifest.patch = self.patch.unwrap_or(manifest.patch);
        let path = self.dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn write_dataset(samples: &[Sample], dir: &Path, manifest: Manifest) -> Result<Manifest> {
    let mut w = DatasetWriter::create(dir)?;
    for s in samples {
        w.push(s)?;
    }
    w.finish(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: malformed manifest: {e}", path.display())))?;
    if manifest.version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported dataset version {}",
            path.display(),
            manifest.version
        )));
    }
    if manifest.patch == 0 {
        return Err(Error::Format(format!("{}: patch size 0", path.display())));
    }
    Ok(manifest)
}

/// Reads the first `limit` samples (all when `None`).
pub fn read_dataset_limited(dir: &Path, limit: Option<usize>) -> Result<(Manifest, Vec<Sample>)> {
    if !dir.is_dir() {
        return Err(Error::NotFound(format!("dataset directory {} does not exist", dir.display())));
    }
    let manifest = read_manifest(dir)?;
    let side = manifest.patch;
    let n = limit.map_or(manifest.count, |l| l.min(manifest.count));
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let path = dir.join(image_name(i));
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != 4 * side * side {
            return Err(Error::Format(format!(
                "{}: {} bytes, expected {}",
                path.display(),
                bytes.len(),
                4 * side * side
            )));
        }
        let image: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let path = dir.join(mask_name(i));
        let mask = GrayImage::read(&path)?;
        if mask.width != side || mask.height != side {
            return Err(Error::Format(format!(
                "{}: mask is {}x{}, expected {side}x{side}",
                path.display(),
                mask.width,
                mask.height
            )));
        }
        let mut m = Vec::with_capacity(side * side);
        for &p in &mask.pixels {
            m.push(match p {
                0 => 0.0,
                255 => 1.0,
                other => {
                    return Err(Error::Format(format!("{}: mask value {other} is not 0 or 255", path.display())))
                }
            });
        }
        samples.push(Sample {
            image: Tensor::new(&[side, side], image)?,
            mask: Tensor::new(&[side, side], m)?,
        });
    }
    Ok((manifest, samples))
}

pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Sample>)> {
    read_dataset_limited(dir, None)
}
