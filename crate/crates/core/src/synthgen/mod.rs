//! Synthetic seismic sections with fault masks.
//!
//! Each section runs reflectivity, fold, shear, faults, Ricker convolution
//! and noise, drawing from its own stream `Prng::derive(seed, index)`.

mod config;
mod dataset;
mod deform;
mod patches;
mod wavelet;

pub use config::{Span, SyntheticConfig};
pub use dataset::{read_dataset, read_dataset_limited, read_manifest, write_dataset, DatasetWriter, Manifest, DATASET_VERSION};
pub use deform::{
    apply_faults, apply_fold, apply_shear, dilate, displace, fault, fold, generate_reflectivity, rasterize_fault,
    shear, shift_columns, FaultParams, FoldParams,
};
pub use patches::{crop, extract_patches, normalize_unit, window_starts, Sample};
pub use wavelet::{add_noise, convolve_traces, ricker, ricker_length, rms};

use crate::error::Result;
use crate::model::PATCH;
use crate::numcore::{Prng, Tensor};

/// Overlap stride for synthetic patches.
pub const PATCH_STRIDE: usize = 22;

/// A generated section with everything needed to inspect it.
#[derive(Clone, Debug)]
pub struct SyntheticSection {
    pub image: Tensor<f64>,
    /// The section before noise.
    pub clean: Tensor<f64>,
    pub mask: Tensor<f64>,
    pub fold: FoldParams,
    pub shear: f64,
    pub faults: Vec<FaultParams>,
    pub period: f64,
    pub noise: f64,
}

/// Generates section `index` of the corpus described by `config`.
pub fn generate_section(config: &SyntheticConfig, index: u64) -> Result<SyntheticSection> {
    config.validate()?;
    let mut prng = Prng::derive(config.seed, index);
    let reflectivity = generate_reflectivity(config, &mut prng);
    let (folded, fold) = apply_fold(&reflectivity, config, &mut prng);
    let (sheared, shear) = apply_shear(&folded, config, &mut prng);
    let (faulted, mask, faults) = apply_faults(&sheared, config, &mut prng);
    let period = prng.uniform(config.period.min, config.period.max);
    let clean = convolve_traces(&faulted, &ricker(period, ricker_length(period))?);
    let noise = prng.uniform(config.noise.min, config.noise.max);
    let image = add_noise(&clean, noise, &mut prng);
    Ok(SyntheticSection {
        image,
        clean,
        mask,
        fold,
        shear,
        faults,
        period,
        noise,
    })
}

/// Patches of section `index`.
pub fn section_patches(config: &SyntheticConfig, index: u64, stride: usize) -> Result<Vec<Sample>> {
    let s = generate_section(config, index)?;
    extract_patches(&s.image, &s.mask, PATCH, stride)
}

/// Every patch of the corpus, in section order.
pub fn generate_samples(config: &SyntheticConfig, stride: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for i in 0..config.count as u64 {
        out.extend(section_patches(config, i, stride)?);
    }
    Ok(out)
}
