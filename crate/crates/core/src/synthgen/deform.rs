use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::numcore::{Prng, Tensor};

use super::config::SyntheticConfig;

fn dims(section: &Tensor<f64>) -> (usize, usize) {
    (section.shape()[0], section.shape()[1])
}

/// Horizontally layered reflectivity: spikes uniform in `[-1, 1]` at layer
/// boundaries, identical in every trace.
pub fn generate_reflectivity(config: &SyntheticConfig, prng: &mut Prng) -> Tensor<f64> {
    let (h, w) = (config.height, config.width);
    let thickness = |p: &mut Prng| p.uniform_int(config.thickness.min as i64, config.thickness.max as i64) as usize;
    let mut trace = vec![0.0; h];
    let mut depth = thickness(prng);
    while depth < h {
        trace[depth] = prng.uniform(-1.0, 1.0);
        depth += thickness(prng);
    }
    Tensor::from_fn(&[h, w], |i| trace[i / w])
}

/// Moves column `x` down by `shift(x)` samples with linear interpolation;
/// samples pulled from outside the section are zero.
pub fn shift_columns(section: &Tensor<f64>, shift: impl Fn(usize) -> f64) -> Tensor<f64> {
    let (h, w) = dims(section);
    let src = section.data();
    let at = |z: isize, x: usize| {
        if z < 0 || z >= h as isize {
            0.0
        } else {
            src[z as usize * w + x]
        }
    };
    let mut out = vec![0.0; h * w];
    for x in 0..w {
        let d = shift(x);
        for z in 0..h {
            let pos = z as f64 - d;
            let z0 = pos.floor();
            let frac = pos - z0;
            let (a, b) = (at(z0 as isize, x), at(z0 as isize + 1, x));
            out[z * w + x] = a + frac * (b - a);
        }
    }
    Tensor::new(&[h, w], out).expect("same shape as input")
}

/// Sinusoidal fold `d(x) = a sin(2 pi x / lambda + phi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldParams {
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase: f64,
}

impl FoldParams {
    pub fn sample(config: &SyntheticConfig, prng: &mut Prng) -> Self {
        FoldParams {
            amplitude: prng.uniform(config.fold_amplitude.min, config.fold_amplitude.max),
            wavelength: prng.uniform(config.fold_wavelength.min, config.fold_wavelength.max),
            phase: prng.uniform(0.0, 2.0 * PI),
        }
    }

    pub fn displacement(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * PI * x / self.wavelength + self.phase).sin()
    }
}

pub fn fold(section: &Tensor<f64>, params: &FoldParams) -> Tensor<f64> {
    shift_columns(section, |x| params.displacement(x as f64))
}

pub fn apply_fold(section: &Tensor<f64>, config: &SyntheticConfig, prng: &mut Prng) -> (Tensor<f64>, FoldParams) {
    let params = FoldParams::sample(config, prng);
    (fold(section, &params), params)
}

/// Linear shear `s(x) = slope * x`.
pub fn shear(section: &Tensor<f64>, slope: f64) -> Tensor<f64> {
    shift_columns(section, |x| slope * x as f64)
}

pub fn apply_shear(section: &Tensor<f64>, config: &SyntheticConfig, prng: &mut Prng) -> (Tensor<f64>, f64) {
    let slope = prng.uniform(config.shear.min, config.shear.max);
    (shear(section, slope), slope)
}

/// A planar fault crossing the section at mid-depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultParams {
    /// Trace position where the fault crosses the middle row.
    pub center: f64,
    /// Dip from horizontal, degrees.
    pub dip: f64,
    /// Vertical displacement of the hanging side, samples.
    pub throw: usize,
    /// Whether the fault leans toward larger trace numbers with depth.
    pub dips_right: bool,
}

impl FaultParams {
    pub fn sample(config: &SyntheticConfig, prng: &mut Prng) -> Self {
        let w = config.width as f64;
        FaultParams {
            center: prng.uniform(0.25 * w, 0.75 * w),
            dip: prng.uniform(config.dip.min, config.dip.max),
            throw: prng.uniform_int(config.throw.min as i64, config.throw.max as i64) as usize,
            dips_right: prng.unit() < 0.5,
        }
    }

    /// Trace position of the fault plane at depth `z` in a section of `height` rows.
    pub fn trace_at(&self, z: f64, height: usize) -> f64 {
        let run = (z - height as f64 / 2.0) / self.dip.to_radians().tan();
        if self.dips_right {
            self.center + run
        } else {
            self.center - run
        }
    }

    /// Samples strictly right of the plane form the hanging side.
    pub fn on_hanging_side(&self, z: usize, x: usize, height: usize) -> bool {
        x as f64 > self.trace_at(z as f64, height)
    }
}

/// Marks the nearest trace to the fault plane in every row.
pub fn rasterize_fault(params: &FaultParams, height: usize, width: usize) -> Tensor<f64> {
    let mut mask = Tensor::zeros(&[height, width]);
    for z in 0..height {
        let x = params.trace_at(z as f64, height).round();
        if x >= 0.0 && x < width as f64 {
            mask.data_mut()[z * width + x as usize] = 1.0;
        }
    }
    mask
}

/// Binary dilation with a `(2r+1) x (2r+1)` square.
pub fn dilate(mask: &Tensor<f64>, radius: usize) -> Tensor<f64> {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = dims(mask);
    let src = mask.data();
    // Separable: rows then columns.
    let mut rows = vec![0.0; h * w];
    for z in 0..h {
        for x in 0..w {
            if src[z * w + x] != 0.0 {
                for xx in x.saturating_sub(radius)..(x + radius + 1).min(w) {
                    rows[z * w + xx] = 1.0;
                }
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for z in 0..h {
        for x in 0..w {
            if rows[z * w + x] != 0.0 {
                for zz in z.saturating_sub(radius)..(z + radius + 1).min(h) {
                    out[zz * w + x] = 1.0;
                }
            }
        }
    }
    Tensor::new(&[h, w], out).expect("same shape as input")
}

/// Shifts the hanging side of `section` down by the fault throw.
pub fn displace(section: &Tensor<f64>, params: &FaultParams) -> Tensor<f64> {
    let (h, w) = dims(section);
    let src = section.data();
    let t = params.throw;
    Tensor::from_fn(&[h, w], |i| {
        let (z, x) = (i / w, i % w);
        if params.on_hanging_side(z, x, h) {
            if z >= t {
                src[(z - t) * w + x]
            } else {
                0.0
            }
        } else {
            src[i]
        }
    })
}

/// Applies the faults in order. Each later fault also displaces the masks
/// of the faults before it.
pub fn fault(section: &Tensor<f64>, faults: &[FaultParams], dilation: usize) -> (Tensor<f64>, Tensor<f64>) {
    let (h, w) = dims(section);
    let mut out = section.clone();
    let mut mask = Tensor::zeros(&[h, w]);
    for params in faults {
        out = displace(&out, params);
        mask = displace(&mask, params);
        let trace = dilate(&rasterize_fault(params, h, w), dilation);
        mask = mask.zip_map(&trace, f64::max).expect("same shape");
    }
    (out, mask)
}

pub fn apply_faults(
    section: &Tensor<f64>,
    config: &SyntheticConfig,
    prng: &mut Prng,
) -> (Tensor<f64>, Tensor<f64>, Vec<FaultParams>) {
    let n = prng.uniform_int(config.faults.min as i64, config.faults.max as i64) as usize;
    let faults: Vec<FaultParams> = (0..n).map(|_| FaultParams::sample(config, prng)).collect();
    let (out, mask) = fault(section, &faults, config.dilation);
    (out, mask, faults)
}
