use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::{Prng, Tensor};

/// Ricker wavelet `(1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)` with
/// `f = 1 / peak_period`, sampled at integer `t` centred on zero.
pub fn ricker(peak_period: f64, length: usize) -> Result<Tensor<f64>> {
    if length % 2 == 0 {
        return Err(Error::Dimension(format!("ricker length {length} must be odd")));
    }
    if !(peak_period > 0.0) {
        return Err(Error::Config(format!("ricker period {peak_period} must be positive")));
    }
    let f = 1.0 / peak_period;
    let c = (length / 2) as isize;
    Ok(Tensor::from_fn(&[length], |i| {
        let t = (i as isize - c).unsigned_abs() as f64;
        let a = PI * PI * f * f * t * t;
        (1.0 - 2.0 * a) * (-a).exp()
    }))
}

/// Odd length covering 1.5 periods either side of the peak.
pub fn ricker_length(peak_period: f64) -> usize {
    2 * (1.5 * peak_period).ceil() as usize + 1
}

/// Same-length, zero-padded convolution of every column with `wavelet`.
pub fn convolve_traces(section: &Tensor<f64>, wavelet: &Tensor<f64>) -> Tensor<f64> {
    let (h, w) = (section.shape()[0], section.shape()[1]);
    let (wv, c) = (wavelet.data(), wavelet.len() / 2);
    let src = section.data();
    let mut out = vec![0.0; h * w];
    for z in 0..h {
        let row = &mut out[z * w..(z + 1) * w];
        for (k, &wk) in wv.iter().enumerate() {
            // out[z] += in[z - (k - c)] * w[k]
            let j = z as isize + c as isize - k as isize;
            if j < 0 || j >= h as isize {
                continue;
            }
            let src_row = &src[j as usize * w..(j as usize + 1) * w];
            for (o, &s) in row.iter_mut().zip(src_row) {
                *o += s * wk;
            }
        }
    }
    Tensor::new(&[h, w], out).expect("same shape as input")
}

pub fn rms(section: &Tensor<f64>) -> f64 {
    (section.data().iter().map(|v| v * v).sum::<f64>() / section.len() as f64).sqrt()
}

/// Adds Gaussian noise with sigma `fraction * rms(section)`.
pub fn add_noise(section: &Tensor<f64>, fraction: f64, prng: &mut Prng) -> Tensor<f64> {
    let sigma = fraction * rms(section);
    if sigma == 0.0 {
        return section.clone();
    }
    let data = section.data();
    Tensor::from_fn(section.shape(), |i| data[i] + sigma * prng.normal())
}
