//! Convolutional building blocks with hand-written backward passes.

mod conv;
mod dense;
mod im2col;
mod loss;
mod pool;

pub use conv::{Conv2d, ConvGrads, TransposedConv2d};
pub use dense::{Dense, DenseGrads};
pub use loss::{cross_entropy_2class, LossOutput};
pub use pool::{maxpool2d, maxpool2d_backward, Pooled};

use crate::error::{Error, Result};
use crate::numcore::{gelu_grad_scalar, Prng, Scalar, Tensor};

/// Anything owning trainable tensors in a fixed, named order.
pub trait Parameterized<T: Scalar> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }
}

/// `(fan_in, fan_out)` of a weight shape: `[out, in, ...receptive]`.
pub fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let receptive: usize = rest.iter().product();
            (inp * receptive, out * receptive)
        }
    }
}

/// Glorot/Xavier uniform samples in `+-sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_init<T: Scalar>(shape: &[usize], prng: &mut Prng) -> Tensor<T> {
    let (fan_in, fan_out) = fans(shape);
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::from_f64(prng.uniform(-bound, bound)))
}

/// Gradient of GeLU given its pre-activation input.
pub fn gelu_backward<T: Scalar>(pre: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    pre.zip_map(grad_out, |x, g| g * gelu_grad_scalar(x))
}

/// Concatenates two `[B x C x H x W]` tensors along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 4 || sb.len() != 4 || sa[0] != sb[0] || sa[2..] != sb[2..] {
        return Err(Error::Dimension(format!(
            "cannot concatenate channels of {sa:?} and {sb:?}"
        )));
    }
    let (ca, cb, plane) = (sa[1], sb[1], sa[2] * sa[3]);
    let mut data = Vec::with_capacity(a.len() + b.len());
    for n in 0..sa[0] {
        data.extend_from_slice(&a.data()[n * ca * plane..(n + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[n * cb * plane..(n + 1) * cb * plane]);
    }
    Tensor::new(&[sa[0], ca + cb, sa[2], sa[3]], data)
}

/// Splits a `[B x C x H x W]` tensor into its first `first` channels and the rest.
pub fn split_channels<T: Scalar>(x: &Tensor<T>, first: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let s = x.shape();
    if s.len() != 4 || first == 0 || first >= s[1] {
        return Err(Error::Dimension(format!(
            "cannot split {s:?} after channel {first}"
        )));
    }
    let plane = s[2] * s[3];
    let (ca, cb) = (first, s[1] - first);
    let mut a = Vec::with_capacity(s[0] * ca * plane);
    let mut b = Vec::with_capacity(s[0] * cb * plane);
    for item in x.data().chunks(s[1] * plane) {
        a.extend_from_slice(&item[..ca * plane]);
        b.extend_from_slice(&item[ca * plane..]);
    }
    Ok((
        Tensor::new(&[s[0], ca, s[2], s[3]], a)?,
        Tensor::new(&[s[0], cb, s[2], s[3]], b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fans_of_conv_and_dense() {
        assert_eq!(fans(&[20, 1, 3, 3]), (9, 180));
        assert_eq!(fans(&[25, 100]), (100, 25));
    }

    #[test]
    fn glorot_deterministic_and_bounded() {
        let a: Tensor<f32> = glorot_init(&[20, 10, 3, 3], &mut Prng::new(5));
        let b: Tensor<f32> = glorot_init(&[20, 10, 3, 3], &mut Prng::new(5));
        assert_eq!(a, b);
        let bound = (6.0f64 / (90.0 + 180.0)).sqrt() as f32;
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn glorot_mean_near_zero() {
        let t: Tensor<f64> = glorot_init(&[100_000, 1], &mut Prng::new(17));
        let mean = t.sum() / t.len() as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::<f64>::from_fn(&[2, 3, 2, 2], |i| i as f64);
        let b = Tensor::<f64>::from_fn(&[2, 1, 2, 2], |i| -(i as f64));
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 4, 2, 2]);
        let (a2, b2) = split_channels(&c, 3).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }
}
