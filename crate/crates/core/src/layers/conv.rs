use super::im2col::{col2im, im2col, Geometry};
use super::{glorot_init, Parameterized};
use crate::error::{Error, Result};
use crate::numcore::{gemm, MatRef, Prng, Scalar, Tensor};

/// Gradients of a convolution-like layer.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_input<T: Scalar>(x: &Tensor<T>, channels: usize, what: &str) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 || x.shape()[1] != channels {
        return Err(Error::Dimension(format!(
            "{what} expects [B x {channels} x H x W] input, got {:?}",
            x.shape()
        )));
    }
    Ok((x.shape()[0], x.shape()[2], x.shape()[3]))
}

/// 2D cross-correlation with square kernel, zero padding and bias.
///
/// Weights are laid out `[out_ch x in_ch x k x k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Glorot-uniform weights and zero bias.
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        prng: &mut Prng,
    ) -> Self {
        Conv2d {
            weight: glorot_init(&[out_ch, in_ch, kernel, kernel], prng),
            bias: Tensor::zeros(&[out_ch]),
            stride,
            padding,
        }
    }

    pub fn from_parts(weight: Tensor<T>, bias: Tensor<T>, stride: usize, padding: usize) -> Result<Self> {
        let s = weight.shape();
        if s.len() != 4 || s[2] != s[3] || bias.shape() != [s[0]] || stride == 0 {
            return Err(Error::Dimension(format!(
                "invalid conv parameters: weight {:?}, bias {:?}, stride {stride}",
                s,
                bias.shape()
            )));
        }
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Output spatial size `(in + 2p - k) / s + 1` (floor division).
    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (ph, pw) = (height + 2 * self.padding, width + 2 * self.padding);
        if ph < k || pw < k {
            return Err(Error::Dimension(format!(
                "input {height}x{width} too small for kernel {k} with padding {}",
                self.padding
            )));
        }
        Ok(((ph - k) / self.stride + 1, (pw - k) / self.stride + 1))
    }

    fn geometry(&self, height: usize, width: usize) -> Result<Geometry> {
        let (out_height, out_width) = self.output_size(height, width)?;
        Ok(Geometry {
            channels: self.in_channels(),
            height,
            width,
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
            out_height,
            out_width,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, h, w) = check_input(x, self.in_channels(), "conv2d")?;
        let g = self.geometry(h, w)?;
        let out_ch = self.out_channels();
        let (in_len, out_len) = (g.channels * h * w, out_ch * g.cols());
        let wmat = MatRef::row_major(self.weight.data(), out_ch, g.rows());
        let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { g.rows() * g.cols() }];
        let mut out = vec![T::zero(); batch * out_len];
        for b in 0..batch {
            let image = &x.data()[b * in_len..(b + 1) * in_len];
            let rhs = if g.is_pointwise() {
                image
            } else {
                im2col(&g, image, &mut cols);
                &cols
            };
            let dst = &mut out[b * out_len..(b + 1) * out_len];
            gemm(T::one(), wmat, MatRef::row_major(rhs, g.rows(), g.cols()), T::zero(), dst);
            for (o, plane) in dst.chunks_mut(g.cols()).enumerate() {
                let bias = self.bias.data()[o];
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
        Tensor::new(&[batch, out_ch, g.out_height, g.out_width], out)
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let (input, weight, bias) = self.backward_impl(x, grad_out, true)?;
        Ok(ConvGrads {
            input: input.expect("input gradient requested"),
            weight,
            bias,
        })
    }

    /// Parameter gradients only; skips the input-gradient product.
    pub fn backward_params(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let (_, weight, bias) = self.backward_impl(x, grad_out, false)?;
        Ok((weight, bias))
    }

    #[allow(clippy::type_complexity)]
    fn backward_impl(
        &self,
        x: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
        let (batch, h, w) = check_input(x, self.in_channels(), "conv2d backward")?;
        let g = self.geometry(h, w)?;
        let out_ch = self.out_channels();
        let expected = [batch, out_ch, g.out_height, g.out_width];
        if grad_out.shape() != expected {
            return Err(Error::Dimension(format!(
                "conv2d backward expects gradient {expected:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let (in_len, out_len) = (g.channels * h * w, out_ch * g.cols());
        let wmat = MatRef::row_major(self.weight.data(), out_ch, g.rows());
        let mut grad_w = vec![T::zero(); out_ch * g.rows()];
        let mut grad_b = vec![T::zero(); out_ch];
        let mut grad_x = if want_input { vec![T::zero(); batch * in_len] } else { Vec::new() };
        let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { g.rows() * g.cols() }];
        let mut grad_cols = vec![T::zero(); if g.is_pointwise() || !want_input { 0 } else { g.rows() * g.cols() }];
        for b in 0..batch {
            let image = &x.data()[b * in_len..(b + 1) * in_len];
            let gout = &grad_out.data()[b * out_len..(b + 1) * out_len];
            let gmat = MatRef::row_major(gout, out_ch, g.cols());
            for (o, plane) in gout.chunks(g.cols()).enumerate() {
                grad_b[o] += plane.iter().fold(T::zero(), |a, &v| a + v);
            }
            let rhs = if g.is_pointwise() {
                image
            } else {
                im2col(&g, image, &mut cols);
                &cols
            };
            gemm(T::one(), gmat, MatRef::row_major(rhs, g.rows(), g.cols()).t(), T::one(), &mut grad_w);
            if want_input {
                let dst = &mut grad_x[b * in_len..(b + 1) * in_len];
                if g.is_pointwise() {
                    gemm(T::one(), wmat.t(), gmat, T::zero(), dst);
                } else {
                    gemm(T::one(), wmat.t(), gmat, T::zero(), &mut grad_cols);
                    col2im(&g, &grad_cols, dst);
                }
            }
        }
        let input = if want_input {
            Some(Tensor::new(x.shape(), grad_x)?)
        } else {
            None
        };
        Ok((
            input,
            Tensor::new(self.weight.shape(), grad_w)?,
            Tensor::new(&[out_ch], grad_b)?,
        ))
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Strided transposed convolution ("deconvolution").
///
/// Weights are laid out `[in_ch x out_ch x k x k]`; output size is
/// `(in - 1) * stride - 2 * padding + k + output_padding`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransposedConv2d<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

impl<T: Scalar> TransposedConv2d<T> {
    /// Exact 2x upsampler: kernel 3, stride 2, padding 1, output padding 1.
    pub fn upsample2x(in_ch: usize, out_ch: usize, prng: &mut Prng) -> Self {
        TransposedConv2d {
            weight: glorot_init(&[in_ch, out_ch, 3, 3], prng),
            bias: Tensor::zeros(&[out_ch]),
            stride: 2,
            padding: 1,
            output_padding: 1,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn output_size(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let grow = |n: usize| {
            ((n - 1) * self.stride + self.kernel() + self.output_padding)
                .checked_sub(2 * self.padding)
                .filter(|&v| v > 0)
        };
        match (grow(height), grow(width)) {
            (Some(oh), Some(ow)) => Ok((oh, ow)),
            _ => Err(Error::Dimension(format!(
                "transposed conv cannot upsample {height}x{width}"
            ))),
        }
    }

    /// Correlation geometry mapping the (large) output grid to the input grid.
    fn geometry(&self, height: usize, width: usize) -> Result<Geometry> {
        let (oh, ow) = self.output_size(height, width)?;
        Ok(Geometry {
            channels: self.out_channels(),
            height: oh,
            width: ow,
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
            out_height: height,
            out_width: width,
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, h, w) = check_input(x, self.in_channels(), "transposed conv2d")?;
        let g = self.geometry(h, w)?;
        let (in_ch, out_ch) = (self.in_channels(), self.out_channels());
        let (in_len, out_len) = (in_ch * h * w, out_ch * g.height * g.width);
        let wmat = MatRef::row_major(self.weight.data(), in_ch, g.rows());
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        let mut out = vec![T::zero(); batch * out_len];
        for b in 0..batch {
            let image = MatRef::row_major(&x.data()[b * in_len..(b + 1) * in_len], in_ch, h * w);
            gemm(T::one(), wmat.t(), image, T::zero(), &mut cols);
            let dst = &mut out[b * out_len..(b + 1) * out_len];
            col2im(&g, &cols, dst);
            for (o, plane) in dst.chunks_mut(g.height * g.width).enumerate() {
                let bias = self.bias.data()[o];
                plane.iter_mut().for_each(|v| *v += bias);
            }
        }
        Tensor::new(&[batch, out_ch, g.height, g.width], out)
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let (batch, h, w) = check_input(x, self.in_channels(), "transposed conv2d backward")?;
        let g = self.geometry(h, w)?;
        let (in_ch, out_ch) = (self.in_channels(), self.out_channels());
        let expected = [batch, out_ch, g.height, g.width];
        if grad_out.shape() != expected {
            return Err(Error::Dimension(format!(
                "transposed conv2d backward expects gradient {expected:?}, got {:?}",
                grad_out.shape()
            )));
        }
        let (in_len, out_len) = (in_ch * h * w, out_ch * g.height * g.width);
        let wmat = MatRef::row_major(self.weight.data(), in_ch, g.rows());
        let mut cols = vec![T::zero(); g.rows() * g.cols()];
        let mut grad_x = vec![T::zero(); batch * in_len];
        let mut grad_w = vec![T::zero(); in_ch * g.rows()];
        let mut grad_b = vec![T::zero(); out_ch];
        for b in 0..batch {
            let gout = &grad_out.data()[b * out_len..(b + 1) * out_len];
            for (o, plane) in gout.chunks(g.height * g.width).enumerate() {
                grad_b[o] += plane.iter().fold(T::zero(), |a, &v| a + v);
            }
            im2col(&g, gout, &mut cols);
            let cmat = MatRef::row_major(&cols, g.rows(), g.cols());
            let image = MatRef::row_major(&x.data()[b * in_len..(b + 1) * in_len], in_ch, h * w);
            gemm(T::one(), wmat, cmat, T::zero(), &mut grad_x[b * in_len..(b + 1) * in_len]);
            gemm(T::one(), image, cmat.t(), T::one(), &mut grad_w);
        }
        Ok(ConvGrads {
            input: Tensor::new(x.shape(), grad_x)?,
            weight: Tensor::new(self.weight.shape(), grad_w)?,
            bias: Tensor::new(&[out_ch], grad_b)?,
        })
    }
}

impl<T: Scalar> Parameterized<T> for TransposedConv2d<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
