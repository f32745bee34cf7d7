use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Result of a 2x2, stride-2 max pool.
#[derive(Clone, Debug)]
pub struct Pooled<T> {
    pub output: Tensor<T>,
    /// Flat input index of the selected maximum, one per output element.
    pub argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2. Ties go to the first position in
/// row-major window order.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>) -> Result<Pooled<T>> {
    if x.rank() != 4 {
        return Err(Error::Dimension(format!(
            "maxpool2d expects [B x C x H x W], got {:?}",
            x.shape()
        )));
    }
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!(
            "maxpool2d needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let data = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let at = base + (2 * i + di) * w + 2 * j + dj;
                    if data[at] > data[best] {
                        best = at;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(Pooled {
        output: Tensor::new(&[b, c, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient to its argmax input position.
pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Dimension(format!(
            "maxpool2d backward: {} gradients for {} pooled positions",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(input_shape);
    let g = grad.data_mut();
    for (&at, &v) in argmax.iter().zip(grad_out.data()) {
        g[at] += v;
    }
    Ok(grad)
}
