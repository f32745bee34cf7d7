use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Loss value with its gradient w.r.t. the logits.
#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub loss: T,
    pub grad: Tensor<T>,
}

/// Two-class pixelwise cross-entropy, averaged over batch and pixels.
///
/// `logits` is `[B x 2 x H x W]`, `target` is `[B x H x W]` with entries in
/// `{0, 1}`. `positive_weight` scales the loss of class-1 pixels; pass `1`
/// for the plain unweighted loss.
pub fn cross_entropy_2class<T: Scalar>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    positive_weight: T,
) -> Result<LossOutput<T>> {
    let s = logits.shape();
    if s.len() != 4 || s[1] != 2 {
        return Err(Error::Dimension(format!(
            "cross-entropy expects [B x 2 x H x W] logits, got {s:?}"
        )));
    }
    let (batch, plane) = (s[0], s[2] * s[3]);
    if target.shape() != [s[0], s[2], s[3]] {
        return Err(Error::Dimension(format!(
            "cross-entropy target {:?} does not match logits {s:?}",
            target.shape()
        )));
    }
    let n = (batch * plane) as f64;
    let ld = logits.data();
    let mut grad = vec![T::zero(); ld.len()];
    let mut total = 0.0f64;
    for b in 0..batch {
        for p in 0..plane {
            let label = target.data()[b * plane + p];
            let class = if label == T::zero() {
                0
            } else if label == T::one() {
                1
            } else {
                return Err(Error::Label(format!(
                    "target value {label} at batch {b}, pixel {p} is not 0 or 1"
                )));
            };
            let weight = if class == 1 { positive_weight.as_f64() } else { 1.0 };
            let (i0, i1) = (b * 2 * plane + p, b * 2 * plane + plane + p);
            let (z0, z1) = (ld[i0].as_f64(), ld[i1].as_f64());
            let max = z0.max(z1);
            let lse = max + ((z0 - max).exp() + (z1 - max).exp()).ln();
            let zt = if class == 0 { z0 } else { z1 };
            total += weight * (lse - zt);
            let p1 = (z1 - lse).exp();
            let p0 = (z0 - lse).exp();
            let (t0, t1) = if class == 0 { (1.0, 0.0) } else { (0.0, 1.0) };
            grad[i0] = T::from_f64(weight * (p0 - t0) / n);
            grad[i1] = T::from_f64(weight * (p1 - t1) / n);
        }
    }
    Ok(LossOutput {
        loss: T::from_f64(total / n),
        grad: Tensor::new(s, grad)?,
    })
}
