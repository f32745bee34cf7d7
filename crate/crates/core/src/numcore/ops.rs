use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Matrix product of two rank-2 tensors.
///
/// Each output element accumulates its `k` products in increasing `k`
/// order, so results are reproducible bit for bit.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Dimension(format!(
            "matmul needs [m x k] by [k x n], got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GeLU of a scalar: `x * Phi(x)`.
#[inline(always)]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    x * half * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Derivative of [`gelu_scalar`]: `Phi(x) + x * phi(x)`.
#[inline(always)]
pub fn gelu_grad_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = T::from_f64(FRAC_1_SQRT_2PI) * (-(x * x) * half).exp_elementwise();
    cdf + x * pdf
}

pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

/// Logistic function, clamped to `[eps, 1 - eps]` so gates never reach
/// exactly 0 or 1 in finite precision.
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let eps = T::epsilon();
    s.max(eps).min(T::one() - eps)
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// In-place softmax over one slice, with max subtraction.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp_elementwise();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Softmax along the last dimension.
pub fn softmax_lastdim<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let last = *x.shape().last().expect("tensor has rank >= 1");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(last) {
        softmax_in_place(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Prng;

    fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn matmul_identity_and_projector() {
        let id = Tensor::<f64>::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let m = Tensor::<f64>::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&id, &m).unwrap(), m);

        let p = Tensor::<f64>::new(&[2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Tensor::<f64>::new(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(matmul(&p, &b).unwrap().data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop_exactly() {
        let mut rng = Prng::new(11);
        let a = Tensor::<f64>::from_fn(&[3, 4], |_| rng.uniform(-1.0, 1.0));
        let b = Tensor::<f64>::from_fn(&[4, 2], |_| rng.uniform(-1.0, 1.0));
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[3, 2]);
        assert_eq!(c.data(), naive_matmul(a.data(), b.data(), 3, 4, 2).as_slice());
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu_scalar(0.0f64), 0.0);
        assert!((gelu_scalar(10.0f64) - 10.0).abs() < 1e-6);
        // 0.5 * (1 + erf(1/sqrt 2)) computed with mpmath at 30 digits.
        let reference = 0.841_344_746_068_542_9_f64;
        assert!((gelu_scalar(1.0f64) - reference).abs() < 1e-7);
    }

    #[test]
    fn gelu_grad_matches_central_difference() {
        for &x in &[-2.5f64, -0.3, 0.0, 0.7, 3.1] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad_scalar(x)).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0f64), 0.5);
        for &x in &[0.1f64, 1.7, 5.0, 13.0] {
            assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-7);
        }
        // 1 / (1 + e^-2) from mpmath.
        assert!((sigmoid_scalar(2.0f64) - 0.880_797_077_977_882_4).abs() < 1e-6);
        let big = sigmoid_scalar(100.0f32);
        assert!(big < 1.0 && big > 0.99);
        let small = sigmoid_scalar(-1000.0f32);
        assert!(small > 0.0 && small < 1e-6);
    }

    #[test]
    fn softmax_values() {
        let t = Tensor::<f64>::new(&[2], vec![0.0, 0.0]).unwrap();
        assert_eq!(softmax_lastdim(&t).data(), &[0.5, 0.5]);
        let t = Tensor::<f64>::new(&[2], vec![1000.0, 1000.0]).unwrap();
        assert_eq!(softmax_lastdim(&t).data(), &[0.5, 0.5]);

        let t = Tensor::<f64>::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let s = softmax_lastdim(&t);
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((s.data()[i] - v.exp() / denom).abs() < 1e-7);
        }
    }
}
