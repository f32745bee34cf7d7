use super::{glorot_init, Parameterized};
use crate::error::{Error, Result};
use crate::numcore::{gemm, MatRef, Prng, Scalar, Tensor};

/// Fully connected layer, `y = x W^T + b` with `W` laid out `[out x in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, prng: &mut Prng) -> Self {
        Dense {
            weight: glorot_init(&[outputs, inputs], prng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        if x.rank() != 2 || x.shape()[1] != self.inputs() {
            return Err(Error::Dimension(format!(
                "dense layer expects [B x {}], got {:?}",
                self.inputs(),
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let mut out = Vec::with_capacity(batch * n_out);
        for _ in 0..batch {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            MatRef::row_major(x.data(), batch, n_in),
            MatRef::row_major(self.weight.data(), n_out, n_in).t(),
            T::one(),
            &mut out,
        );
        Tensor::new(&[batch, n_out], out)
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let batch = self.check(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if grad_out.shape() != [batch, n_out] {
            return Err(Error::Dimension(format!(
                "dense backward expects gradient [{batch}, {n_out}], got {:?}",
                grad_out.shape()
            )));
        }
        let gmat = MatRef::row_major(grad_out.data(), batch, n_out);
        let mut grad_x = vec![T::zero(); batch * n_in];
        gemm(
            T::one(),
            gmat,
            MatRef::row_major(self.weight.data(), n_out, n_in),
            T::zero(),
            &mut grad_x,
        );
        let mut grad_w = vec![T::zero(); n_out * n_in];
        gemm(
            T::one(),
            gmat.t(),
            MatRef::row_major(x.data(), batch, n_in),
            T::zero(),
            &mut grad_w,
        );
        let mut grad_b = vec![T::zero(); n_out];
        for row in grad_out.data().chunks(n_out) {
            for (g, &v) in grad_b.iter_mut().zip(row) {
                *g += v;
            }
        }
        Ok(DenseGrads {
            input: Tensor::new(x.shape(), grad_x)?,
            weight: Tensor::new(self.weight.shape(), grad_w)?,
            bias: Tensor::new(&[n_out], grad_b)?,
        })
    }
}

impl<T: Scalar> Parameterized<T> for Dense<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
