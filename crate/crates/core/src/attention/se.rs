//! Squeeze-and-excitation channel gating followed by spatial gating.

use crate::error::{Error, Result};
use crate::layers::{gelu_backward, Conv2d, Dense, Parameterized};
use crate::numcore::{gelu, sigmoid, Prng, Scalar, Tensor};

fn check_maps<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    if x.rank() != 4 {
        return Err(Error::Dimension(format!(
            "{what} expects [B x C x H x W], got {:?}",
            x.shape()
        )));
    }
    let s = x.shape();
    Ok((s[0], s[1], s[2] * s[3]))
}

/// Global average pool: `z[b, c]` is the mean of channel `c` over all pixels.
pub fn se_squeeze<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, ch, plane) = check_maps(x, "se_squeeze")?;
    let inv = T::from_f64(1.0 / plane as f64);
    let z = x
        .data()
        .chunks(plane)
        .map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    Tensor::new(&[batch, ch], z)
}

/// Multiplies every pixel of channel `c` in item `b` by `gate[b, c]`.
pub fn apply_channel_gate<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, ch, plane) = check_maps(x, "channel gate")?;
    if gate.shape() != [batch, ch] {
        return Err(Error::Dimension(format!(
            "channel gate {:?} does not match maps {:?}",
            gate.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for (p, &g) in out.data_mut().chunks_mut(plane).zip(gate.data()) {
        p.iter_mut().for_each(|v| *v *= g);
    }
    Ok(out)
}

/// Multiplies every channel at pixel `p` of item `b` by `gate[b, 0, p]`.
pub fn apply_spatial_gate<T: Scalar>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, ch, plane) = check_maps(x, "spatial gate")?;
    if gate.len() != batch * plane {
        return Err(Error::Dimension(format!(
            "spatial gate {:?} does not match maps {:?}",
            gate.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for (b, item) in out.data_mut().chunks_mut(ch * plane).enumerate() {
        let g = &gate.data()[b * plane..(b + 1) * plane];
        for p in item.chunks_mut(plane) {
            p.iter_mut().zip(g).for_each(|(v, &s)| *v *= s);
        }
    }
    Ok(out)
}

/// Excitation MLP: `ch -> ch/r` (GeLU) `-> ch` (sigmoid).
#[derive(Clone, Debug, PartialEq)]
pub struct SeBlock<T = f32> {
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

impl<T: Scalar> SeBlock<T> {
    pub fn new(channels: usize, ratio: usize, prng: &mut Prng) -> Result<Self> {
        if ratio == 0 || channels % ratio != 0 {
            return Err(Error::Config(format!(
                "SE ratio {ratio} must divide channel count {channels}"
            )));
        }
        Ok(SeBlock {
            fc1: Dense::new(channels, channels / ratio, prng),
            fc2: Dense::new(channels / ratio, channels, prng),
        })
    }

    pub fn channels(&self) -> usize {
        self.fc1.inputs()
    }

    /// Channel gates `sigmoid(W2 gelu(W1 z))`, shape `[B x ch]`.
    pub fn gate(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(sigmoid(&self.fc2.forward(&gelu(&self.fc1.forward(z)?))?))
    }
}

impl<T: Scalar> Parameterized<T> for SeBlock<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, layer) in [("fc1", &self.fc1), ("fc2", &self.fc2)] {
            for (name, t) in layer.parameters() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.fc1.parameters_mut();
        out.extend(self.fc2.parameters_mut());
        out
    }
}

/// `X' = sigmoid(W2 gelu(W1 z)) o X` with `z = se_squeeze(X)`.
pub fn se_excite_apply<T: Scalar>(block: &SeBlock<T>, x: &Tensor<T>, z: &Tensor<T>) -> Result<Tensor<T>> {
    apply_channel_gate(x, &block.gate(z)?)
}

/// Per-pixel gate from a pointwise convolution to one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttention<T = f32> {
    pub conv: Conv2d<T>,
}

impl<T: Scalar> SpatialAttention<T> {
    pub fn new(channels: usize, prng: &mut Prng) -> Self {
        SpatialAttention {
            conv: Conv2d::new(channels, 1, 1, 1, 0, prng),
        }
    }

    /// Gate map `[B x 1 x H x W]`, every value in (0, 1).
    pub fn gate(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(sigmoid(&self.conv.forward(x)?))
    }
}

pub fn spatial_attention_apply<T: Scalar>(sa: &SpatialAttention<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    apply_spatial_gate(x, &sa.gate(x)?)
}

/// Channel attention followed by spatial attention on its output.
#[derive(Clone, Debug, PartialEq)]
pub struct SeSpatialBlock<T = f32> {
    pub se: SeBlock<T>,
    pub spatial: SpatialAttention<T>,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct SeSpatialCache<T> {
    input: Tensor<T>,
    squeezed: Tensor<T>,
    hidden_pre: Tensor<T>,
    hidden: Tensor<T>,
    channel_gate: Tensor<T>,
    channel_out: Tensor<T>,
    spatial_gate: Tensor<T>,
}

/// Gradients of [`SeSpatialBlock`], parameters in `parameters()` order.
#[derive(Clone, Debug)]
pub struct BlockGrads<T> {
    pub input: Tensor<T>,
    pub params: Vec<Tensor<T>>,
}

impl<T: Scalar> SeSpatialBlock<T> {
    pub fn new(channels: usize, ratio: usize, prng: &mut Prng) -> Result<Self> {
        Ok(SeSpatialBlock {
            se: SeBlock::new(channels, ratio, prng)?,
            spatial: SpatialAttention::new(channels, prng),
        })
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let x1 = se_excite_apply(&self.se, x, &se_squeeze(x)?)?;
        spatial_attention_apply(&self.spatial, &x1)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, SeSpatialCache<T>)> {
        let squeezed = se_squeeze(x)?;
        let hidden_pre = self.se.fc1.forward(&squeezed)?;
        let hidden = gelu(&hidden_pre);
        let channel_gate = sigmoid(&self.se.fc2.forward(&hidden)?);
        let channel_out = apply_channel_gate(x, &channel_gate)?;
        let spatial_gate = self.spatial.gate(&channel_out)?;
        let out = apply_spatial_gate(&channel_out, &spatial_gate)?;
        Ok((
            out,
            SeSpatialCache {
                input: x.clone(),
                squeezed,
                hidden_pre,
                hidden,
                channel_gate,
                channel_out,
                spatial_gate,
            },
        ))
    }

    pub fn backward(&self, cache: &SeSpatialCache<T>, grad_out: &Tensor<T>) -> Result<BlockGrads<T>> {
        let x = &cache.input;
        x.check_same_shape(grad_out)?;
        let (batch, ch, plane) = check_maps(x, "SE backward")?;
        let go = grad_out.data();
        let x1 = cache.channel_out.data();
        let sg = cache.spatial_gate.data();

        // y = s * x1
        let mut d_x1 = vec![T::zero(); x.len()];
        let mut d_spre = vec![T::zero(); batch * plane];
        for b in 0..batch {
            for c in 0..ch {
                let base = (b * ch + c) * plane;
                for p in 0..plane {
                    d_x1[base + p] = go[base + p] * sg[b * plane + p];
                    d_spre[b * plane + p] += go[base + p] * x1[base + p];
                }
            }
        }
        for (d, &s) in d_spre.iter_mut().zip(sg) {
            *d *= s * (T::one() - s);
        }
        let d_spre = Tensor::new(cache.spatial_gate.shape(), d_spre)?;
        let conv_grads = self.spatial.conv.backward(&cache.channel_out, &d_spre)?;
        for (d, &g) in d_x1.iter_mut().zip(conv_grads.input.data()) {
            *d += g;
        }

        // x1 = g * x
        let gate = cache.channel_gate.data();
        let inv = T::from_f64(1.0 / plane as f64);
        let mut d_gate = vec![T::zero(); batch * ch];
        let mut d_x = vec![T::zero(); x.len()];
        for (bc, (dg, &g)) in d_gate.iter_mut().zip(gate).enumerate() {
            let range = bc * plane..(bc + 1) * plane;
            for ((dx, &d1), &xv) in d_x[range.clone()].iter_mut().zip(&d_x1[range.clone()]).zip(&x.data()[range]) {
                *dg += d1 * xv;
                *dx = d1 * g;
            }
            *dg *= g * (T::one() - g);
        }
        let d_h2 = Tensor::new(&[batch, ch], d_gate)?;
        let fc2 = self.se.fc2.backward(&cache.hidden, &d_h2)?;
        let d_h1 = gelu_backward(&cache.hidden_pre, &fc2.input)?;
        let fc1 = self.se.fc1.backward(&cache.squeezed, &d_h1)?;
        for (bc, &dz) in fc1.input.data().iter().enumerate() {
            let add = dz * inv;
            d_x[bc * plane..(bc + 1) * plane].iter_mut().for_each(|v| *v += add);
        }

        Ok(BlockGrads {
            input: Tensor::new(x.shape(), d_x)?,
            params: vec![
                fc1.weight,
                fc1.bias,
                fc2.weight,
                fc2.bias,
                conv_grads.weight,
                conv_grads.bias,
            ],
        })
    }
}

impl<T: Scalar> Parameterized<T> for SeSpatialBlock<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = self.se.parameters();
        for (name, t) in self.spatial.conv.parameters() {
            out.push((format!("spatial.{name}"), t));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.se.parameters_mut();
        out.extend(self.spatial.conv.parameters_mut());
        out
    }
}
