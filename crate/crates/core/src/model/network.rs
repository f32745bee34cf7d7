use std::fmt;
use std::str::FromStr;

use crate::attention::{
    AttentionDims, AugmentedAttentionConv, AugmentedCache, BlockGrads, SeSpatialBlock, SeSpatialCache,
};
use crate::error::{Error, Result};
use crate::layers::{
    concat_channels, gelu_backward, maxpool2d, maxpool2d_backward, split_channels, Conv2d, Parameterized,
    TransposedConv2d,
};
use crate::numcore::{gelu, softmax_in_place, Prng, Scalar, Tensor};

/// Side length of the square input patch.
pub const PATCH: usize = 44;
/// Side length of the attention grid after two 2x pools.
pub const ATTENTION_GRID: usize = PATCH / 4;

pub const STAGE1_CHANNELS: usize = 20;
pub const STAGE_CHANNELS: usize = 50;
/// Channels entering (and leaving) the attention block.
pub const ATTENTION_CHANNELS: usize = 2 * STAGE_CHANNELS;
pub const UP1_CHANNELS: usize = 20;
pub const UP2_CHANNELS: usize = 10;
pub const CLASSES: usize = 2;

/// Which attention block sits between the encoder and the upsampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionVariant {
    /// Squeeze-and-excitation followed by spatial gating.
    Se,
    /// Attention-augmented convolution with relative self-attention.
    SelfAttention,
}

impl AttentionVariant {
    pub fn tag(self) -> &'static str {
        match self {
            AttentionVariant::Se => "se",
            AttentionVariant::SelfAttention => "self",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            AttentionVariant::Se => 0,
            AttentionVariant::SelfAttention => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(AttentionVariant::Se),
            1 => Some(AttentionVariant::SelfAttention),
            _ => None,
        }
    }
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AttentionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" => Ok(AttentionVariant::Se),
            "self" | "self_attention" | "self-attention" => Ok(AttentionVariant::SelfAttention),
            other => Err(Error::Config(format!(
                "unknown attention variant {other:?} (expected se or self)"
            ))),
        }
    }
}

/// Attention block hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Hyperparams {
    pub se_ratio: usize,
    pub heads: usize,
    pub key_depth: usize,
    pub value_depth: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            se_ratio: 4,
            heads: 4,
            key_depth: 32,
            value_depth: 32,
        }
    }
}

impl Hyperparams {
    pub fn attention_dims(&self) -> AttentionDims {
        AttentionDims {
            heads: self.heads,
            key_depth: self.key_depth,
            value_depth: self.value_depth,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttentionBlock<T = f32> {
    Se(SeSpatialBlock<T>),
    SelfAttention(AugmentedAttentionConv<T>),
}

enum AttentionCacheKind<T> {
    Se(SeSpatialCache<T>),
    SelfAttention(AugmentedCache<T>),
}

impl<T: Scalar> AttentionBlock<T> {
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            AttentionBlock::Se(b) => b.forward(x),
            AttentionBlock::SelfAttention(b) => b.forward(x),
        }
    }

    fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AttentionCacheKind<T>)> {
        Ok(match self {
            AttentionBlock::Se(b) => {
                let (y, c) = b.forward_cached(x)?;
                (y, AttentionCacheKind::Se(c))
            }
            AttentionBlock::SelfAttention(b) => {
                let (y, c) = b.forward_cached(x)?;
                (y, AttentionCacheKind::SelfAttention(c))
            }
        })
    }

    fn backward(&self, cache: &AttentionCacheKind<T>, grad: &Tensor<T>) -> Result<BlockGrads<T>> {
        match (self, cache) {
            (AttentionBlock::Se(b), AttentionCacheKind::Se(c)) => b.backward(c, grad),
            (AttentionBlock::SelfAttention(b), AttentionCacheKind::SelfAttention(c)) => b.backward(c, grad),
            _ => unreachable!("attention cache built by the same block"),
        }
    }
}

impl<T: Scalar> Parameterized<T> for AttentionBlock<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        match self {
            AttentionBlock::Se(b) => b.parameters(),
            AttentionBlock::SelfAttention(b) => b.parameters(),
        }
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            AttentionBlock::Se(b) => b.parameters_mut(),
            AttentionBlock::SelfAttention(b) => b.parameters_mut(),
        }
    }
}

/// Layer units in network order; freezing a prefix of `n` freezes the
/// first `n` of these.
pub const LAYER_UNITS: [&str; 10] = [
    "stage1.conv1",
    "stage1.conv2",
    "stage2.conv1",
    "stage2.conv2",
    "stage3.conv1",
    "stage3.conv2",
    "attention",
    "up1",
    "up2",
    "head",
];

/// The full segmentation network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel<T = f32> {
    variant: AttentionVariant,
    hyper: Hyperparams,
    /// Stage convolutions in order: two per stage, three stages.
    pub convs: [Conv2d<T>; 6],
    pub attention: AttentionBlock<T>,
    pub up1: TransposedConv2d<T>,
    pub up2: TransposedConv2d<T>,
    pub head: Conv2d<T>,
    frozen: Vec<bool>,
}

/// Activations recorded by [`NetworkModel::forward_train`].
pub struct ForwardTrace<T> {
    input: Tensor<T>,
    pre: [Tensor<T>; 6],
    post: [Tensor<T>; 6],
    pooled: [Tensor<T>; 2],
    argmax: [Vec<usize>; 2],
    attention: AttentionCacheKind<T>,
    attended: Tensor<T>,
    up1_pre: Tensor<T>,
    up1: Tensor<T>,
    up2_pre: Tensor<T>,
    up2: Tensor<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Named activation shapes in network order, each without the batch axis.
    pub fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let s = |t: &Tensor<T>| t.shape()[1..].to_vec();
        let mut out = vec![("input", s(&self.input))];
        for (i, name) in LAYER_UNITS[..6].iter().enumerate() {
            out.push((name, s(&self.post[i])));
            if i == 1 {
                out.push(("pool1", s(&self.pooled[0])));
            }
            if i == 3 {
                out.push(("pool2", s(&self.pooled[1])));
            }
        }
        out.push(("attention", s(&self.attended)));
        out.push(("up1", s(&self.up1)));
        out.push(("up2", s(&self.up2)));
        out
    }

    /// Flat input indices selected by the two max pools.
    pub fn pool_argmax(&self) -> [&[usize]; 2] {
        [&self.argmax[0], &self.argmax[1]]
    }

    /// Channel concatenation feeding the attention block.
    pub fn concat_channels(&self) -> usize {
        self.post[4].shape()[1] + self.post[5].shape()[1]
    }
}

impl<T: Scalar> NetworkModel<T> {
    /// Builds a freshly initialized network; deterministic in the seed stream.
    pub fn build(variant: AttentionVariant, hyper: Hyperparams, prng: &mut Prng) -> Result<Self> {
        let conv = |i, o, p: &mut Prng| Conv2d::new(i, o, 3, 1, 1, p);
        let convs = [
            conv(1, STAGE1_CHANNELS, prng),
            conv(STAGE1_CHANNELS, STAGE1_CHANNELS, prng),
            conv(STAGE1_CHANNELS, STAGE_CHANNELS, prng),
            conv(STAGE_CHANNELS, STAGE_CHANNELS, prng),
            conv(STAGE_CHANNELS, STAGE_CHANNELS, prng),
            conv(STAGE_CHANNELS, STAGE_CHANNELS, prng),
        ];
        let attention = match variant {
            AttentionVariant::Se => AttentionBlock::Se(SeSpatialBlock::new(ATTENTION_CHANNELS, hyper.se_ratio, prng)?),
            AttentionVariant::SelfAttention => AttentionBlock::SelfAttention(AugmentedAttentionConv::new(
                ATTENTION_CHANNELS,
                ATTENTION_CHANNELS,
                hyper.attention_dims(),
                ATTENTION_GRID,
                ATTENTION_GRID,
                prng,
            )?),
        };
        let up1 = TransposedConv2d::upsample2x(ATTENTION_CHANNELS, UP1_CHANNELS, prng);
        let up2 = TransposedConv2d::upsample2x(UP1_CHANNELS, UP2_CHANNELS, prng);
        let head = Conv2d::new(UP2_CHANNELS, CLASSES, 1, 1, 0, prng);
        let mut model = NetworkModel {
            variant,
            hyper,
            convs,
            attention,
            up1,
            up2,
            head,
            frozen: Vec::new(),
        };
        model.frozen = vec![false; model.parameters().len()];
        Ok(model)
    }

    pub fn variant(&self) -> AttentionVariant {
        self.variant
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.hyper
    }

    /// Named parameters with their layer unit index.
    pub fn parameter_units(&self) -> Vec<(usize, String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (unit, conv) in self.convs.iter().enumerate() {
            for (n, t) in conv.parameters() {
                out.push((unit, format!("{}.{n}", LAYER_UNITS[unit]), t));
            }
        }
        for (n, t) in self.attention.parameters() {
            out.push((6, format!("attention.{n}"), t));
        }
        for (unit, layer) in [(7, &self.up1), (8, &self.up2)] {
            for (n, t) in layer.parameters() {
                out.push((unit, format!("{}.{n}", LAYER_UNITS[unit]), t));
            }
        }
        for (n, t) in self.head.parameters() {
            out.push((9, format!("head.{n}"), t));
        }
        out
    }

    pub fn frozen_flags(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen_flags(&mut self, flags: Vec<bool>) -> Result<()> {
        if flags.len() != self.frozen.len() {
            return Err(Error::Integrity(format!(
                "{} freeze flags for {} parameters",
                flags.len(),
                self.frozen.len()
            )));
        }
        self.frozen = flags;
        Ok(())
    }

    /// Freezes the first `units` layer units and unfreezes the rest.
    pub fn freeze_prefix(&mut self, units: usize) -> Result<()> {
        if units > LAYER_UNITS.len() {
            return Err(Error::Config(format!(
                "freeze prefix {units} exceeds the {} layer units",
                LAYER_UNITS.len()
            )));
        }
        self.frozen = self.parameter_units().iter().map(|(u, _, _)| *u < units).collect();
        Ok(())
    }

    pub fn frozen_names(&self) -> Vec<String> {
        self.parameters()
            .into_iter()
            .zip(&self.frozen)
            .filter(|(_, &f)| f)
            .map(|((n, _), _)| n)
            .collect()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != PATCH || s[3] != PATCH {
            return Err(Error::Dimension(format!(
                "network expects [B x 1 x {PATCH} x {PATCH}] input, got {s:?}"
            )));
        }
        Ok(s[0])
    }

    /// Two-channel logits `[B x 2 x 44 x 44]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut skip = None;
        for (i, conv) in self.convs.iter().enumerate() {
            h = gelu(&conv.forward(&h)?);
            if i == 1 || i == 3 {
                h = maxpool2d(&h)?.output;
            }
            if i == 4 {
                skip = Some(h.clone());
            }
        }
        let concat = concat_channels(&skip.expect("stage 3 output"), &h)?;
        let attended = self.attention.forward(&concat)?;
        let u1 = gelu(&self.up1.forward(&attended)?);
        let u2 = gelu(&self.up2.forward(&u1)?);
        self.head.forward(&u2)
    }

    /// Heterogeneity probability per pixel, `[B x 44 x 44]`.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let logits = self.forward(x)?;
        Ok(class_probability(&logits))
    }

    /// Forward pass keeping every activation needed by [`Self::backward`].
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        self.check_input(x)?;
        let c = &self.convs;
        let pre0 = c[0].forward(x)?;
        let post0 = gelu(&pre0);
        let pre1 = c[1].forward(&post0)?;
        let post1 = gelu(&pre1);
        let pool1 = maxpool2d(&post1)?;
        let pre2 = c[2].forward(&pool1.output)?;
        let post2 = gelu(&pre2);
        let pre3 = c[3].forward(&post2)?;
        let post3 = gelu(&pre3);
        let pool2 = maxpool2d(&post3)?;
        let pre4 = c[4].forward(&pool2.output)?;
        let post4 = gelu(&pre4);
        let pre5 = c[5].forward(&post4)?;
        let post5 = gelu(&pre5);
        let concat = concat_channels(&post4, &post5)?;
        let (attended, attention) = self.attention.forward_cached(&concat)?;
        let up1_pre = self.up1.forward(&attended)?;
        let up1 = gelu(&up1_pre);
        let up2_pre = self.up2.forward(&up1)?;
        let up2 = gelu(&up2_pre);
        let logits = self.head.forward(&up2)?;
        Ok((
            logits,
            ForwardTrace {
                input: x.clone(),
                pre: [pre0, pre1, pre2, pre3, pre4, pre5],
                post: [post0, post1, post2, post3, post4, post5],
                pooled: [pool1.output, pool2.output],
                argmax: [pool1.argmax, pool2.argmax],
                attention,
                attended,
                up1_pre,
                up1,
                up2_pre,
                up2,
            },
        ))
    }

    /// Parameter gradients (in `parameters()` order) given `dLoss/dlogits`.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let head = self.head.backward(&trace.up2, grad_logits)?;
        let g = gelu_backward(&trace.up2_pre, &head.input)?;
        let up2 = self.up2.backward(&trace.up1, &g)?;
        let g = gelu_backward(&trace.up1_pre, &up2.input)?;
        let up1 = self.up1.backward(&trace.attended, &g)?;
        let attn = self.attention.backward(&trace.attention, &up1.input)?;
        let (g_skip, g_last) = split_channels(&attn.input, STAGE_CHANNELS)?;

        let mut conv_grads: Vec<(Tensor<T>, Tensor<T>)> = Vec::with_capacity(6);
        let c = &self.convs;
        let g = gelu_backward(&trace.pre[5], &g_last)?;
        let r5 = c[5].backward(&trace.post[4], &g)?;
        let mut g4 = g_skip;
        g4.add_assign(&r5.input)?;
        let g = gelu_backward(&trace.pre[4], &g4)?;
        let r4 = c[4].backward(&trace.pooled[1], &g)?;
        let g = maxpool2d_backward(trace.post[3].shape(), &trace.argmax[1], &r4.input)?;
        let g = gelu_backward(&trace.pre[3], &g)?;
        let r3 = c[3].backward(&trace.post[2], &g)?;
        let g = gelu_backward(&trace.pre[2], &r3.input)?;
        let r2 = c[2].backward(&trace.pooled[0], &g)?;
        let g = maxpool2d_backward(trace.post[1].shape(), &trace.argmax[0], &r2.input)?;
        let g = gelu_backward(&trace.pre[1], &g)?;
        let r1 = c[1].backward(&trace.post[0], &g)?;
        let g = gelu_backward(&trace.pre[0], &r1.input)?;
        let r0 = c[0].backward_params(&trace.input, &g)?;

        conv_grads.push(r0);
        for r in [r1, r2, r3, r4, r5] {
            conv_grads.push((r.weight, r.bias));
        }
        let mut grads = Vec::with_capacity(self.frozen.len());
        for (w, b) in conv_grads {
            grads.push(w);
            grads.push(b);
        }
        grads.extend(attn.params);
        grads.extend([up1.weight, up1.bias, up2.weight, up2.bias, head.weight, head.bias]);
        Ok(grads)
    }

    /// Copies the network into another precision (flags included).
    pub fn cast<U: Scalar>(&self) -> NetworkModel<U> {
        let mut out = NetworkModel::<U>::build(self.variant, self.hyper, &mut Prng::new(0))
            .expect("hyperparameters already validated");
        for (dst, (_, src)) in out.parameters_mut().into_iter().zip(self.parameters()) {
            *dst = src.cast();
        }
        out.frozen = self.frozen.clone();
        out
    }
}

/// Softmax over the two class channels, returning the class-1 plane.
pub fn class_probability<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let s = logits.shape();
    let (batch, plane) = (s[0], s[2] * s[3]);
    let mut out = Vec::with_capacity(batch * plane);
    for item in logits.data().chunks(2 * plane) {
        for p in 0..plane {
            let mut pair = [item[p], item[plane + p]];
            softmax_in_place(&mut pair);
            out.push(pair[1]);
        }
    }
    Tensor::new(&[batch, s[2], s[3]], out).expect("shape follows logits")
}

impl<T: Scalar> Parameterized<T> for NetworkModel<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        self.parameter_units().into_iter().map(|(_, n, t)| (n, t)).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for conv in self.convs.iter_mut() {
            out.extend(conv.parameters_mut());
        }
        out.extend(self.attention.parameters_mut());
        out.extend(self.up1.parameters_mut());
        out.extend(self.up2.parameters_mut());
        out.extend(self.head.parameters_mut());
        out
    }
}
