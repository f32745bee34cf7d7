//! Multi-head 2D self-attention with relative position logits, and the
//! attention-augmented convolution built on it.

use super::se::BlockGrads;
use crate::error::{Error, Result};
use crate::layers::{concat_channels, glorot_init, split_channels, Conv2d, Parameterized};
use crate::numcore::{gemm, softmax_in_place, MatRef, Prng, Scalar, Tensor};

/// Depths and head count of a relative self-attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionDims {
    pub heads: usize,
    pub key_depth: usize,
    pub value_depth: usize,
}

impl AttentionDims {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0
            || self.key_depth % self.heads != 0
            || self.value_depth % self.heads != 0
            || self.key_depth == 0
            || self.value_depth == 0
        {
            return Err(Error::Config(format!(
                "key depth {} and value depth {} must be positive multiples of head count {}",
                self.key_depth, self.value_depth, self.heads
            )));
        }
        Ok(())
    }

    pub fn key_per_head(&self) -> usize {
        self.key_depth / self.heads
    }

    pub fn value_per_head(&self) -> usize {
        self.value_depth / self.heads
    }
}

/// Spatial grid of one attention map; pixel `i` sits at `(i / width, i % width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Grid {
    height: usize,
    width: usize,
}

impl Grid {
    fn positions(&self) -> usize {
        self.height * self.width
    }
}

/// Per-head query/key relative terms: `qw[i, dx] = q_i . rel_w[dx]`,
/// `qh[i, dy] = q_i . rel_h[dy]`, with `q` channel-major `[d x HW]`.
fn relative_terms<T: Scalar>(
    grid: Grid,
    depth: usize,
    q: &[T],
    rel_w: &[T],
    rel_h: &[T],
) -> (Vec<T>, Vec<T>) {
    let n = grid.positions();
    let (nw, nh) = (2 * grid.width - 1, 2 * grid.height - 1);
    let qt = MatRef::row_major(q, depth, n).t();
    let mut qw = vec![T::zero(); n * nw];
    gemm(T::one(), qt, MatRef::row_major(rel_w, nw, depth).t(), T::zero(), &mut qw);
    let mut qh = vec![T::zero(); n * nh];
    gemm(T::one(), qt, MatRef::row_major(rel_h, nh, depth).t(), T::zero(), &mut qh);
    (qw, qh)
}

/// Scaled logits `[HW x HW]` for one head from channel-major `q`, `k`.
fn head_logits<T: Scalar>(grid: Grid, depth: usize, q: &[T], k: &[T], rel_w: &[T], rel_h: &[T]) -> Vec<T> {
    let n = grid.positions();
    let (nw, nh) = (2 * grid.width - 1, 2 * grid.height - 1);
    let mut logits = vec![T::zero(); n * n];
    gemm(
        T::one(),
        MatRef::row_major(q, depth, n).t(),
        MatRef::row_major(k, depth, n),
        T::zero(),
        &mut logits,
    );
    let (qw, qh) = relative_terms(grid, depth, q, rel_w, rel_h);
    let scale = T::from_f64(1.0 / (depth as f64).sqrt());
    for i in 0..n {
        let (iy, ix) = (i / grid.width, i % grid.width);
        let row = &mut logits[i * n..(i + 1) * n];
        let rw = &qw[i * nw + grid.width - 1 - ix..][..grid.width];
        let rh = &qh[i * nh + grid.height - 1 - iy..][..grid.height];
        for (line, &h) in row.chunks_mut(grid.width).zip(rh) {
            for (v, &w) in line.iter_mut().zip(rw) {
                *v = (*v + w + h) * scale;
            }
        }
    }
    logits
}

fn check_head_inputs<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    rel_w: &Tensor<T>,
    rel_h: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<usize> {
    let n = height * width;
    let depth = q.shape().get(1).copied().unwrap_or(0);
    let ok = q.shape() == [n, depth]
        && k.shape() == [n, depth]
        && rel_w.shape() == [2 * width - 1, depth]
        && rel_h.shape() == [2 * height - 1, depth];
    if !ok {
        return Err(Error::Dimension(format!(
            "relative attention on a {height}x{width} grid got q {:?}, k {:?}, rel_w {:?}, rel_h {:?}",
            q.shape(),
            k.shape(),
            rel_w.shape(),
            rel_h.shape()
        )));
    }
    Ok(depth)
}

fn transpose<T: Scalar>(t: &Tensor<T>) -> Vec<T> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = t.data()[i * c + j];
        }
    }
    out
}

/// Relative-position attention logits for one head.
///
/// `q` and `k` are `[HW x d]` (one row per pixel, row-major pixel order);
/// `rel_w` is `[2W-1 x d]` indexed by `jx - ix + W - 1`, `rel_h` is
/// `[2H-1 x d]` indexed by `jy - iy + H - 1`. Entry `(i, j)` is
/// `q_i . (k_j + rel_w[jx-ix] + rel_h[jy-iy]) / sqrt(d)`.
pub fn relative_logits<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    rel_w: &Tensor<T>,
    rel_h: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let depth = check_head_inputs(q, k, rel_w, rel_h, height, width)?;
    let grid = Grid { height, width };
    let logits = head_logits(grid, depth, &transpose(q), &transpose(k), rel_w.data(), rel_h.data());
    Tensor::new(&[height * width, height * width], logits)
}

/// Single-head output `softmax(logits) V`, with `v` laid out `[HW x dv]`.
pub fn self_attention_head<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    rel_w: &Tensor<T>,
    rel_h: &Tensor<T>,
    height: usize,
    width: usize,
) -> Result<Tensor<T>> {
    let mut weights = relative_logits(q, k, rel_w, rel_h, height, width)?;
    let n = height * width;
    if v.rank() != 2 || v.shape()[0] != n {
        return Err(Error::Dimension(format!(
            "values {:?} do not match {n} positions",
            v.shape()
        )));
    }
    for row in weights.data_mut().chunks_mut(n) {
        softmax_in_place(row);
    }
    let dv = v.shape()[1];
    let mut out = vec![T::zero(); n * dv];
    gemm(
        T::one(),
        MatRef::row_major(weights.data(), n, n),
        MatRef::row_major(v.data(), n, dv),
        T::zero(),
        &mut out,
    );
    Tensor::new(&[n, dv], out)
}

/// Multi-head relative self-attention over a fixed `H x W` grid.
///
/// Queries, keys and values come from pointwise convolutions of the input;
/// head outputs are concatenated in head order and mixed by the pointwise
/// output projection.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativeSelfAttention2d<T = f32> {
    pub query: Conv2d<T>,
    pub key: Conv2d<T>,
    pub value: Conv2d<T>,
    pub output: Conv2d<T>,
    /// `[2W-1 x d_k/N_h]`, shared by all heads.
    pub rel_w: Tensor<T>,
    /// `[2H-1 x d_k/N_h]`, shared by all heads.
    pub rel_h: Tensor<T>,
    pub dims: AttentionDims,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache<T> {
    input: Tensor<T>,
    q: Tensor<T>,
    k: Tensor<T>,
    v: Tensor<T>,
    /// Post-softmax weights, `[B x N_h x HW x HW]`.
    weights: Vec<T>,
    heads_out: Tensor<T>,
}

impl<T: Scalar> RelativeSelfAttention2d<T> {
    pub fn new(
        in_channels: usize,
        dims: AttentionDims,
        height: usize,
        width: usize,
        prng: &mut Prng,
    ) -> Result<Self> {
        dims.validate()?;
        if height == 0 || width == 0 {
            return Err(Error::Config("attention grid must be non-empty".into()));
        }
        let dkh = dims.key_per_head();
        Ok(RelativeSelfAttention2d {
            query: Conv2d::new(in_channels, dims.key_depth, 1, 1, 0, prng),
            key: Conv2d::new(in_channels, dims.key_depth, 1, 1, 0, prng),
            value: Conv2d::new(in_channels, dims.value_depth, 1, 1, 0, prng),
            output: Conv2d::new(dims.value_depth, dims.value_depth, 1, 1, 0, prng),
            rel_w: glorot_init(&[2 * width - 1, dkh], prng),
            rel_h: glorot_init(&[2 * height - 1, dkh], prng),
            dims,
            height,
            width,
        })
    }

    fn grid(&self) -> Grid {
        Grid {
            height: self.height,
            width: self.width,
        }
    }

    fn check(&self, x: &Tensor<T>) -> Result<usize> {
        let s = x.shape();
        if s.len() != 4 || s[2] != self.height || s[3] != self.width {
            return Err(Error::Dimension(format!(
                "attention built for {}x{} maps, got {s:?}",
                self.height, self.width
            )));
        }
        Ok(s[0])
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AttentionCache<T>)> {
        let batch = self.check(x)?;
        let q = self.query.forward(x)?;
        let k = self.key.forward(x)?;
        let v = self.value.forward(x)?;
        let grid = self.grid();
        let n = grid.positions();
        let (nh, dkh, dvh) = (self.dims.heads, self.dims.key_per_head(), self.dims.value_per_head());
        let mut weights = Vec::with_capacity(batch * nh * n * n);
        let mut heads_out = vec![T::zero(); batch * self.dims.value_depth * n];
        for b in 0..batch {
            for h in 0..nh {
                let qs = &q.data()[(b * self.dims.key_depth + h * dkh) * n..][..dkh * n];
                let ks = &k.data()[(b * self.dims.key_depth + h * dkh) * n..][..dkh * n];
                let vs = &v.data()[(b * self.dims.value_depth + h * dvh) * n..][..dvh * n];
                let mut a = head_logits(grid, dkh, qs, ks, self.rel_w.data(), self.rel_h.data());
                for row in a.chunks_mut(n) {
                    softmax_in_place(row);
                }
                // out[d, i] = sum_j v[d, j] a[i, j]
                let dst = &mut heads_out[(b * self.dims.value_depth + h * dvh) * n..][..dvh * n];
                gemm(
                    T::one(),
                    MatRef::row_major(vs, dvh, n),
                    MatRef::row_major(&a, n, n).t(),
                    T::zero(),
                    dst,
                );
                weights.extend_from_slice(&a);
            }
        }
        let heads_out = Tensor::new(&[batch, self.dims.value_depth, self.height, self.width], heads_out)?;
        let out = self.output.forward(&heads_out)?;
        Ok((
            out,
            AttentionCache {
                input: x.clone(),
                q,
                k,
                v,
                weights,
                heads_out,
            },
        ))
    }

    /// Post-softmax attention weights `[B x N_h x HW x HW]` from a cache.
    pub fn attention_weights<'a>(&self, cache: &'a AttentionCache<T>) -> &'a [T] {
        &cache.weights
    }

    pub fn backward(&self, cache: &AttentionCache<T>, grad_out: &Tensor<T>) -> Result<BlockGrads<T>> {
        let out_grads = self.output.backward(&cache.heads_out, grad_out)?;
        let batch = self.check(&cache.input)?;
        let grid = self.grid();
        let n = grid.positions();
        let (nh, dk, dv) = (self.dims.heads, self.dims.key_depth, self.dims.value_depth);
        let (dkh, dvh) = (self.dims.key_per_head(), self.dims.value_per_head());
        let (nw, nhh) = (2 * self.width - 1, 2 * self.height - 1);
        let scale = T::from_f64(1.0 / (dkh as f64).sqrt());

        let mut d_q = vec![T::zero(); cache.q.len()];
        let mut d_k = vec![T::zero(); cache.k.len()];
        let mut d_v = vec![T::zero(); cache.v.len()];
        let mut d_rel_w = vec![T::zero(); self.rel_w.len()];
        let mut d_rel_h = vec![T::zero(); self.rel_h.len()];
        let mut d_a = vec![T::zero(); n * n];
        let mut d_qw = vec![T::zero(); n * nw];
        let mut d_qh = vec![T::zero(); n * nhh];

        for b in 0..batch {
            for h in 0..nh {
                let a = &cache.weights[(b * nh + h) * n * n..][..n * n];
                let q_off = (b * dk + h * dkh) * n;
                let v_off = (b * dv + h * dvh) * n;
                let qs = &cache.q.data()[q_off..][..dkh * n];
                let ks = &cache.k.data()[q_off..][..dkh * n];
                let vs = &cache.v.data()[v_off..][..dvh * n];
                let d_o = MatRef::row_major(&out_grads.input.data()[v_off..][..dvh * n], dvh, n);

                // dA[i, j] = sum_d dO[d, i] v[d, j]
                gemm(T::one(), d_o.t(), MatRef::row_major(vs, dvh, n), T::zero(), &mut d_a);
                // dV[d, j] = sum_i dO[d, i] A[i, j]
                gemm(T::one(), d_o, MatRef::row_major(a, n, n), T::zero(), &mut d_v[v_off..][..dvh * n]);

                // softmax backward, then fold in the logit scale
                for (da_row, a_row) in d_a.chunks_mut(n).zip(a.chunks(n)) {
                    let dot = da_row.iter().zip(a_row).fold(T::zero(), |s, (&g, &p)| s + g * p);
                    for (g, &p) in da_row.iter_mut().zip(a_row) {
                        *g = p * (*g - dot) * scale;
                    }
                }
                let ds = &d_a;

                d_qw.fill(T::zero());
                d_qh.fill(T::zero());
                for i in 0..n {
                    let (iy, ix) = (i / self.width, i % self.width);
                    let gw = &mut d_qw[i * nw + self.width - 1 - ix..][..self.width];
                    let gh = &mut d_qh[i * nhh + self.height - 1 - iy..][..self.height];
                    for (line, gy) in ds[i * n..(i + 1) * n].chunks(self.width).zip(gh) {
                        for (gx, &g) in gw.iter_mut().zip(line) {
                            *gx += g;
                            *gy += g;
                        }
                    }
                }

                let dmat = MatRef::row_major(ds, n, n);
                let q_mat = MatRef::row_major(qs, dkh, n);
                let dq = &mut d_q[q_off..][..dkh * n];
                // dq[d, i] = sum_j k[d, j] dS[i, j] + rel terms
                gemm(T::one(), MatRef::row_major(ks, dkh, n), dmat.t(), T::zero(), dq);
                gemm(
                    T::one(),
                    MatRef::row_major(self.rel_w.data(), nw, dkh).t(),
                    MatRef::row_major(&d_qw, n, nw).t(),
                    T::one(),
                    dq,
                );
                gemm(
                    T::one(),
                    MatRef::row_major(self.rel_h.data(), nhh, dkh).t(),
                    MatRef::row_major(&d_qh, n, nhh).t(),
                    T::one(),
                    dq,
                );
                // dk[d, j] = sum_i q[d, i] dS[i, j]
                gemm(T::one(), q_mat, dmat, T::zero(), &mut d_k[q_off..][..dkh * n]);
                // d rel_w[dx, d] = sum_i dqw[i, dx] q[d, i]
                gemm(T::one(), MatRef::row_major(&d_qw, n, nw).t(), q_mat.t(), T::one(), &mut d_rel_w);
                gemm(T::one(), MatRef::row_major(&d_qh, n, nhh).t(), q_mat.t(), T::one(), &mut d_rel_h);
            }
        }

        let d_q = Tensor::new(cache.q.shape(), d_q)?;
        let d_k = Tensor::new(cache.k.shape(), d_k)?;
        let d_v = Tensor::new(cache.v.shape(), d_v)?;
        let gq = self.query.backward(&cache.input, &d_q)?;
        let gk = self.key.backward(&cache.input, &d_k)?;
        let gv = self.value.backward(&cache.input, &d_v)?;
        let mut input = gq.input;
        input.add_assign(&gk.input)?;
        input.add_assign(&gv.input)?;
        Ok(BlockGrads {
            input,
            params: vec![
                gq.weight,
                gq.bias,
                gk.weight,
                gk.bias,
                gv.weight,
                gv.bias,
                out_grads.weight,
                out_grads.bias,
                Tensor::new(self.rel_w.shape(), d_rel_w)?,
                Tensor::new(self.rel_h.shape(), d_rel_h)?,
            ],
        })
    }
}

impl<T: Scalar> Parameterized<T> for RelativeSelfAttention2d<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, conv) in [
            ("query", &self.query),
            ("key", &self.key),
            ("value", &self.value),
            ("output", &self.output),
        ] {
            for (name, t) in conv.parameters() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out.push(("rel_w".into(), &self.rel_w));
        out.push(("rel_h".into(), &self.rel_h));
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.query.parameters_mut();
        out.extend(self.key.parameters_mut());
        out.extend(self.value.parameters_mut());
        out.extend(self.output.parameters_mut());
        out.push(&mut self.rel_w);
        out.push(&mut self.rel_h);
        out
    }
}

/// `conv(X)` concatenated with multi-head attention features along channels.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedAttentionConv<T = f32> {
    pub conv: Conv2d<T>,
    pub attention: RelativeSelfAttention2d<T>,
}

#[derive(Clone, Debug)]
pub struct AugmentedCache<T> {
    input: Tensor<T>,
    attention: AttentionCache<T>,
}

impl<T: Scalar> AugmentedAttentionConv<T> {
    /// `out_channels` total, of which `dims.value_depth` come from attention.
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        dims: AttentionDims,
        height: usize,
        width: usize,
        prng: &mut Prng,
    ) -> Result<Self> {
        if out_channels <= dims.value_depth {
            return Err(Error::Config(format!(
                "output channels {out_channels} must exceed attention value depth {}",
                dims.value_depth
            )));
        }
        Ok(AugmentedAttentionConv {
            conv: Conv2d::new(in_channels, out_channels - dims.value_depth, 3, 1, 1, prng),
            attention: RelativeSelfAttention2d::new(in_channels, dims, height, width, prng)?,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels() + self.attention.dims.value_depth
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        concat_channels(&self.conv.forward(x)?, &self.attention.forward(x)?)
    }

    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, AugmentedCache<T>)> {
        let (attn, attention) = self.attention.forward_cached(x)?;
        let out = concat_channels(&self.conv.forward(x)?, &attn)?;
        Ok((
            out,
            AugmentedCache {
                input: x.clone(),
                attention,
            },
        ))
    }

    pub fn backward(&self, cache: &AugmentedCache<T>, grad_out: &Tensor<T>) -> Result<BlockGrads<T>> {
        let (g_conv, g_attn) = split_channels(grad_out, self.conv.out_channels())?;
        let conv = self.conv.backward(&cache.input, &g_conv)?;
        let attn = self.attention.backward(&cache.attention, &g_attn)?;
        let mut input = conv.input;
        input.add_assign(&attn.input)?;
        let mut params = vec![conv.weight, conv.bias];
        params.extend(attn.params);
        Ok(BlockGrads { input, params })
    }
}

impl<T: Scalar> Parameterized<T> for AugmentedAttentionConv<T> {
    fn parameters(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .conv
            .parameters()
            .into_iter()
            .map(|(n, t)| (format!("conv.{n}"), t))
            .collect();
        for (n, t) in self.attention.parameters() {
            out.push((format!("mha.{n}"), t));
        }
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.conv.parameters_mut();
        out.extend(self.attention.parameters_mut());
        out
    }
}

/// Multi-head attention forward (the block's `forward`, as a free function).
pub fn multi_head_attention<T: Scalar>(attn: &RelativeSelfAttention2d<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    attn.forward(x)
}

/// Attention-augmented convolution forward.
pub fn attention_augmented_conv<T: Scalar>(aac: &AugmentedAttentionConv<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    aac.forward(x)
}
