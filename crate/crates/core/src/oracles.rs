//! Naive loop implementations used only as independent test oracles.
//!
//! Nothing here shares code with the optimized paths: every routine is a
//! direct scalar-loop transcription of the operation it checks.

use crate::attention::{AugmentedAttentionConv, RelativeSelfAttention2d, SeBlock, SeSpatialBlock};
use crate::layers::Conv2d;
use crate::numcore::Tensor;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Direct 6-loop cross-correlation with zero padding.
pub fn conv2d(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k, s, p) = (conv.out_channels(), conv.kernel(), conv.stride, conv.padding as isize);
    let ho = (h + 2 * conv.padding - k) / s + 1;
    let wo = (w + 2 * conv.padding - k) / s + 1;
    let mut out = Tensor::zeros(&[b, o, ho, wo]);
    for n in 0..b {
        for oc in 0..o {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = conv.bias.get(&[oc]);
                    for ic in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let ii = (i * s + ki) as isize - p;
                                let jj = (j * s + kj) as isize - p;
                                if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                                    acc += conv.weight.get(&[oc, ic, ki, kj])
                                        * x.get(&[n, ic, ii as usize, jj as usize]);
                                }
                            }
                        }
                    }
                    out.set(&[n, oc, i, j], acc);
                }
            }
        }
    }
    out
}

/// Global average pool per channel.
pub fn squeeze(x: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    (0..b)
        .map(|n| {
            (0..c)
                .map(|ch| {
                    let mut s = 0.0;
                    for i in 0..h {
                        for j in 0..w {
                            s += x.get(&[n, ch, i, j]);
                        }
                    }
                    s / (h * w) as f64
                })
                .collect()
        })
        .collect()
}

/// `sigmoid(W2 gelu(W1 z + b1) + b2) o X` written out element by element.
pub fn se_excite(block: &SeBlock<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let z = squeeze(x);
    let (hidden, ch) = (block.fc1.outputs(), block.channels());
    let mut out = x.clone();
    let (h, w) = (x.shape()[2], x.shape()[3]);
    for (n, zn) in z.iter().enumerate() {
        let a: Vec<f64> = (0..hidden)
            .map(|r| {
                let mut s = block.fc1.bias.get(&[r]);
                for c in 0..ch {
                    s += block.fc1.weight.get(&[r, c]) * zn[c];
                }
                gelu(s)
            })
            .collect();
        for c in 0..ch {
            let mut s = block.fc2.bias.get(&[c]);
            for (r, av) in a.iter().enumerate() {
                s += block.fc2.weight.get(&[c, r]) * av;
            }
            let g = sigmoid(s);
            for i in 0..h {
                for j in 0..w {
                    out.set(&[n, c, i, j], g * x.get(&[n, c, i, j]));
                }
            }
        }
    }
    out
}

/// SE excitation followed by the per-pixel sigmoid gate of a 1x1 conv.
pub fn se_spatial(block: &SeSpatialBlock<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let x1 = se_excite(&block.se, x);
    let pre = conv2d(&block.spatial.conv, &x1);
    let mut out = x1.clone();
    let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    for n in 0..b {
        for i in 0..h {
            for j in 0..w {
                let g = sigmoid(pre.get(&[n, 0, i, j]));
                for ch in 0..c {
                    out.set(&[n, ch, i, j], g * x1.get(&[n, ch, i, j]));
                }
            }
        }
    }
    out
}

/// Pairwise relative logits for one head; `q`, `k` are `[HW x d]`.
pub fn relative_logits(
    q: &Tensor<f64>,
    k: &Tensor<f64>,
    rel_w: &Tensor<f64>,
    rel_h: &Tensor<f64>,
    height: usize,
    width: usize,
) -> Vec<Vec<f64>> {
    let d = q.shape()[1];
    let n = height * width;
    let mut out = vec![vec![0.0; n]; n];
    for (i, row) in out.iter_mut().enumerate() {
        let (iy, ix) = ((i / width) as isize, (i % width) as isize);
        for (j, v) in row.iter_mut().enumerate() {
            let (jy, jx) = ((j / width) as isize, (j % width) as isize);
            let rw = (jx - ix + width as isize - 1) as usize;
            let rh = (jy - iy + height as isize - 1) as usize;
            let mut s = 0.0;
            for c in 0..d {
                s += q.get(&[i, c]) * (k.get(&[j, c]) + rel_w.get(&[rw, c]) + rel_h.get(&[rh, c]));
            }
            *v = s / (d as f64).sqrt();
        }
    }
    out
}

/// One attention head: softmax over each logit row, then weighted values.
pub fn attention_head(
    q: &Tensor<f64>,
    k: &Tensor<f64>,
    v: &Tensor<f64>,
    rel_w: &Tensor<f64>,
    rel_h: &Tensor<f64>,
    height: usize,
    width: usize,
) -> Vec<Vec<f64>> {
    let logits = relative_logits(q, k, rel_w, rel_h, height, width);
    let dv = v.shape()[1];
    logits
        .iter()
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = e.iter().sum();
            (0..dv)
                .map(|c| e.iter().enumerate().map(|(j, ej)| ej / total * v.get(&[j, c])).sum())
                .collect()
        })
        .collect()
}

/// Pointwise projection of item `n`: returns `[HW x out]` rows per pixel.
fn project(conv: &Conv2d<f64>, x: &Tensor<f64>, n: usize) -> Tensor<f64> {
    let (c, h, w) = (x.shape()[1], x.shape()[2], x.shape()[3]);
    let o = conv.out_channels();
    let mut out = Tensor::zeros(&[h * w, o]);
    for i in 0..h {
        for j in 0..w {
            for oc in 0..o {
                let mut s = conv.bias.get(&[oc]);
                for ic in 0..c {
                    s += conv.weight.get(&[oc, ic, 0, 0]) * x.get(&[n, ic, i, j]);
                }
                out.set(&[i * w + j, oc], s);
            }
        }
    }
    out
}

fn columns(t: &Tensor<f64>, start: usize, len: usize) -> Tensor<f64> {
    let rows = t.shape()[0];
    Tensor::from_fn(&[rows, len], |idx| t.get(&[idx / len, start + idx % len]))
}

/// `concat[O_1..O_Nh] W_O` laid out `[B x d_v x H x W]`.
pub fn multi_head(attn: &RelativeSelfAttention2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let (b, h, w) = (x.shape()[0], attn.height, attn.width);
    let (dkh, dvh, dv) = (attn.dims.key_per_head(), attn.dims.value_per_head(), attn.dims.value_depth);
    let mut out = Tensor::zeros(&[b, dv, h, w]);
    for n in 0..b {
        let (q, k, v) = (project(&attn.query, x, n), project(&attn.key, x, n), project(&attn.value, x, n));
        let mut concat = vec![vec![0.0; dv]; h * w];
        for head in 0..attn.dims.heads {
            let o = attention_head(
                &columns(&q, head * dkh, dkh),
                &columns(&k, head * dkh, dkh),
                &columns(&v, head * dvh, dvh),
                &attn.rel_w,
                &attn.rel_h,
                h,
                w,
            );
            for (i, row) in o.iter().enumerate() {
                concat[i][head * dvh..(head + 1) * dvh].copy_from_slice(row);
            }
        }
        for (i, row) in concat.iter().enumerate() {
            for oc in 0..dv {
                let mut s = attn.output.bias.get(&[oc]);
                for (ic, val) in row.iter().enumerate() {
                    s += attn.output.weight.get(&[oc, ic, 0, 0]) * val;
                }
                out.set(&[n, oc, i / w, i % w], s);
            }
        }
    }
    out
}

/// Convolution branch followed by attention channels.
pub fn augmented_conv(aac: &AugmentedAttentionConv<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let conv = conv2d(&aac.conv, x);
    let mha = multi_head(&aac.attention, x);
    let (b, co, h, w) = (conv.shape()[0], conv.shape()[1], conv.shape()[2], conv.shape()[3]);
    let dv = mha.shape()[1];
    let mut out = Tensor::zeros(&[b, co + dv, h, w]);
    for n in 0..b {
        for c in 0..co + dv {
            for i in 0..h {
                for j in 0..w {
                    let v = if c < co {
                        conv.get(&[n, c, i, j])
                    } else {
                        mha.get(&[n, c - co, i, j])
                    };
                    out.set(&[n, c, i, j], v);
                }
            }
        }
    }
    out
}
