//! Optimized layer and attention paths against naive loop oracles.

use seishet::attention::{
    attention_augmented_conv, multi_head_attention, relative_logits, se_excite_apply, se_squeeze,
    self_attention_head, AttentionDims, AugmentedAttentionConv, RelativeSelfAttention2d, SeBlock,
    SeSpatialBlock,
};
use seishet::layers::{Conv2d, Parameterized, TransposedConv2d};
use seishet::numcore::{Prng, Tensor};
use seishet::oracles;

fn random(shape: &[usize], prng: &mut Prng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| prng.uniform(-1.0, 1.0))
}

/// Small integers: every partial sum is exact, so any summation order agrees.
fn random_ints(shape: &[usize], prng: &mut Prng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| prng.uniform_int(-4, 4) as f64)
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn conv2d_identity_kernel() {
    let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 1, &mut Prng::new(0));
    conv.weight.data_mut().fill(0.0);
    conv.weight.set(&[0, 0, 1, 1], 1.0);
    let x = random(&[1, 1, 3, 3], &mut Prng::new(1));
    assert_eq!(conv.forward(&x).unwrap(), x);
}

#[test]
fn conv2d_counting_kernel() {
    let mut conv = Conv2d::<f64>::new(1, 1, 3, 1, 0, &mut Prng::new(0));
    conv.weight.data_mut().fill(1.0);
    conv.bias.data_mut()[0] = 0.5;
    let y = conv.forward(&Tensor::full(&[1, 1, 5, 5], 1.0)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 3, 3]);
    assert!(y.data().iter().all(|&v| v == 9.5));
}

#[test]
fn conv2d_matches_direct_loops_exactly() {
    let mut p = Prng::new(2);
    let mut conv = Conv2d::<f64>::new(3, 4, 3, 1, 1, &mut p);
    conv.weight = random_ints(conv.weight.shape(), &mut p);
    conv.bias = random_ints(&[4], &mut p);
    let x = random_ints(&[2, 3, 8, 8], &mut p);
    assert_eq!(conv.forward(&x).unwrap(), oracles::conv2d(&conv, &x));

    let mut strided = Conv2d::<f64>::new(3, 2, 3, 2, 1, &mut p);
    strided.weight = random_ints(strided.weight.shape(), &mut p);
    assert_eq!(strided.forward(&x).unwrap(), oracles::conv2d(&strided, &x));
}

#[test]
fn conv2d_batch_decomposes() {
    let mut p = Prng::new(3);
    let conv = Conv2d::<f64>::new(2, 3, 3, 1, 1, &mut p);
    let x = random(&[3, 2, 5, 5], &mut p);
    let y = conv.forward(&x).unwrap();
    for b in 0..3 {
        let single = Tensor::stack(&[x.slice_first(b)]).unwrap();
        assert_eq!(conv.forward(&single).unwrap().slice_first(0), y.slice_first(b));
    }
}

#[test]
fn conv2d_backward_zero_and_single_pixel() {
    let mut p = Prng::new(4);
    let conv = Conv2d::<f64>::new(2, 3, 3, 1, 1, &mut p);
    let x = random(&[1, 2, 5, 5], &mut p);
    let g = conv.backward(&x, &Tensor::zeros(&[1, 3, 5, 5])).unwrap();
    assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.data()).all(|&v| v == 0.0));

    let mut gout = Tensor::zeros(&[1, 3, 5, 5]);
    gout.set(&[0, 1, 2, 3], 1.0);
    let g = conv.backward(&x, &gout).unwrap();
    for ic in 0..2 {
        for ki in 0..3 {
            for kj in 0..3 {
                let want = x.get(&[0, ic, 2 + ki - 1, 3 + kj - 1]);
                assert_eq!(g.weight.get(&[1, ic, ki, kj]), want);
                assert_eq!(g.weight.get(&[0, ic, ki, kj]), 0.0);
            }
        }
    }
    assert_eq!(g.bias.data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn conv2d_channel_mismatch() {
    let conv = Conv2d::<f32>::new(2, 3, 3, 1, 1, &mut Prng::new(0));
    assert!(conv.forward(&Tensor::zeros(&[1, 3, 4, 4])).is_err());
}

#[test]
fn transposed_conv_stamps_kernel_and_doubles() {
    let mut p = Prng::new(5);
    let up = TransposedConv2d::<f64>::upsample2x(1, 2, &mut p);
    let y = up.forward(&Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
    assert_eq!(y.shape(), &[1, 2, 2, 2]);
    // With padding 1 the 2x2 output sees the lower-right 2x2 of each 3x3 kernel.
    for o in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(y.get(&[0, o, i, j]), up.weight.get(&[0, o, i + 1, j + 1]));
            }
        }
    }
    let mut full = TransposedConv2d::<f64>::upsample2x(1, 1, &mut p);
    full.padding = 0;
    full.output_padding = 0;
    let y = full.forward(&Tensor::full(&[1, 1, 1, 1], 1.0)).unwrap();
    assert_eq!(y.data(), full.weight.data());

    let mut biased = TransposedConv2d::<f64>::upsample2x(3, 2, &mut p);
    biased.bias = Tensor::new(&[2], vec![0.25, -1.5]).unwrap();
    let y = biased.forward(&Tensor::zeros(&[2, 3, 4, 5])).unwrap();
    assert_eq!(y.shape(), &[2, 2, 8, 10]);
    for (plane, bias) in y.data().chunks(80).zip([0.25, -1.5, 0.25, -1.5]) {
        assert!(plane.iter().all(|&v| v == bias));
    }
}

#[test]
fn transposed_conv_is_adjoint_of_conv() {
    let mut p = Prng::new(6);
    for (cin, cout, h, w) in [(100, 20, 11, 11), (20, 10, 22, 22), (3, 2, 4, 5)] {
        let up = TransposedConv2d::<f64>::upsample2x(cin, cout, &mut p);
        let down = Conv2d::from_parts(up.weight.clone(), Tensor::zeros(&[cin]), 2, 1).unwrap();
        let small = random(&[1, cin, h, w], &mut p);
        let big = random(&[1, cout, 2 * h, 2 * w], &mut p);
        let lhs = down.forward(&big).unwrap().dot(&small).unwrap();
        let rhs = big.dot(&up.forward(&small).unwrap()).unwrap();
        assert!((lhs - rhs).abs() < 1e-5, "{lhs} vs {rhs}");
    }
}

#[test]
fn squeeze_equation() {
    let mut p = Prng::new(7);
    let x = random(&[3, 5, 4, 4], &mut p);
    let z = se_squeeze(&x).unwrap();
    for (b, row) in oracles::squeeze(&x).iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            assert!((z.get(&[b, c]) - v).abs() < 1e-7);
        }
    }
}

#[test]
fn excite_equation() {
    let mut p = Prng::new(8);
    let mut block = SeBlock::<f64>::new(12, 4, &mut p).unwrap();
    for t in block.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[2, 12, 3, 5], &mut p);
    let y = se_excite_apply(&block, &x, &se_squeeze(&x).unwrap()).unwrap();
    assert!(max_abs_diff(&y, &oracles::se_excite(&block, &x)) < 1e-6);
}

#[test]
fn se_with_spatial_gate_matches_loops() {
    let mut p = Prng::new(9);
    let mut block = SeSpatialBlock::<f64>::new(8, 2, &mut p).unwrap();
    for t in block.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[2, 8, 4, 3], &mut p);
    assert!(max_abs_diff(&block.forward(&x).unwrap(), &oracles::se_spatial(&block, &x)) < 1e-6);
}

#[test]
fn relative_logit_equation() {
    let mut p = Prng::new(10);
    for (h, w, d) in [(2, 2, 3), (3, 4, 2)] {
        let q = random(&[h * w, d], &mut p);
        let k = random(&[h * w, d], &mut p);
        let rw = random(&[2 * w - 1, d], &mut p);
        let rh = random(&[2 * h - 1, d], &mut p);
        let got = relative_logits(&q, &k, &rw, &rh, h, w).unwrap();
        let want = oracles::relative_logits(&q, &k, &rw, &rh, h, w);
        for (i, row) in want.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((got.get(&[i, j]) - v).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn single_head_equation() {
    let mut p = Prng::new(11);
    let (h, w, d, dv) = (2, 2, 4, 3);
    let q = random(&[4, d], &mut p);
    let k = random(&[4, d], &mut p);
    let v = random(&[4, dv], &mut p);
    let rw = random(&[3, d], &mut p);
    let rh = random(&[3, d], &mut p);
    let got = self_attention_head(&q, &k, &v, &rw, &rh, h, w).unwrap();
    let want = oracles::attention_head(&q, &k, &v, &rw, &rh, h, w);
    for (i, row) in want.iter().enumerate() {
        for (c, val) in row.iter().enumerate() {
            assert!((got.get(&[i, c]) - val).abs() < 1e-6);
        }
    }
}

fn randomized_attention(dims: AttentionDims, fin: usize, h: usize, w: usize, p: &mut Prng) -> RelativeSelfAttention2d<f64> {
    let mut attn = RelativeSelfAttention2d::<f64>::new(fin, dims, h, w, p).unwrap();
    for t in attn.parameters_mut() {
        *t = random(t.shape(), p);
    }
    attn
}

#[test]
fn multi_head_equation() {
    let mut p = Prng::new(12);
    let dims = AttentionDims {
        heads: 2,
        key_depth: 4,
        value_depth: 6,
    };
    let attn = randomized_attention(dims, 5, 3, 3, &mut p);
    let x = random(&[2, 5, 3, 3], &mut p);
    let got = multi_head_attention(&attn, &x).unwrap();
    assert!(max_abs_diff(&got, &oracles::multi_head(&attn, &x)) < 1e-6);
}

#[test]
fn one_head_with_identity_projection_is_raw_head() {
    let mut p = Prng::new(13);
    let dims = AttentionDims {
        heads: 1,
        key_depth: 3,
        value_depth: 2,
    };
    let mut attn = randomized_attention(dims, 4, 2, 2, &mut p);
    attn.output.weight = Tensor::new(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    attn.output.bias = Tensor::zeros(&[2]);
    let x = random(&[1, 4, 2, 2], &mut p);
    let got = attn.forward(&x).unwrap();

    let rows = |conv: &Conv2d<f64>| {
        let y = conv.forward(&x).unwrap();
        let c = conv.out_channels();
        Tensor::from_fn(&[4, c], |idx| y.data()[(idx % c) * 4 + idx / c])
    };
    let head = self_attention_head(&rows(&attn.query), &rows(&attn.key), &rows(&attn.value), &attn.rel_w, &attn.rel_h, 2, 2)
        .unwrap();
    for i in 0..4 {
        for c in 0..2 {
            assert!((got.get(&[0, c, i / 2, i % 2]) - head.get(&[i, c])).abs() < 1e-12);
        }
    }
}

#[test]
fn augmented_conv_equation() {
    let mut p = Prng::new(14);
    let dims = AttentionDims {
        heads: 2,
        key_depth: 4,
        value_depth: 4,
    };
    let mut aac = AugmentedAttentionConv::<f64>::new(3, 9, dims, 4, 4, &mut p).unwrap();
    for t in aac.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[2, 3, 4, 4], &mut p);
    let got = attention_augmented_conv(&aac, &x).unwrap();
    assert_eq!(got.shape(), &[2, 9, 4, 4]);
    assert!(max_abs_diff(&got, &oracles::augmented_conv(&aac, &x)) < 1e-6);
}
