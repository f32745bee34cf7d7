//! Central-difference checks for every hand-written backward pass.

use seishet::attention::{AttentionDims, AugmentedAttentionConv, RelativeSelfAttention2d, SeSpatialBlock};
use seishet::layers::{
    cross_entropy_2class, gelu_backward, maxpool2d, maxpool2d_backward, Conv2d, Dense, Parameterized,
    TransposedConv2d,
};
use seishet::numcore::{finite_difference_grad, gelu, max_relative_error, Prng, Tensor};
use seishet::Result;

const TOL: f64 = 1e-4;
const STEP: f64 = 1e-4;
// Absolute scale below which differences are finite-difference roundoff
// (f64 eps * |f| / h is about 1e-11 here).
const FLOOR: f64 = 1e-6;

fn random(shape: &[usize], prng: &mut Prng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| prng.uniform(-1.0, 1.0))
}

/// Checks d<probe, f(x)>/dx and d<probe, f(x)>/dtheta for one parameterized map.
fn check_module<M, F, B>(name: &str, module: &M, x: &Tensor<f64>, forward: F, backward: B)
where
    M: Parameterized<f64> + Clone,
    F: Fn(&M, &Tensor<f64>) -> Result<Tensor<f64>>,
    B: Fn(&M, &Tensor<f64>, &Tensor<f64>) -> Result<(Tensor<f64>, Vec<Tensor<f64>>)>,
{
    let mut prng = Prng::new(0xC0FFEE);
    let y = forward(module, x).unwrap();
    let probe = random(y.shape(), &mut prng);
    let (gx, gparams) = backward(module, x, &probe).unwrap();

    let numeric = finite_difference_grad(|t| forward(module, t)?.dot(&probe), x, STEP).unwrap();
    let err = max_relative_error(&gx, &numeric, FLOOR);
    assert!(err < TOL, "{name}: input gradient relative error {err:e}");

    let names: Vec<String> = module.parameters().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), gparams.len(), "{name}: gradient count");
    for (idx, pname) in names.iter().enumerate() {
        let base = module.parameters()[idx].1.clone();
        let numeric = finite_difference_grad(
            |t| {
                let mut m = module.clone();
                *m.parameters_mut()[idx] = t.clone();
                forward(&m, x)?.dot(&probe)
            },
            &base,
            STEP,
        )
        .unwrap();
        let err = max_relative_error(&gparams[idx], &numeric, FLOOR);
        assert!(err < TOL, "{name}.{pname}: relative error {err:e}");
    }
}

#[test]
fn conv2d_same_padding() {
    let mut p = Prng::new(1);
    let mut conv = Conv2d::<f64>::new(3, 4, 3, 1, 1, &mut p);
    conv.bias = random(&[4], &mut p);
    let x = random(&[2, 3, 5, 4], &mut p);
    check_module("conv2d", &conv, &x, |m, x| m.forward(x), |m, x, g| {
        let r = m.backward(x, g)?;
        Ok((r.input, vec![r.weight, r.bias]))
    });
}

#[test]
fn conv2d_strided_and_pointwise() {
    let mut p = Prng::new(2);
    let conv = Conv2d::<f64>::new(2, 3, 3, 2, 1, &mut p);
    let x = random(&[1, 2, 6, 5], &mut p);
    check_module("conv2d s2", &conv, &x, |m, x| m.forward(x), |m, x, g| {
        let r = m.backward(x, g)?;
        Ok((r.input, vec![r.weight, r.bias]))
    });
    let conv = Conv2d::<f64>::new(4, 2, 1, 1, 0, &mut p);
    let x = random(&[2, 4, 3, 3], &mut p);
    check_module("conv2d 1x1", &conv, &x, |m, x| m.forward(x), |m, x, g| {
        let r = m.backward(x, g)?;
        Ok((r.input, vec![r.weight, r.bias]))
    });
}

#[test]
fn transposed_conv2d() {
    let mut p = Prng::new(3);
    let mut up = TransposedConv2d::<f64>::upsample2x(3, 2, &mut p);
    up.bias = random(&[2], &mut p);
    let x = random(&[2, 3, 3, 4], &mut p);
    check_module("tconv", &up, &x, |m, x| m.forward(x), |m, x, g| {
        let r = m.backward(x, g)?;
        Ok((r.input, vec![r.weight, r.bias]))
    });
}

#[test]
fn dense_layer() {
    let mut p = Prng::new(4);
    let mut fc = Dense::<f64>::new(5, 3, &mut p);
    fc.bias = random(&[3], &mut p);
    let x = random(&[4, 5], &mut p);
    check_module("dense", &fc, &x, |m, x| m.forward(x), |m, x, g| {
        let r = m.backward(x, g)?;
        Ok((r.input, vec![r.weight, r.bias]))
    });
}

#[test]
fn gelu_activation() {
    let mut p = Prng::new(5);
    let x = random(&[3, 4], &mut p).scale(3.0);
    let probe = random(&[3, 4], &mut p);
    let analytic = gelu_backward(&x, &probe).unwrap();
    let numeric = finite_difference_grad(|t| gelu(t).dot(&probe), &x, STEP).unwrap();
    assert!(max_relative_error(&analytic, &numeric, FLOOR) < TOL);
}

#[test]
fn maxpool_away_from_ties() {
    let mut p = Prng::new(6);
    // distinct values so no window has a tie within the step size
    let mut vals: Vec<f64> = (0..2 * 2 * 4 * 6).map(|i| i as f64 * 0.1).collect();
    p.shuffle(&mut vals);
    let x = Tensor::new(&[2, 2, 4, 6], vals).unwrap();
    let pooled = maxpool2d(&x).unwrap();
    let probe = random(pooled.output.shape(), &mut p);
    let analytic = maxpool2d_backward(x.shape(), &pooled.argmax, &probe).unwrap();
    let numeric =
        finite_difference_grad(|t| maxpool2d(t)?.output.dot(&probe), &x, STEP).unwrap();
    assert!(max_relative_error(&analytic, &numeric, FLOOR) < TOL);
}

#[test]
fn cross_entropy_loss() {
    let mut p = Prng::new(7);
    let logits = random(&[2, 2, 3, 3], &mut p).scale(3.0);
    let target = Tensor::from_fn(&[2, 3, 3], |_| if p.unit() < 0.4 { 1.0 } else { 0.0 });
    for weight in [1.0, 3.5] {
        let analytic = cross_entropy_2class(&logits, &target, weight).unwrap().grad;
        let numeric = finite_difference_grad(
            |t| Ok(cross_entropy_2class(t, &target, weight)?.loss),
            &logits,
            STEP,
        )
        .unwrap();
        assert!(max_relative_error(&analytic, &numeric, FLOOR) < TOL);
    }
}

#[test]
fn se_with_spatial_attention() {
    let mut p = Prng::new(8);
    let mut block = SeSpatialBlock::<f64>::new(8, 4, &mut p).unwrap();
    for t in block.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[2, 8, 3, 4], &mut p);
    check_module("se+spatial", &block, &x, |m, x| m.forward(x), |m, x, g| {
        let (_, cache) = m.forward_cached(x)?;
        let r = m.backward(&cache, g)?;
        Ok((r.input, r.params))
    });
}

#[test]
fn relative_self_attention_two_heads() {
    let mut p = Prng::new(9);
    let dims = AttentionDims {
        heads: 2,
        key_depth: 4,
        value_depth: 4,
    };
    let mut attn = RelativeSelfAttention2d::<f64>::new(3, dims, 4, 4, &mut p).unwrap();
    for t in attn.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[2, 3, 4, 4], &mut p);
    check_module("mha", &attn, &x, |m, x| m.forward(x), |m, x, g| {
        let (_, cache) = m.forward_cached(x)?;
        let r = m.backward(&cache, g)?;
        Ok((r.input, r.params))
    });
}

#[test]
fn relative_self_attention_rectangular_grid() {
    let mut p = Prng::new(10);
    let dims = AttentionDims {
        heads: 1,
        key_depth: 3,
        value_depth: 2,
    };
    let mut attn = RelativeSelfAttention2d::<f64>::new(2, dims, 2, 3, &mut p).unwrap();
    for t in attn.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[1, 2, 2, 3], &mut p);
    check_module("mha 2x3", &attn, &x, |m, x| m.forward(x), |m, x, g| {
        let (_, cache) = m.forward_cached(x)?;
        let r = m.backward(&cache, g)?;
        Ok((r.input, r.params))
    });
}

#[test]
fn attention_augmented_convolution() {
    let mut p = Prng::new(11);
    let dims = AttentionDims {
        heads: 2,
        key_depth: 4,
        value_depth: 4,
    };
    let mut aac = AugmentedAttentionConv::<f64>::new(3, 7, dims, 4, 4, &mut p).unwrap();
    for t in aac.parameters_mut() {
        *t = random(t.shape(), &mut p);
    }
    let x = random(&[1, 3, 4, 4], &mut p);
    check_module("aac", &aac, &x, |m, x| m.forward(x), |m, x, g| {
        let (_, cache) = m.forward_cached(x)?;
        let r = m.backward(&cache, g)?;
        Ok((r.input, r.params))
    });
}
