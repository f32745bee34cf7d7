use seishet::layers::{cross_entropy_2class, Conv2d, Dense, Parameterized};
use seishet::model::{
    class_probability, count_params_flops, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint,
    summarize, AttentionVariant, Hyperparams, NetworkModel, LAYER_UNITS, PAPER_PARAMETER_COUNT,
};
use seishet::{Error, Prng, Tensor};

fn build(variant: AttentionVariant, seed: u64) -> NetworkModel {
    NetworkModel::build(variant, Hyperparams::default(), &mut Prng::new(seed)).unwrap()
}

fn patches(n: usize, seed: u64) -> Tensor {
    let mut p = Prng::new(seed);
    Tensor::from_fn(&[n, 1, 44, 44], |_| p.uniform(-1.0, 1.0) as f32)
}

/// Parameter shapes of the network written out by hand, one row per tensor.
fn shape_table(variant: AttentionVariant) -> Vec<Vec<usize>> {
    let mut t = vec![
        vec![20, 1, 3, 3],
        vec![20],
        vec![20, 20, 3, 3],
        vec![20],
        vec![50, 20, 3, 3],
        vec![50],
        vec![50, 50, 3, 3],
        vec![50],
        vec![50, 50, 3, 3],
        vec![50],
        vec![50, 50, 3, 3],
        vec![50],
    ];
    match variant {
        AttentionVariant::Se => t.extend([vec![25, 100], vec![25], vec![100, 25], vec![100], vec![1, 100, 1, 1], vec![1]]),
        AttentionVariant::SelfAttention => t.extend([
            vec![68, 100, 3, 3],
            vec![68],
            vec![32, 100, 1, 1],
            vec![32],
            vec![32, 100, 1, 1],
            vec![32],
            vec![32, 100, 1, 1],
            vec![32],
            vec![32, 32, 1, 1],
            vec![32],
            vec![21, 8],
            vec![21, 8],
        ]),
    }
    t.extend([vec![100, 20, 3, 3], vec![20], vec![20, 10, 3, 3], vec![10], vec![2, 10, 1, 1], vec![2]]);
    t
}

#[test]
fn shape_trace_layer_by_layer() {
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        let model = build(variant, 3);
        let (logits, trace) = model.forward_train(&patches(2, 1)).unwrap();
        let expected: Vec<(&str, Vec<usize>)> = vec![
            ("input", vec![1, 44, 44]),
            ("stage1.conv1", vec![20, 44, 44]),
            ("stage1.conv2", vec![20, 44, 44]),
            ("pool1", vec![20, 22, 22]),
            ("stage2.conv1", vec![50, 22, 22]),
            ("stage2.conv2", vec![50, 22, 22]),
            ("pool2", vec![50, 11, 11]),
            ("stage3.conv1", vec![50, 11, 11]),
            ("stage3.conv2", vec![50, 11, 11]),
            ("attention", vec![100, 11, 11]),
            ("up1", vec![20, 22, 22]),
            ("up2", vec![10, 44, 44]),
        ];
        assert_eq!(trace.shapes(), expected, "{variant}");
        assert_eq!(trace.concat_channels(), 100);
        assert_eq!(logits.shape(), &[2, 2, 44, 44]);
    }
}

#[test]
fn zero_input_gives_finite_output() {
    let model = build(AttentionVariant::SelfAttention, 0);
    let y = model.forward(&Tensor::zeros(&[1, 1, 44, 44])).unwrap();
    assert_eq!(y.shape(), &[1, 2, 44, 44]);
    assert!(y.all_finite());
}

#[test]
fn same_seed_same_parameters() {
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        assert_eq!(build(variant, 11), build(variant, 11));
        assert_ne!(build(variant, 11), build(variant, 12));
    }
}

#[test]
fn identical_patches_give_identical_rows() {
    let model = build(AttentionVariant::SelfAttention, 5);
    let one = patches(1, 9);
    let batch = Tensor::stack(&[one.slice_first(0), one.slice_first(0), one.slice_first(0)]).unwrap();
    let y = model.forward(&batch).unwrap();
    let alone = model.forward(&one).unwrap();
    for i in 0..3 {
        let row = y.slice_first(i);
        for (a, b) in row.data().iter().zip(alone.data()) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()), "row {i}: {a} vs {b}");
        }
        assert_eq!(row.data(), y.slice_first(0).data());
    }
}

#[test]
fn softmax_over_classes_sums_to_one() {
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        let model = build(variant, 2);
        let logits = model.forward(&patches(2, 4)).unwrap();
        let p1 = class_probability(&logits);
        let plane = 44 * 44;
        for b in 0..2 {
            for i in 0..plane {
                let z0 = logits.data()[b * 2 * plane + i] as f64;
                let z1 = logits.data()[b * 2 * plane + plane + i] as f64;
                let m = z0.max(z1);
                let (e0, e1) = ((z0 - m).exp(), (z1 - m).exp());
                let s = e0 / (e0 + e1) + e1 / (e0 + e1);
                assert!((s - 1.0).abs() <= 1e-6);
                let p = p1.data()[b * plane + i] as f64;
                assert!((p - e1 / (e0 + e1)).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn wrong_spatial_size_is_rejected() {
    let model = build(AttentionVariant::Se, 0);
    for shape in [[1, 1, 40, 44], [1, 1, 44, 46], [1, 2, 44, 44]] {
        let err = model.forward(&Tensor::zeros(&shape)).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)), "{shape:?}: {err}");
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let model = build(AttentionVariant::SelfAttention, 8);
    let x = patches(3, 8);
    assert_eq!(model.forward(&x).unwrap(), model.forward(&x).unwrap());
    assert_eq!(model.forward(&x).unwrap(), model.forward_train(&x).unwrap().0);
}

#[test]
fn single_layer_counts() {
    let mut p = Prng::new(0);
    assert_eq!(Conv2d::<f32>::new(1, 20, 3, 1, 1, &mut p).parameter_count(), 200);
    assert_eq!(Dense::<f32>::new(100, 25, &mut p).parameter_count(), 2525);
}

#[test]
fn parameter_counts_match_shape_table() {
    for (variant, hand_total) in [(AttentionVariant::Se, 105_598), (AttentionVariant::SelfAttention, 172_728)] {
        let model = build(variant, 0);
        let table = shape_table(variant);
        let oracle: usize = table.iter().map(|s| s.iter().product::<usize>()).sum();
        assert_eq!(oracle, hand_total, "{variant}");
        let shapes: Vec<Vec<usize>> = model.parameters().iter().map(|(_, t)| t.shape().to_vec()).collect();
        assert_eq!(shapes, table, "{variant}");
        let (params, flops) = count_params_flops(&model);
        assert_eq!(params, hand_total);
        assert!(flops > 0);
        let summary = summarize(&model);
        assert_eq!(summary.layers.iter().map(|l| l.parameters).sum::<usize>(), hand_total);
        assert!(summary.table().contains(&PAPER_PARAMETER_COUNT.to_string()));
    }
}

#[test]
fn se_flops_follow_convention() {
    // 2 FLOPs per multiply-accumulate, worked out layer by layer.
    let macs: u64 = 20 * 9 * 44 * 44
        + 20 * 20 * 9 * 44 * 44
        + 50 * 20 * 9 * 22 * 22
        + 50 * 50 * 9 * 22 * 22
        + 2 * 50 * 50 * 9 * 11 * 11
        + (2 * 100 * 25 + 100 * 121)
        + 100 * 20 * 9 * 11 * 11
        + 20 * 10 * 9 * 22 * 22
        + 10 * 2 * 44 * 44;
    assert_eq!(count_params_flops(&build(AttentionVariant::Se, 0)).1, 2 * macs);
}

#[test]
fn parameter_names_unique() {
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        let model = build(variant, 0);
        let mut names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
        let total = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), total);
        assert_eq!(model.frozen_flags().len(), total);
    }
}

#[test]
fn freeze_prefix_partitions_parameters() {
    let mut model = build(AttentionVariant::SelfAttention, 0);
    assert!(model.frozen_names().is_empty());
    model.freeze_prefix(2).unwrap();
    assert_eq!(
        model.frozen_names(),
        ["stage1.conv1.weight", "stage1.conv1.bias", "stage1.conv2.weight", "stage1.conv2.bias"]
    );
    let trainable = model.frozen_flags().iter().filter(|f| !**f).count();
    assert_eq!(trainable + 4, model.parameters().len());
    model.freeze_prefix(LAYER_UNITS.len()).unwrap();
    assert!(model.frozen_flags().iter().all(|f| *f));
    assert!(matches!(model.freeze_prefix(11), Err(Error::Config(_))));
}

/// Central differences of the end-to-end loss for a sampled set of scalars.
#[test]
fn end_to_end_gradient_on_sampled_parameters() {
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        let model = NetworkModel::<f64>::build(variant, Hyperparams::default(), &mut Prng::new(21)).unwrap();
        let mut p = Prng::new(99);
        let x = Tensor::<f64>::from_fn(&[1, 1, 44, 44], |_| p.uniform(-1.0, 1.0));
        let target = Tensor::<f64>::from_fn(&[1, 44, 44], |_| if p.unit() < 0.3 { 1.0 } else { 0.0 });

        let (logits, trace) = model.forward_train(&x).unwrap();
        let out = cross_entropy_2class(&logits, &target, 1.0).unwrap();
        let grads = model.backward(&trace, &out.grad).unwrap();

        let sizes: Vec<usize> = model.parameters().iter().map(|(_, t)| t.len()).collect();
        let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
        for _ in 0..20 {
            let tensor = p.uniform_int(0, sizes.len() as i64 - 1) as usize;
            let index = p.uniform_int(0, sizes[tensor] as i64 - 1) as usize;
            let shifted = |delta: f64| {
                let mut m = model.clone();
                m.parameters_mut()[tensor].data_mut()[index] += delta;
                let (logits, t) = m.forward_train(&x).unwrap();
                let same_routing = t.pool_argmax() == trace.pool_argmax();
                (cross_entropy_2class(&logits, &target, 1.0).unwrap().loss, same_routing)
            };
            // Central differences are only meaningful while every max pool
            // keeps its selection, so shrink the step until it does.
            let mut h = 1e-5;
            let numeric = loop {
                let ((up, a), (down, b)) = (shifted(h), shifted(-h));
                if a && b {
                    break (up - down) / (2.0 * h);
                }
                h /= 4.0;
                assert!(h > 1e-9, "no smooth neighbourhood for {}[{index}]", names[tensor]);
            };
            let analytic = grads[tensor].data()[index];
            // Loss roundoff near 1e-15 over a 1e-5 step leaves about 1e-10 of
            // absolute noise, so tiny gradients are compared on a 1e-5 scale.
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-5);
            assert!(rel < 1e-4, "{variant} {}[{index}]: {analytic} vs {numeric}", names[tensor]);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [AttentionVariant::Se, AttentionVariant::SelfAttention] {
        let mut model = build(variant, 17);
        model.freeze_prefix(3).unwrap();
        let path = dir.path().join(format!("{variant}.ckpt"));
        save_checkpoint(&model, &path).unwrap();
        let loaded: NetworkModel = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.variant(), variant);
        assert_eq!(loaded.hyperparams(), model.hyperparams());
        for ((na, a), (nb, b)) in model.parameters().into_iter().zip(loaded.parameters()) {
            assert_eq!(na, nb);
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b), "{na}");
        }
        assert_eq!(loaded.frozen_flags(), model.frozen_flags());
        assert_eq!(loaded.frozen_names(), model.frozen_names());
        let x = patches(2, 3);
        assert_eq!(model.forward(&x).unwrap(), loaded.forward(&x).unwrap());
    }
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let bytes = encode_checkpoint(&build(AttentionVariant::Se, 1)).unwrap();
    for cut in [0, 5, 8, 20, 40, 1000, bytes.len() / 2, bytes.len() - 1] {
        let err = decode_checkpoint::<f32>(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "cut {cut}: {err}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(decode_checkpoint::<f32>(&extra), Err(Error::Format(_))));
}

#[test]
fn bad_magic_and_version_are_format_errors() {
    let bytes = encode_checkpoint(&build(AttentionVariant::Se, 1)).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode_checkpoint::<f32>(&bad), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[8] = 9;
    assert!(matches!(decode_checkpoint::<f32>(&bad), Err(Error::Format(_))));
}

#[test]
fn shape_mismatch_is_an_integrity_error() {
    let bytes = encode_checkpoint(&build(AttentionVariant::Se, 1)).unwrap();
    // Declaring r = 5 changes the excitation shapes the records must match.
    let mut bad = bytes.clone();
    bad[13..17].copy_from_slice(&5u32.to_le_bytes());
    assert!(matches!(decode_checkpoint::<f32>(&bad), Err(Error::Integrity(_))));
    // Declaring the other variant changes the record list entirely.
    let mut bad = bytes;
    bad[12] = 1;
    assert!(matches!(decode_checkpoint::<f32>(&bad), Err(Error::Integrity(_))));
}

#[test]
fn frozen_flags_survive_field_by_field() {
    let mut model = build(AttentionVariant::SelfAttention, 4);
    let mut flags = vec![false; model.frozen_flags().len()];
    for i in (0..flags.len()).step_by(3) {
        flags[i] = true;
    }
    model.set_frozen_flags(flags.clone()).unwrap();
    let loaded: NetworkModel = decode_checkpoint(&encode_checkpoint(&model).unwrap()).unwrap();
    let names: Vec<String> = model.parameters().into_iter().map(|(n, _)| n).collect();
    let loaded_names: Vec<String> = loaded.parameters().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, loaded_names);
    for (i, name) in names.iter().enumerate() {
        assert_eq!(loaded.frozen_flags()[i], flags[i], "{name}");
    }
}

#[test]
fn cast_preserves_forward() {
    let model = build(AttentionVariant::Se, 6);
    let x = patches(1, 6);
    let wide = model.cast::<f64>();
    let y = model.forward(&x).unwrap();
    let yw = wide.forward(&x.cast::<f64>()).unwrap();
    for (a, b) in y.data().iter().zip(yw.data()) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
}
