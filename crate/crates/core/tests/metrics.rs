use proptest::prelude::*;
use seishet::metrics::{binarize, binarize_two_channel, evaluate, evaluate_all, ConfusionCounts, MetricsReport};
use seishet::{Error, Prng, Tensor};

fn mask(shape: &[usize], bits: &[bool]) -> Tensor<f64> {
    Tensor::new(shape, bits.iter().map(|&b| b as u8 as f64).collect()).unwrap()
}

fn random_mask(shape: &[usize], density: f64, prng: &mut Prng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| (prng.unit() < density) as u8 as f64)
}

#[test]
fn identical_and_disjoint() {
    let a = mask(&[2, 3], &[true, false, true, false, false, true]);
    let r = evaluate(&a, &a).unwrap();
    assert_eq!((r.iou, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    let b = a.map(|v| 1.0 - v);
    let r = evaluate(&a, &b).unwrap();
    assert_eq!((r.iou, r.precision, r.recall, r.f1), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn two_of_six_overlap() {
    // 4 predicted, 4 true, 2 shared: union is 6.
    let pred = mask(&[1, 8], &[true, true, true, true, false, false, false, false]);
    let truth = mask(&[1, 8], &[false, false, true, true, true, true, false, false]);
    let r = evaluate(&pred, &truth).unwrap();
    assert_eq!(r.counts, ConfusionCounts { tp: 2, fp: 2, fn_: 2, tn: 2 });
    assert_eq!(r.iou, 2.0 / 6.0);
    assert_eq!(r.precision, 0.5);
    assert_eq!(r.recall, 0.5);
    assert_eq!(r.f1, 0.5);
}

#[test]
fn empty_class_conventions() {
    let empty = Tensor::<f64>::zeros(&[3, 3]);
    let r = evaluate(&empty, &empty).unwrap();
    assert_eq!((r.iou, r.precision, r.recall, r.f1), (1.0, 1.0, 1.0, 1.0));
    let some = mask(&[3, 3], &[true, false, false, false, false, false, false, false, false]);
    for (p, t) in [(&empty, &some), (&some, &empty)] {
        let r = evaluate(p, t).unwrap();
        assert_eq!((r.iou, r.precision, r.recall, r.f1), (0.0, 0.0, 0.0, 0.0));
    }
}

#[test]
fn errors() {
    let a = Tensor::<f64>::zeros(&[2, 2]);
    assert!(matches!(evaluate(&a, &Tensor::zeros(&[2, 3])), Err(Error::Dimension(_))));
    assert!(matches!(evaluate(&a, &Tensor::full(&[2, 2], 0.5)), Err(Error::Label(_))));
}

#[test]
fn binarize_rules() {
    let half = Tensor::<f64>::full(&[4, 4], 0.5);
    assert!(binarize(&half, 0.5).data().iter().all(|&v| v == 1.0));
    let zero = Tensor::<f64>::zeros(&[4, 4]);
    assert!(binarize(&zero, 0.5).data().iter().all(|&v| v == 0.0));
    let mut p = Prng::new(3);
    let map = Tensor::<f32>::from_fn(&[9, 11], |_| p.unit() as f32);
    let out = binarize(&map, 0.5);
    for i in 0..map.len() {
        let want = if map.data()[i] >= 0.5 { 1.0 } else { 0.0 };
        assert_eq!(out.data()[i], want);
    }
    let two = Tensor::stack(&[map.map(|v| 1.0 - v), map.clone()]).unwrap();
    assert_eq!(binarize_two_channel(&two, 0.5).unwrap(), out);
}

#[test]
fn json_schema() {
    let r = MetricsReport::from_counts(ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 10 });
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort();
    assert_eq!(keys, ["f1", "fn", "fp", "iou", "precision", "recall", "tn", "tp"]);
    assert_eq!(v["fn"], 2);
    assert!(r.table().contains("precision"));
}

#[test]
fn micro_average_equals_concatenation() {
    let mut p = Prng::new(12);
    for trial in 0..20 {
        let shards = 1 + trial % 5;
        let preds: Vec<Tensor<f64>> = (0..shards).map(|_| random_mask(&[6, 7], 0.3, &mut p)).collect();
        let truths: Vec<Tensor<f64>> = (0..shards).map(|_| random_mask(&[6, 7], 0.25, &mut p)).collect();
        let micro = evaluate_all(preds.iter().zip(&truths)).unwrap();
        let concat = |v: &[Tensor<f64>]| {
            Tensor::new(&[v.len() * 42], v.iter().flat_map(|t| t.data().to_vec()).collect()).unwrap()
        };
        let whole = evaluate(&concat(&preds), &concat(&truths)).unwrap();
        assert_eq!(micro, whole);
        // Merging is order independent.
        let reversed = evaluate_all(preds.iter().zip(&truths).rev()).unwrap();
        assert_eq!(reversed, micro);
    }
}

proptest! {
    #[test]
    fn symmetry_and_f1(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let n = bits.len();
        let a = mask(&[n], &bits.iter().map(|b| b.0).collect::<Vec<_>>());
        let b = mask(&[n], &bits.iter().map(|b| b.1).collect::<Vec<_>>());
        let ab = evaluate(&a, &b).unwrap();
        let ba = evaluate(&b, &a).unwrap();
        prop_assert_eq!(ab.iou, ba.iou);
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert_eq!(ab.counts.total(), n as u64);
        for r in [ab, ba] {
            if r.precision + r.recall > 0.0 {
                let f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - f1).abs() <= 1e-9);
            }
            prop_assert!((0.0..=1.0).contains(&r.iou));
        }
    }

    #[test]
    fn correct_pixel_never_lowers_iou(bits in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100), pick in any::<prop::sample::Index>()) {
        let n = bits.len();
        let mut pred: Vec<bool> = bits.iter().map(|b| b.0).collect();
        let truth: Vec<bool> = bits.iter().map(|b| b.1).collect();
        let before = evaluate(&mask(&[n], &pred), &mask(&[n], &truth)).unwrap().iou;
        let misses: Vec<usize> = (0..n).filter(|&i| truth[i] && !pred[i]).collect();
        if !misses.is_empty() {
            pred[misses[pick.index(misses.len())]] = true;
            let after = evaluate(&mask(&[n], &pred), &mask(&[n], &truth)).unwrap().iou;
            prop_assert!(after >= before);
        }
    }
}
