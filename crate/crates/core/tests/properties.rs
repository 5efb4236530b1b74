use dadf_core::adapter::{build_variant, AdapterVariant};
use dadf_core::data::{sample_rng, Label};
use dadf_core::heads::{Classifier, ClsInput};
use dadf_core::metrics::{auc, eer, iinc, pbca};
use dadf_core::rga::{feature_difference, reconstruction_loss, spatial_softmax, RecData};
use dadf_core::{Ctx, ParamStore, Tensor};
use proptest::prelude::*;

fn tensor(shape: [usize; 4]) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-3.0f64..3.0, n).prop_map(move |v| Tensor::from_vec(&shape, v).unwrap())
}

fn dims() -> impl Strategy<Value = [usize; 4]> {
    (1usize..3, 1usize..5, 1usize..5, 1usize..4).prop_map(|(b, h, w, c)| [b, h, w, c])
}

fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(any::<bool>(), n).prop_map(|mut b| {
                b[0] = false;
                let last = b.len() - 1;
                b[last] = true;
                b.into_iter()
                    .map(|f| if f { Label::Fake } else { Label::Real })
                    .collect::<Vec<_>>()
            }),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_sums_to_one_per_channel(x in dims().prop_flat_map(tensor)) {
        let a = spatial_softmax(&x);
        let (b, h, w, c) = a.dims4();
        for bi in 0..b {
            for ch in 0..c {
                let s: f64 = (0..h * w).map(|p| a.data()[(bi * h * w + p) * c + ch]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn difference_is_symmetric_and_nonnegative(
        (a, b) in dims().prop_flat_map(|d| (tensor(d), tensor(d)))
    ) {
        let ab = feature_difference(&a, &b).unwrap();
        prop_assert_eq!(&ab, &feature_difference(&b, &a).unwrap());
        prop_assert!(ab.data().iter().all(|&v| v >= 0.0));
        prop_assert!(feature_difference(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rec_loss_nonnegative_and_blind_to_fakes(
        (f, g, shift) in (1usize..4).prop_flat_map(|b| (tensor([b + 1, 2, 2, 3]), tensor([b + 1, 2, 2, 3]), -2.0f64..2.0))
    ) {
        let b = f.shape()[0];
        let labels: Vec<Label> = (0..b).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
        let (l, _, _) = reconstruction_loss(&f, &g, &labels, RecData::Real).unwrap();
        prop_assert!(l >= 0.0);
        let mut g2 = g.clone();
        for (i, v) in g2.data_mut().iter_mut().enumerate() {
            if (i / 12) % 2 == 1 {
                *v += shift;
            }
        }
        let (l2, _, _) = reconstruction_loss(&f, &g2, &labels, RecData::Real).unwrap();
        prop_assert_eq!(l, l2);
        let (l0, _, _) = reconstruction_loss(&f, &f, &labels, RecData::Real).unwrap();
        prop_assert_eq!(l0, 0.0);
    }

    #[test]
    fn auc_invariant_under_monotone_transform((scores, labels) in labelled_scores(), k in 0.1f64..4.0, c in -3.0f64..3.0) {
        let mapped: Vec<f64> = scores.iter().map(|s| (k * s + c).exp()).collect();
        let a = auc(&scores, &labels).unwrap();
        prop_assert!((a - auc(&mapped, &labels).unwrap()).abs() < 1e-9);
        let e = eer(&scores, &labels).unwrap();
        prop_assert!((0.0..=100.0).contains(&e));
    }

    #[test]
    fn iinc_symmetric_and_permutation_invariant(
        (p, g, seed) in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
            any::<u64>(),
        ))
    ) {
        use rand::seq::SliceRandom;
        let v = iinc(&p, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iinc(&g, &p).unwrap());
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.shuffle(&mut sample_rng(seed, 0));
        let pp: Vec<bool> = order.iter().map(|&i| p[i]).collect();
        let gg: Vec<bool> = order.iter().map(|&i| g[i]).collect();
        prop_assert!((v - iinc(&pp, &gg).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn pbca_complement(
        (pred, gt) in (1usize..40).prop_flat_map(|n| (
            prop::collection::vec(0.0f64..1.0, n),
            prop::collection::vec(any::<bool>(), n),
        ))
    ) {
        prop_assume!(pred.iter().all(|&p| p != 0.5));
        let gt: Vec<f64> = gt.into_iter().map(|b| b as u8 as f64).collect();
        let inv: Vec<f64> = pred.iter().map(|p| 1.0 - p).collect();
        let sum = pbca(&pred, &gt, 0.5).unwrap() + pbca(&inv, &gt, 0.5).unwrap();
        prop_assert!((sum - 100.0).abs() < 1e-9);
    }

    #[test]
    fn adapters_preserve_shape(h in 1usize..6, w in 1usize..6, v in 0usize..5, seed in any::<u64>()) {
        let variant = AdapterVariant::ALL[v];
        let mut ps = ParamStore::new();
        let m = build_variant(&mut ps, "a", variant, 3, &mut sample_rng(seed, 0));
        let x = Tensor::filled(&[1, h, w, 3], 0.3);
        for mut ctx in [Ctx::eval(), Ctx::train()] {
            let (y, _) = m.forward(&ps, &mut ctx, &x).unwrap();
            prop_assert_eq!(y.shape(), x.shape());
        }
    }

    #[test]
    fn classifier_ignores_spatial_permutation(x in tensor([1, 3, 3, 2]), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut ps = ParamStore::new();
        let cls = Classifier::new(&mut ps, ClsInput::Penultimate, 2, &mut sample_rng(seed, 1));
        let mut order: Vec<usize> = (0..9).collect();
        order.shuffle(&mut sample_rng(seed, 2));
        let mut y = x.clone();
        for (dst, &src) in order.iter().enumerate() {
            y.data_mut()[dst * 2..dst * 2 + 2].copy_from_slice(&x.data()[src * 2..src * 2 + 2]);
        }
        let (a, _) = cls.classify(&ps, &x).unwrap();
        let (b, _) = cls.classify(&ps, &y).unwrap();
        prop_assert!((a[0] - b[0]).abs() < 1e-12);
    }
}

#[test]
fn eer_near_half_for_random_scores() {
    use rand::Rng;
    let mut rng = sample_rng(5, 0);
    let n = 20_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<Label> = (0..n)
        .map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake })
        .collect();
    let e = eer(&scores, &labels).unwrap();
    assert!((e - 50.0).abs() < 3.0, "eer {e}");
}
