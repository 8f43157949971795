use proptest::prelude::*;
use siv_core::directions::{classify, Hyperplane, Space, TrainConfig};
use siv_core::dissect::{binarize_topk, iou, Mask};
use siv_core::format::TensorFile;
use siv_core::intervene::{loss_attr, merge_displacement, InterventionCoeffs};
use siv_core::metrics::{mse, ssim};
use siv_core::numgrad::ops::{instance_norm, upsample, DEFAULT_NORM_EPS};
use siv_core::numgrad::{Tensor, UpsampleMode};
use siv_core::stylegen::{ArchSpec, StyleLayout};

fn layout() -> StyleLayout {
    ArchSpec::default().layout()
}

fn vec_n(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn image() -> impl Strategy<Value = Tensor<f64>> {
    prop::collection::vec(0.0f64..1.0, 3 * 12 * 12)
        .prop_map(|v| Tensor::new(vec![3, 12, 12], v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merge_endpoints_bit_exact(dz in vec_n(120), dn in vec_n(120)) {
        let zero = InterventionCoeffs::zeros(layout());
        let one = InterventionCoeffs::filled(layout(), 1.0).unwrap();
        prop_assert_eq!(merge_displacement(&zero, &dz, &dn).unwrap(), dz.clone());
        prop_assert_eq!(merge_displacement(&one, &dz, &dn).unwrap(), dn);
    }

    #[test]
    fn merge_stays_between_endpoints(dz in vec_n(120), dn in vec_n(120), l in prop::collection::vec(0.0f64..=1.0, 120)) {
        let lam = InterventionCoeffs::new(l, layout()).unwrap();
        let m = merge_displacement(&lam, &dz, &dn).unwrap();
        for ((v, a), b) in m.iter().zip(&dz).zip(&dn) {
            prop_assert!(*v >= a.min(*b) - 1e-12 && *v <= a.max(*b) + 1e-12);
        }
    }

    #[test]
    fn attr_loss_is_bounded(a in vec_n(16), b in vec_n(16)) {
        prop_assume!(a.iter().any(|v| *v != 0.0) && b.iter().any(|v| *v != 0.0));
        let l = loss_attr(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&l));
        prop_assert_eq!(l, loss_attr(&b, &a).unwrap());
    }

    #[test]
    fn ssim_identity_and_symmetry(a in image(), b in image()) {
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        prop_assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!(ssim(&a, &b).unwrap() <= 1.0 + 1e-12);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert!(mse(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn tensor_file_round_trip(
        entries in prop::collection::vec(
            (prop::collection::vec(1usize..4, 0..4), any::<u64>()),
            0..5,
        )
    ) {
        let mut f = TensorFile::new();
        for (i, (dims, seed)) in entries.iter().enumerate() {
            let t = Tensor::<f32>::from_fn(dims, |k| ((seed.wrapping_add(k as u64) % 1000) as f32) * 0.37 - 100.0);
            f.push(format!("t{i}"), t).unwrap();
        }
        let bytes = f.to_bytes();
        let back = TensorFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn topk_keeps_at_least_k(v in prop::collection::vec(-1.0f64..1.0, 64), frac in 0.01f64..0.9) {
        let t = Tensor::new(vec![8, 8], v).unwrap();
        let m = binarize_topk(&t, frac, (16, 16), UpsampleMode::Nearest).unwrap();
        let k = ((frac * 256.0).floor() as usize).max(1);
        prop_assert!(m.count() >= k);
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in prop::collection::vec(any::<bool>(), 36), b in prop::collection::vec(any::<bool>(), 36)) {
        let (a, b) = (Mask::new(6, 6, a).unwrap(), Mask::new(6, 6, b).unwrap());
        let x = iou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(x, iou(&b, &a).unwrap());
    }

    #[test]
    fn negated_plane_negates_score(n in vec_n(8), b in -3.0f64..3.0, x in vec_n(8)) {
        prop_assume!(n.iter().any(|v| *v != 0.0));
        let p = Hyperplane::new(Space::S, n.clone(), b, TrainConfig::default());
        let q = Hyperplane::new(Space::S, n.iter().map(|v| -v).collect(), -b, TrainConfig::default());
        prop_assert_eq!(classify(&p, &x).unwrap(), -classify(&q, &x).unwrap());
    }

    #[test]
    fn upsampling_preserves_mass_and_constants(v in prop::collection::vec(-2.0f64..2.0, 2 * 5 * 5), c in -3.0f64..3.0) {
        let t = Tensor::new(vec![2, 5, 5], v).unwrap();
        let up = upsample(&t, UpsampleMode::Nearest).unwrap();
        let s0: f64 = t.data().iter().sum();
        let s1: f64 = up.data().iter().sum();
        prop_assert!((4.0 * s0 - s1).abs() < 1e-9);
        let k = Tensor::<f64>::full(&[2, 5, 5], c);
        let kb = upsample(&k, UpsampleMode::Bilinear).unwrap();
        prop_assert!(kb.data().iter().all(|&x| x == c));
    }

    #[test]
    fn instance_norm_standardizes(v in prop::collection::vec(-3.0f64..3.0, 3 * 6 * 6)) {
        let t = Tensor::new(vec![3, 6, 6], v).unwrap();
        let y = instance_norm(&t, DEFAULT_NORM_EPS).unwrap();
        for (ch, xs) in y.data().chunks(36).zip(t.data().chunks(36)) {
            let m: f64 = xs.iter().sum::<f64>() / 36.0;
            let var: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 36.0;
            prop_assume!(var > 1e-3);
            let mean: f64 = ch.iter().sum::<f64>() / 36.0;
            let v2: f64 = ch.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 36.0;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((v2 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn mask_json_round_trip(bits in prop::collection::vec(any::<bool>(), 20)) {
        let m = Mask::new(4, 5, bits).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        prop_assert_eq!(serde_json::from_str::<Mask>(&s).unwrap(), m);
    }
}
