use siv_core::dissect::{dissect_generator, DEFAULT_FRACTION};
use siv_core::numgrad::UpsampleMode;
use siv_core::pipeline::sample_latent;
use siv_core::stylegen::{build_planted_generator, generate, synthesize, StyleCode};

#[test]
fn doubling_a_group_changes_only_its_region() {
    let p = build_planted_generator(7).unwrap();
    let layout = p.weights.arch.layout();
    let w64 = p.weights.cast::<f64>();
    for i in 0..5 {
        let g = generate(&w64, &sample_latent(3, i, w64.arch.d_z)).unwrap();
        for part in &p.partitions {
            let mut v = g.s.values().to_vec();
            for c in part.coords(&layout) {
                v[c] *= 2.0;
            }
            let img = synthesize(&w64, &StyleCode::new(v, layout.clone()).unwrap()).unwrap();
            let hw = 32 * 32;
            let mut inside_changed = false;
            for (k, (a, b)) in img.data().iter().zip(g.image.data()).enumerate() {
                let px = k % hw;
                if part.region.get(px / 32, px % 32) {
                    inside_changed |= (a - b).abs() > 1e-6;
                } else {
                    assert!((a - b).abs() < 1e-6, "{} leaks at {px}", part.name);
                }
            }
            assert!(inside_changed, "{} has no effect", part.name);
        }
    }
}

#[test]
fn dissection_recovers_planted_groups_at_final_level() {
    let p = build_planted_generator(7).unwrap();
    let samples: Vec<_> = (0..50)
        .map(|i| sample_latent(7, i, p.weights.arch.d_z))
        .collect();
    for mode in [UpsampleMode::Bilinear, UpsampleMode::Nearest] {
        let rep = dissect_generator(
            &p.weights,
            &samples,
            &p.partitions,
            DEFAULT_FRACTION,
            mode,
            2,
        )
        .unwrap();
        assert_eq!(rep.final_level_layers, vec![5, 6]);
        for (part, c) in p.partitions.iter().zip(&rep.concepts) {
            let n_in = c
                .final_level
                .iter()
                .filter(|r| part.contains(r.layer, r.channel))
                .count();
            assert!(n_in > 0);
            for (rank, r) in c.final_level.iter().enumerate() {
                let member = part.contains(r.layer, r.channel);
                assert_eq!(member, rank < n_in, "{} rank {rank}: {r:?}", part.name);
                if member {
                    assert_eq!(r.iou, 1.0);
                }
            }
        }
    }
}

#[test]
fn dissection_is_independent_of_jobs() {
    let p = build_planted_generator(7).unwrap();
    let samples: Vec<_> = (0..8)
        .map(|i| sample_latent(1, i, p.weights.arch.d_z))
        .collect();
    let a = dissect_generator(
        &p.weights,
        &samples,
        &p.partitions,
        0.05,
        UpsampleMode::Bilinear,
        1,
    )
    .unwrap();
    let b = dissect_generator(
        &p.weights,
        &samples,
        &p.partitions,
        0.05,
        UpsampleMode::Bilinear,
        3,
    )
    .unwrap();
    assert_eq!(a, b);
}
