use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use siv_core::intervene::{InterventionCoeffs, InterventionProblem, LossWeights};
use siv_core::numgrad::check::{
    check_probes, primitive_checks, probe_indices, synthesis_check, FD_PROBES, FD_STEP,
    FD_TOLERANCE,
};
use siv_core::pipeline::sample_latent;
use siv_core::stylegen::{
    build_planted_generator, build_random_generator, generate, segmentation_mask, ArchSpec,
};

#[test]
fn every_primitive_matches_central_differences() {
    let checks = primitive_checks(1, FD_PROBES).unwrap();
    assert_eq!(checks.len(), 10);
    for c in checks {
        assert!(c.passed(FD_TOLERANCE), "{c:?}");
    }
}

#[test]
fn full_synthesis_graph_matches_central_differences() {
    let random = build_random_generator(3, &ArchSpec::default())
        .unwrap()
        .cast::<f64>();
    let planted = build_planted_generator(7).unwrap().weights.cast::<f64>();
    for (name, w) in [("random", random), ("planted", planted)] {
        let z = sample_latent(5, 0, w.arch.d_z);
        let g = generate(&w, &z).unwrap();
        let c = synthesis_check(&w, &g.s, 9, FD_PROBES).unwrap();
        assert!(c.passed(FD_TOLERANCE), "{name}: {c:?}");
    }
}

#[test]
fn intervention_loss_gradient_at_half() {
    let w = build_random_generator(4, &ArchSpec::default()).unwrap();
    let layout = w.arch.layout();
    let z = sample_latent(2, 1, w.arch.d_z);
    let g = generate(&w, &z).unwrap();
    let n = layout.total();
    let dsz: Vec<f64> = (0..n).map(|i| 0.05 * ((i * 7 % 13) as f64 - 6.0)).collect();
    let dsn: Vec<f64> = (0..n).map(|i| if i % 5 == 0 { 0.3 } else { 0.0 }).collect();
    let mask = segmentation_mask(&build_planted_generator(7).unwrap().partitions[1]);
    let lw = LossWeights {
        lambda_attr: 0.5,
        lambda_norm: 0.1,
    };
    let prob = InterventionProblem::new(&w, &g.s, dsz, dsn, mask, lw).unwrap();
    let half = InterventionCoeffs::filled(layout.clone(), 0.5).unwrap();
    let (_, grad, _) = prob.loss_and_grad(&half).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probes = probe_indices(n, FD_PROBES, &mut rng);
    let c = check_probes(
        "total_loss",
        |x| {
            let l = InterventionCoeffs::new(x.to_vec(), layout.clone())?;
            Ok(prob.evaluate(&l)?.0.total)
        },
        half.values(),
        &grad,
        &probes,
        FD_STEP,
    )
    .unwrap();
    assert!(c.passed(FD_TOLERANCE), "{c:?}");
}
