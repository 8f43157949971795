use siv_core::directions::{direction_in_space, train_hyperplane, Space, TrainConfig};
use siv_core::pipeline::sample_dataset;
use siv_core::stylegen::build_planted_generator;

#[test]
fn planted_s_space_planes_are_sparse_and_local() {
    let p = build_planted_generator(7).unwrap();
    let (ds, _) = sample_dataset(&p.weights, &p.attributes, 2000, 7, 4).unwrap();
    let layout = p.weights.arch.layout();
    for bal in ds.class_balance() {
        assert!((0.2..=0.8).contains(&bal), "class balance {bal}");
    }
    for (attr, part) in p.attributes.iter().zip(&p.partitions) {
        let y = ds.labels_for(attr.id).unwrap();
        let (plane, rep) = train_hyperplane(Space::S, &ds.s, &y, &TrainConfig::default()).unwrap();
        let inside = part.indicator(&layout);
        let d = direction_in_space(&plane).unwrap();
        let total: f64 = d.iter().map(|v| v.abs()).sum();
        let own: f64 = d
            .iter()
            .zip(&inside)
            .filter(|(_, &b)| b)
            .map(|(v, _)| v.abs())
            .sum();
        assert_eq!(rep.train_accuracy, 1.0, "{}", attr.name);
        assert!(rep.validation_accuracy.unwrap() >= 0.95, "{}", attr.name);
        assert!(rep.sparsity >= 0.9, "{}", attr.name);
        assert!(own / total >= 0.9, "{}", attr.name);
    }
}

#[test]
fn sparsity_grows_with_l1_weight() {
    let p = build_planted_generator(7).unwrap();
    let (ds, _) = sample_dataset(&p.weights, &p.attributes, 600, 11, 4).unwrap();
    let y = ds.labels_for(2).unwrap();
    let mut last = -1.0;
    for l1 in [1e-5, 1e-4, 1e-3] {
        let cfg = TrainConfig {
            l1_lambda: l1,
            ..TrainConfig::default()
        };
        let (_, rep) = train_hyperplane(Space::S, &ds.s, &y, &cfg).unwrap();
        assert!(rep.sparsity >= last, "l1 {l1}: {} < {last}", rep.sparsity);
        last = rep.sparsity;
    }
}
