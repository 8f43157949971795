//! Frozen seed-7 regression data. Regenerate deliberately with
//! `SIV_BLESS=1 cargo test -p siv-core --test golden`.

use serde::{Deserialize, Serialize};
use siv_core::pipeline::sample_latent;
use siv_core::stylegen::{
    build_planted_generator, build_random_generator, map_latent, style_from_w, ArchSpec,
    GeneratorWeights,
};

const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/tests/fixtures/golden_seed7.json"
);

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Golden {
    random_sha256: String,
    planted_sha256: String,
    z: Vec<f64>,
    w: Vec<f64>,
    s: Vec<f64>,
}

fn compute() -> Golden {
    let random = build_random_generator(7, &ArchSpec::default()).unwrap();
    let planted = build_planted_generator(7).unwrap();
    let z = sample_latent(7, 0, random.arch.d_z);
    let w = map_latent(&random, &z).unwrap();
    let s = style_from_w(&random, &w).unwrap().into_values();
    Golden {
        random_sha256: random.checksum(),
        planted_sha256: planted.weights.checksum(),
        z,
        w,
        s,
    }
}

#[test]
fn seed7_matches_frozen_data() {
    let now = compute();
    if std::env::var_os("SIV_BLESS").is_some() {
        std::fs::write(FIXTURE, serde_json::to_string_pretty(&now).unwrap() + "\n").unwrap();
    }
    let frozen: Golden = serde_json::from_str(&std::fs::read_to_string(FIXTURE).unwrap()).unwrap();
    assert_eq!(now.random_sha256, frozen.random_sha256);
    assert_eq!(now.planted_sha256, frozen.planted_sha256);
    // JSON float parsing is not guaranteed to round-trip the last bit
    for (name, a, b) in [
        ("z", &now.z, &frozen.z),
        ("w", &now.w, &frozen.w),
        ("s", &now.s, &frozen.s),
    ] {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(
                (x - y).abs() <= 1e-12 * y.abs().max(1.0),
                "{name}: {x} vs {y}"
            );
        }
    }
}

#[test]
fn weight_files_round_trip_byte_identical() {
    for w in [
        build_random_generator(7, &ArchSpec::default()).unwrap(),
        build_planted_generator(7).unwrap().weights,
    ] {
        let bytes = w.to_bytes();
        let back = GeneratorWeights::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
    }
}

#[test]
fn seeds_are_deterministic_and_distinct() {
    let a = build_random_generator(11, &ArchSpec::default()).unwrap();
    let b = build_random_generator(11, &ArchSpec::default()).unwrap();
    let c = build_random_generator(12, &ArchSpec::default()).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_ne!(a.to_bytes(), c.to_bytes());
}
