use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use siv_core::format::TensorFile;

fn siv(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siv"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn siv")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = siv(dir, args);
    assert!(
        out.status.success(),
        "siv {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Planted weights, a small dataset and both directions for attribute 1.
fn prepare(dir: &Path) {
    ok(
        dir,
        &[
            "gen-weights",
            "--backend",
            "planted",
            "--seed",
            "7",
            "--out",
            "w.siv",
        ],
    );
    ok(
        dir,
        &[
            "sample",
            "--weights",
            "w.siv",
            "--n",
            "600",
            "--seed",
            "7",
            "--out",
            "ds",
        ],
    );
    for space in ["z", "s"] {
        ok(
            dir,
            &[
                "train-direction",
                "--dataset",
                "ds",
                "--weights",
                "w.siv",
                "--space",
                space,
                "--attr",
                "1",
                "--out",
                &format!("dir_{space}.siv"),
            ],
        );
    }
}

fn intervene_args<'a>(out: &'a str, steps: &'a str) -> Vec<&'a str> {
    vec![
        "intervene",
        "--weights",
        "w.siv",
        "--dataset",
        "ds",
        "--dir-z",
        "dir_z.siv",
        "--dir-s",
        "dir_s.siv",
        "--mask",
        "top-right",
        "--attr",
        "1",
        "--sample-index",
        "2",
        "--steps",
        steps,
        "--out",
        out,
    ]
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut m = BTreeMap::new();
    walk(root, root, &mut m);
    m
}

fn run_all(dir: &Path) {
    prepare(dir);
    ok(dir, &intervene_args("run", "10"));
    ok(
        dir,
        &[
            "interpolate",
            "--weights",
            "w.siv",
            "--result",
            "run",
            "--out",
            "interp",
        ],
    );
    ok(
        dir,
        &[
            "dissect",
            "--weights",
            "w.siv",
            "--samples",
            "6",
            "--jobs",
            "2",
            "--out",
            "dissect.json",
        ],
    );
    ok(
        dir,
        &[
            "gen-weights",
            "--backend",
            "random",
            "--seed",
            "7",
            "--out",
            "r.siv",
        ],
    );
    ok(
        dir,
        &[
            "sample",
            "--weights",
            "r.siv",
            "--n",
            "5",
            "--jobs",
            "2",
            "--out",
            "rds",
        ],
    );
}

#[test]
fn every_command_is_byte_identical_on_rerun() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_all(a.path());
    run_all(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(tb[k] == *v, "{} differs", k.display());
    }
    assert!(ta.contains_key(Path::new("run/trajectory.csv")));
    assert!(ta.contains_key(Path::new("interp/interp_4.ppm")));
}

#[test]
fn steps_zero_reproduces_z_edit_and_rows_match() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    prepare(dir);
    ok(dir, &intervene_args("zero", "0"));
    let imgs = TensorFile::load(dir.join("zero/images.siv")).unwrap();
    assert_eq!(imgs.get("final").unwrap(), imgs.get("z_edit").unwrap());
    let lam = TensorFile::load(dir.join("zero/lambda.siv")).unwrap();
    assert!(lam.get_vec("lambda").unwrap().iter().all(|&v| v == 0.0));
    let csv = fs::read_to_string(dir.join("zero/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);

    ok(dir, &intervene_args("five", "5"));
    let csv = fs::read_to_string(dir.join("five/trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 7 * 5);
    assert!(csv.starts_with("layer,step,pix,attr,norm,total,masked_mse\n"));

    // t = 1 reproduces the saved final image, t = 0 the Δs_n-free one
    ok(
        dir,
        &[
            "interpolate",
            "--weights",
            "w.siv",
            "--result",
            "five",
            "--t-list",
            "0,1",
            "--out",
            "ip",
        ],
    );
    let ip = TensorFile::load(dir.join("ip/interpolation.siv")).unwrap();
    let five = TensorFile::load(dir.join("five/images.siv")).unwrap();
    let frames = ip.get("images").unwrap();
    let n = frames.len() / 2;
    assert_eq!(&frames.data()[n..], five.get("final").unwrap().data());
}

#[test]
fn config_file_sits_between_defaults_and_flags() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    prepare(dir);
    fs::write(dir.join("run.toml"), "[schedule]\nsteps = 3\nlr = 0.1\n").unwrap();
    let mut args = vec!["--config", "run.toml"];
    args.extend(intervene_args("cfg", "4"));
    ok(dir, &args);
    let mut no_flag: Vec<&str> = vec!["--config", "run.toml"];
    no_flag.extend(
        intervene_args("cfg2", "4")
            .into_iter()
            .filter(|a| *a != "--steps" && *a != "4"),
    );
    ok(dir, &no_flag);
    let rows = |p: &str| fs::read_to_string(dir.join(p)).unwrap().lines().count() - 1;
    assert_eq!(rows("cfg/trajectory.csv"), 28);
    assert_eq!(rows("cfg2/trajectory.csv"), 21);
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("cfg/report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["schedule"]["lr"], 0.1);
    assert_eq!(rep["config"]["schedule"]["steps"], 4);
    assert_eq!(rep["config"]["beta"], 3.0);
    assert!(rep["inputs"]["weights"]["sha256"].as_str().unwrap().len() == 64);
    assert!(rep["tool"].as_str().unwrap().starts_with("siv "));
}

#[test]
fn empty_dataset_and_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    ok(
        dir,
        &["gen-weights", "--backend", "planted", "--out", "w.siv"],
    );
    ok(
        dir,
        &["sample", "--weights", "w.siv", "--n", "0", "--out", "empty"],
    );
    let f = TensorFile::load(dir.join("empty/dataset.siv")).unwrap();
    assert_eq!(f.get("z").unwrap().dims(), &[0, 32]);

    let code = |args: &[&str]| siv(dir, args).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&[
            "train-direction",
            "--dataset",
            "empty",
            "--space",
            "q",
            "--out",
            "x.siv"
        ]),
        1
    );
    assert_eq!(
        code(&["train-direction", "--dataset", "empty", "--out", "x.siv"]),
        2
    );
    assert_eq!(
        code(&["sample", "--weights", "missing.siv", "--out", "o"]),
        2
    );
    fs::write(dir.join("bad.toml"), "nonsense_key = 1\n").unwrap();
    assert_eq!(
        code(&["--config", "bad.toml", "gen-weights", "--out", "y.siv"]),
        2
    );
}

#[test]
fn layout_mismatch_between_weights_and_directions_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path();
    prepare(dir);
    let arch = r#"{"d_z":32,"d_w":32,"const_channels":8,"levels":[{"resolution":4,"channels":[8]},{"resolution":8,"channels":[8]},{"resolution":16,"channels":[8]},{"resolution":32,"channels":[8]}],"kernel":3,"out_channels":3,"upsample":"bilinear","instance_norm":true}"#;
    fs::write(dir.join("arch.json"), arch).unwrap();
    ok(
        dir,
        &[
            "gen-weights",
            "--backend",
            "random",
            "--arch",
            "arch.json",
            "--out",
            "small.siv",
        ],
    );
    let mut args = intervene_args("bad", "1");
    args[2] = "small.siv";
    args.extend(["--concepts", "w.concepts.json"]);
    let out = siv(dir, &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layout"));
}
