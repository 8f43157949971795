//! Central-difference gradient checks for the primitives and for the full
//! style-to-image graph, all evaluated in `f64`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{NodeId, Tape, Tensor, UpsampleMode};
use crate::error::Result;
use crate::stylegen::{synthesize, trace_synthesis, GeneratorWeights, StyleCode};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const FD_PROBES: usize = 100;

/// `|analytic − numeric| / max(1e-8, |numeric|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub name: String,
    pub probes: usize,
    pub max_rel_err: f64,
    /// `(coordinate, analytic, numeric)` of the worst probe.
    pub worst: Option<(usize, f64, f64)>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// `count` distinct coordinates out of `n` (all of them when `n ≤ count`).
pub fn probe_indices(n: usize, count: usize, rng: &mut impl Rng) -> Vec<usize> {
    if n <= count {
        return (0..n).collect();
    }
    let mut v = sample(rng, n, count).into_vec();
    v.sort_unstable();
    v
}

/// Compares `analytic[i]` with the central difference of `f` at each probe.
pub fn check_probes(
    name: &str,
    f: impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    analytic: &[f64],
    probes: &[usize],
    h: f64,
) -> Result<GradCheck> {
    let mut worst: Option<(usize, f64, f64)> = None;
    let mut max_rel_err = 0.0f64;
    let mut xp = x.to_vec();
    for &i in probes {
        xp[i] = x[i] + h;
        let fp = f(&xp)?;
        xp[i] = x[i] - h;
        let fm = f(&xp)?;
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err >= max_rel_err || worst.is_none() {
            max_rel_err = err;
            worst = Some((i, analytic[i], numeric));
        }
    }
    Ok(GradCheck {
        name: name.to_string(),
        probes: probes.len(),
        max_rel_err,
        worst,
    })
}

type Builder = Box<dyn Fn(&mut Tape<f64>, &[NodeId]) -> Result<NodeId>>;

/// Checks one primitive: inputs are flattened into a single coordinate
/// vector and the scalar objective is `⟨op(inputs), r⟩` for a fixed random
/// `r`.
fn check_op(
    name: &str,
    inputs: Vec<Tensor<f64>>,
    build: Builder,
    rng: &mut ChaCha8Rng,
    n_probes: usize,
) -> Result<GradCheck> {
    let dims: Vec<Vec<usize>> = inputs.iter().map(|t| t.dims().to_vec()).collect();
    let flat: Vec<f64> = inputs
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    let split = |x: &[f64]| -> Result<Vec<Tensor<f64>>> {
        let mut off = 0;
        dims.iter()
            .map(|d| {
                let n: usize = d.iter().product();
                let t = Tensor::new(d.clone(), x[off..off + n].to_vec());
                off += n;
                t
            })
            .collect()
    };
    let forward = |x: &[f64]| -> Result<(Tape<f64>, Vec<NodeId>, NodeId)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = split(x)?.into_iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &ids)?;
        Ok((tape, ids, out))
    };
    let (tape, ids, out) = forward(&flat)?;
    let r = Tensor::from_fn(tape.value(out).dims(), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let grads = tape.backward(out, r.clone())?;
    let analytic: Vec<f64> = ids
        .iter()
        .zip(&inputs)
        .flat_map(|(id, t)| grads.get_or_zeros(*id, t).into_data())
        .collect();
    let probes = probe_indices(flat.len(), n_probes, rng);
    check_probes(
        name,
        |x| {
            let (tape, _, out) = forward(x)?;
            Ok(tape.value(out).dot(&r))
        },
        &flat,
        &analytic,
        &probes,
        FD_STEP,
    )
}

fn normal(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| rng.sample::<f64, _>(StandardNormal))
}

/// Values with `|x − k| ≥ gap` for every kink `k`, so that central
/// differences never straddle one.
fn away_from(
    rng: &mut ChaCha8Rng,
    dims: &[usize],
    lo: f64,
    hi: f64,
    kinks: &[f64],
    gap: f64,
) -> Tensor<f64> {
    Tensor::from_fn(dims, |_| loop {
        let v = rng.random_range(lo..hi);
        if kinks.iter().all(|k| (v - k).abs() >= gap) {
            break v;
        }
    })
}

/// Gradient checks of every primitive, `n_probes` coordinates each.
pub fn primitive_checks(seed: u64, n_probes: usize) -> Result<Vec<GradCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for k in [1usize, 3] {
        let inputs = vec![
            normal(&mut rng, &[3, 6, 6]),
            normal(&mut rng, &[4, 3, k, k]),
        ];
        out.push(check_op(
            &format!("conv2d_{k}x{k}"),
            inputs,
            Box::new(|t, a| t.conv2d(a[0], a[1])),
            &mut rng,
            n_probes,
        )?);
    }
    for mode in [UpsampleMode::Nearest, UpsampleMode::Bilinear] {
        let inputs = vec![normal(&mut rng, &[3, 6, 6])];
        out.push(check_op(
            &format!("upsample_{mode:?}").to_lowercase(),
            inputs,
            Box::new(move |t, a| t.upsample(a[0], mode)),
            &mut rng,
            n_probes,
        )?);
    }
    out.push(check_op(
        "instance_norm",
        vec![normal(&mut rng, &[3, 6, 6])],
        Box::new(|t, a| t.instance_norm(a[0], super::ops::DEFAULT_NORM_EPS)),
        &mut rng,
        n_probes,
    )?);
    out.push(check_op(
        "scale_channels",
        vec![normal(&mut rng, &[4, 5, 5]), normal(&mut rng, &[4])],
        Box::new(|t, a| t.scale_channels(a[0], a[1])),
        &mut rng,
        n_probes,
    )?);
    out.push(check_op(
        "leaky_relu",
        vec![away_from(&mut rng, &[3, 6, 6], -2.0, 2.0, &[0.0], 0.05)],
        Box::new(|t, a| t.leaky_relu(a[0], super::ops::DEFAULT_SLOPE)),
        &mut rng,
        n_probes,
    )?);
    out.push(check_op(
        "matvec",
        vec![
            normal(&mut rng, &[12, 10]),
            normal(&mut rng, &[10]),
            normal(&mut rng, &[12]),
        ],
        Box::new(|t, a| t.matvec(a[0], a[1], a[2])),
        &mut rng,
        n_probes,
    )?);
    out.push(check_op(
        "add_channel_bias",
        vec![normal(&mut rng, &[3, 6, 6]), normal(&mut rng, &[3])],
        Box::new(|t, a| t.add_channel_bias(a[0], a[1])),
        &mut rng,
        n_probes,
    )?);
    out.push(check_op(
        "clamp",
        vec![away_from(
            &mut rng,
            &[3, 6, 6],
            -0.5,
            1.5,
            &[0.0, 1.0],
            0.05,
        )],
        Box::new(|t, a| t.clamp(a[0], 0.0, 1.0)),
        &mut rng,
        n_probes,
    )?);
    Ok(out)
}

/// Checks `∂⟨h(s), r⟩/∂s` through the whole synthesis network at style
/// code `s`.
pub fn synthesis_check(
    weights: &GeneratorWeights<f64>,
    s: &StyleCode,
    seed: u64,
    n_probes: usize,
) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = weights.arch.layout();
    let mut tape = Tape::new();
    let gains: Vec<NodeId> = (0..layout.n_layers())
        .map(|i| tape.leaf(Tensor::from_f64_slice(s.slice(i))))
        .collect();
    let trace = trace_synthesis(weights, &mut tape, &gains)?;
    let r = normal(&mut rng, tape.value(trace.image).dims());
    let grads = tape.backward(trace.image, r.clone())?;
    let mut analytic = vec![0.0; layout.total()];
    for (i, g) in gains.iter().enumerate() {
        if let Some(t) = grads.get(*g) {
            analytic[layout.range(i)].copy_from_slice(t.data());
        }
    }
    let probes = probe_indices(layout.total(), n_probes, &mut rng);
    check_probes(
        "synthesis",
        |x| {
            let code = StyleCode::new(x.to_vec(), layout.clone())?;
            Ok(synthesize(weights, &code)?.dot(&r))
        },
        s.values(),
        &analytic,
        &probes,
        FD_STEP,
    )
}
