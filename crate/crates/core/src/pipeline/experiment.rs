use serde::{Deserialize, Serialize};

use crate::directions::{direction_in_space, AttributeSpec, Hyperplane, Space};
use crate::error::{Error, Result};
use crate::intervene::{
    edit_sign, optimize, scale_direction, verify_edit, z_edit, EditVerification,
    InterventionProblem, InterventionResult, LossWeights, Schedule, ZEdit,
};
use crate::metrics::{masked_mse, metrics_row, MetricsRow, Region};
use crate::numgrad::Scalar;
use crate::stylegen::{synthesize, ChannelPartition, GeneratorWeights, Image, Mask};

/// Everything one sample's edit needs besides the latent.
#[derive(Clone, Debug)]
pub struct EditSetup<'a, T: Scalar> {
    pub weights: &'a GeneratorWeights<T>,
    pub plane_z: &'a Hyperplane,
    pub plane_s: &'a Hyperplane,
    pub mask: &'a Mask,
    /// Used for the off-concept check of the edit.
    pub partition: Option<&'a ChannelPartition>,
    /// Ground-truth labeler of the edited attribute, when known.
    pub attribute: Option<&'a AttributeSpec>,
    pub beta: f64,
    /// Fixed `‖Δs_n‖`; `None` rescales to `‖Δs_z‖`.
    pub gamma: Option<f64>,
    pub loss_weights: LossWeights,
    pub schedule: Schedule,
    pub verify_tol: f64,
}

#[derive(Clone, Debug)]
pub struct EditOutcome {
    /// `+1` edits toward the positive class, `-1` toward the negative.
    pub sign: f64,
    pub zedit: ZEdit,
    pub dsn: Vec<f64>,
    pub original: Image<f64>,
    pub z_image: Image<f64>,
    pub result: InterventionResult,
    pub verification: EditVerification,
    pub summary: EditSummary,
}

/// Scalar outcome of one edit, as written to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditSummary {
    pub sign: f64,
    pub label_before: Option<i8>,
    pub label_z_edit: Option<i8>,
    pub label_after: Option<i8>,
    pub label_flipped: Option<bool>,
    pub score_before: f64,
    pub score_after: f64,
    pub score_flipped: bool,
    pub off_concept_preserved: Option<bool>,
    pub max_off_concept_delta: Option<f64>,
    pub z_edit_masked_mse: f64,
    pub final_masked_mse: f64,
    pub z_edit_metrics: MetricsRow,
    pub final_metrics: MetricsRow,
    pub masked_mse_per_layer: Vec<f64>,
}

/// Z-space edit of `z` toward the opposite class, then layer-wise
/// optimization of the blend with the S-space direction.
pub fn run_edit<T: Scalar>(setup: &EditSetup<'_, T>, z: &[f64]) -> Result<EditOutcome> {
    setup.plane_s.require_space(Space::S)?;
    let sign = edit_sign(setup.plane_z, z)?;
    let zedit = z_edit(setup.weights, setup.plane_z, z, sign * setup.beta)?;
    let unit_s = direction_in_space(setup.plane_s)?;
    if unit_s.len() != zedit.dsz.len() {
        return Err(Error::Shape {
            op: "run_edit",
            axis: "style",
            expected: zedit.dsz.len(),
            found: unit_s.len(),
        });
    }
    let dsn = scale_direction(&unit_s, &zedit.dsz, sign, setup.gamma);
    let problem = InterventionProblem::new(
        setup.weights,
        &zedit.s,
        zedit.dsz.clone(),
        dsn.clone(),
        setup.mask.clone(),
        setup.loss_weights,
    )?;
    let result = optimize(&problem, &setup.schedule)?;
    let original = problem.original().clone();
    let w64 = setup.weights.cast::<f64>();
    let z_image = synthesize(&w64, &zedit.s_edited)?;
    let s_hat = zedit.s.offset_by(&result.dsm)?;
    let verification = verify_edit(
        setup.plane_s,
        &zedit.s,
        &s_hat,
        setup.partition,
        setup.verify_tol,
    )?;

    let label = |img: &Image<f64>| -> Result<Option<i8>> {
        setup.attribute.map(|a| a.label(img)).transpose()
    };
    let (lb, lz, la) = (label(&original)?, label(&z_image)?, label(&result.image)?);
    let summary = EditSummary {
        sign,
        label_before: lb,
        label_z_edit: lz,
        label_after: la,
        label_flipped: lb.zip(la).map(|(a, b)| a != b),
        score_before: verification.score_before,
        score_after: verification.score_after,
        score_flipped: verification.sign_flip,
        off_concept_preserved: verification.off_concept_preserved,
        max_off_concept_delta: verification.max_off_concept_delta,
        z_edit_masked_mse: masked_mse(&original, &z_image, setup.mask, Region::Outside)?,
        final_masked_mse: masked_mse(&original, &result.image, setup.mask, Region::Outside)?,
        z_edit_metrics: metrics_row(&original, &z_image, setup.mask)?,
        final_metrics: metrics_row(&original, &result.image, setup.mask)?,
        masked_mse_per_layer: result.masked_mse_sequence(),
    };
    Ok(EditOutcome {
        sign,
        zedit,
        dsn,
        original,
        z_image,
        result,
        verification,
        summary,
    })
}

/// Per-layer sequence is non-increasing up to `slack` (relative) per step
/// and strictly lower at the end than at the start.
pub fn is_monotone(seq: &[f64], slack: f64) -> bool {
    seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + slack))
        && matches!((seq.first(), seq.last()), (Some(a), Some(b)) if b < a)
}

/// [`run_edit`] over many latents, in input order; `jobs > 1` runs samples
/// on a dedicated thread pool.
pub fn run_edits<T: Scalar>(
    setup: &EditSetup<'_, T>,
    zs: &[Vec<f64>],
    jobs: usize,
) -> Result<Vec<EditOutcome>> {
    use rayon::prelude::*;
    if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| zs.par_iter().map(|z| run_edit(setup, z)).collect())
    } else {
        zs.iter().map(|z| run_edit(setup, z)).collect()
    }
}

/// Outside-mask deltas and target statistic along `t` for a finished edit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub ts: Vec<f64>,
    /// Largest outside-mask per-pixel deviation from the `t = 0` image.
    pub max_outside_delta: Vec<f64>,
    /// Attribute statistic (or inside-mask mean intensity) per `t`.
    pub statistic: Vec<f64>,
}

impl InterpolationCheck {
    pub fn is_local(&self, tol: f64) -> bool {
        self.max_outside_delta.iter().all(|&d| d < tol)
    }

    /// Non-decreasing or non-increasing, and not constant.
    pub fn is_monotone(&self) -> bool {
        let s = &self.statistic;
        let up = s.windows(2).all(|w| w[1] >= w[0]);
        let down = s.windows(2).all(|w| w[1] <= w[0]);
        (up || down) && s.first() != s.last()
    }
}

pub fn check_interpolation<T: Scalar>(
    setup: &EditSetup<'_, T>,
    outcome: &EditOutcome,
    ts: &[f64],
) -> Result<InterpolationCheck> {
    let w64 = setup.weights.cast::<f64>();
    let images = ts
        .iter()
        .map(|&t| {
            crate::intervene::interpolate(
                &w64,
                &outcome.zedit.s,
                &outcome.zedit.dsz,
                &outcome.dsn,
                &outcome.result.lambda,
                t,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let base = interpolate_base(&w64, outcome)?;
    let hw = setup.mask.height() * setup.mask.width();
    let bits = setup.mask.bits();
    let max_outside_delta = images
        .iter()
        .map(|img| {
            img.data()
                .iter()
                .zip(base.data())
                .enumerate()
                .filter(|(i, _)| !bits[i % hw])
                .map(|(_, (a, b))| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let statistic = images
        .iter()
        .map(
            |img| match setup.attribute.map(|a| a.statistic(img)).transpose()? {
                Some(Some(v)) => Ok(v),
                _ => Ok(inside_mean(img, setup.mask)),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    Ok(InterpolationCheck {
        ts: ts.to_vec(),
        max_outside_delta,
        statistic,
    })
}

fn interpolate_base(w64: &GeneratorWeights<f64>, outcome: &EditOutcome) -> Result<Image<f64>> {
    crate::intervene::interpolate(
        w64,
        &outcome.zedit.s,
        &outcome.zedit.dsz,
        &outcome.dsn,
        &outcome.result.lambda,
        0.0,
    )
}

fn inside_mean(img: &Image<f64>, mask: &Mask) -> f64 {
    let hw = mask.height() * mask.width();
    let bits = mask.bits();
    let (sum, n) = img
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| bits[i % hw])
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
