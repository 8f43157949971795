//! Style intervention: blend a Z-space edit with a sparse style-space
//! direction per channel, choosing the blend by layer-wise projected Adam.

use serde::{Deserialize, Serialize};

use crate::directions::{classify, direction_in_space, Hyperplane, Space};
use crate::error::{Error, Result};
use crate::metrics::{masked_mse, Region};
use crate::numgrad::{Scalar, Tape, Tensor};
use crate::stylegen::{
    map_latent, style_from_w, synthesize, trace_synthesis, ChannelPartition, GeneratorWeights,
    Image, Mask, StyleCode, StyleLayout,
};

/// Per-channel intervention degrees `λ_i ∈ [0,1]^{l_i}`, laid out like the
/// style code.
#[derive(Clone, Debug, PartialEq)]
pub struct InterventionCoeffs {
    values: Vec<f64>,
    layout: StyleLayout,
}

impl InterventionCoeffs {
    pub fn zeros(layout: StyleLayout) -> Self {
        Self {
            values: vec![0.0; layout.total()],
            layout,
        }
    }

    pub fn filled(layout: StyleLayout, v: f64) -> Result<Self> {
        Self::new(vec![v; layout.total()], layout)
    }

    pub fn new(values: Vec<f64>, layout: StyleLayout) -> Result<Self> {
        layout.check_len("intervention coefficients", values.len())?;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "intervention coefficient {v} outside [0,1]"
            )));
        }
        Ok(Self { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn layout(&self) -> &StyleLayout {
        &self.layout
    }

    pub fn layer(&self, i: usize) -> &[f64] {
        &self.values[self.layout.range(i)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_attr: f64,
    pub lambda_norm: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_attr: 1e-2,
            lambda_norm: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pix: f64,
    pub attr: f64,
    pub norm: f64,
    pub total: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `Δs_m(Λ) = (1−Λ)·Δs_z + Λ·Δs_n`, per coordinate.
pub fn merge_displacement(
    lambda: &InterventionCoeffs,
    dsz: &[f64],
    dsn: &[f64],
) -> Result<Vec<f64>> {
    lambda.layout.check_len("Δs_z", dsz.len())?;
    lambda.layout.check_len("Δs_n", dsn.len())?;
    Ok(lambda
        .values
        .iter()
        .zip(dsz.iter().zip(dsn))
        .map(|(&l, (&z, &n))| (1.0 - l) * z + l * n)
        .collect())
}

fn check_image_dims<T: Scalar>(a: &Image<T>, b: &Image<T>, mask: &Mask) -> Result<(usize, usize)> {
    let (&[c, h, w], &[c2, h2, w2]) = (a.dims(), b.dims()) else {
        return Err(Error::Rank {
            op: "loss_pix",
            expected: 3,
            found: a.rank().min(b.rank()),
        });
    };
    for (axis, x, y) in [("channels", c, c2), ("height", h, h2), ("width", w, w2)] {
        if x != y {
            return Err(Error::Shape {
                op: "loss_pix",
                axis,
                expected: x,
                found: y,
            });
        }
    }
    if mask.dims() != (h, w) {
        return Err(Error::Shape {
            op: "loss_pix",
            axis: "mask",
            expected: h * w,
            found: mask.height() * mask.width(),
        });
    }
    Ok((c, h * w))
}

/// `‖(1−m)·(edited − original)‖₂` over all channels.
pub fn loss_pix<T: Scalar>(original: &Image<T>, edited: &Image<T>, mask: &Mask) -> Result<f64> {
    let (_, hw) = check_image_dims(original, edited, mask)?;
    let bits = mask.bits();
    let sum: f64 = original
        .data()
        .iter()
        .zip(edited.data())
        .enumerate()
        .filter(|(i, _)| !bits[i % hw])
        .map(|(_, (a, b))| {
            let d = b.as_f64() - a.as_f64();
            d * d
        })
        .sum();
    Ok(sum.sqrt())
}

/// Negative cosine similarity between `Δs_n` and `Δs_m`.
pub fn loss_attr(dsn: &[f64], dsm: &[f64]) -> Result<f64> {
    if dsn.len() != dsm.len() {
        return Err(Error::Shape {
            op: "loss_attr",
            axis: "dim",
            expected: dsn.len(),
            found: dsm.len(),
        });
    }
    let (nn, nm) = (dot(dsn, dsn), dot(dsm, dsm));
    if nn == 0.0 {
        return Err(Error::ZeroVector("Δs_n"));
    }
    if nm == 0.0 {
        return Err(Error::ZeroVector("Δs_m"));
    }
    // one square root keeps parallel inputs at exactly ±1
    Ok((-dot(dsn, dsm) / (nn * nm).sqrt()).clamp(-1.0, 1.0))
}

/// `‖Λ‖₂` over all coordinates.
pub fn loss_norm(lambda: &InterventionCoeffs) -> f64 {
    l2(&lambda.values)
}

/// Everything fixed during one intervention run.
#[derive(Clone, Debug)]
pub struct InterventionProblem {
    weights: GeneratorWeights<f64>,
    s: StyleCode,
    dsz: Vec<f64>,
    dsn: Vec<f64>,
    mask: Mask,
    loss_weights: LossWeights,
    original: Image<f64>,
}

impl InterventionProblem {
    /// `dsn` is the already-scaled `Δs_n`; the mask marks the target
    /// concept. The run is evaluated in 64-bit.
    pub fn new<T: Scalar>(
        weights: &GeneratorWeights<T>,
        s: &StyleCode,
        dsz: Vec<f64>,
        dsn: Vec<f64>,
        mask: Mask,
        loss_weights: LossWeights,
    ) -> Result<Self> {
        let weights = weights.cast::<f64>();
        let layout = weights.arch.layout();
        if *s.layout() != layout {
            return Err(Error::Layout(
                "style code does not match the generator".into(),
            ));
        }
        layout.check_len("Δs_z", dsz.len())?;
        layout.check_len("Δs_n", dsn.len())?;
        let res = weights.arch.resolution();
        if mask.dims() != (res, res) {
            return Err(Error::Shape {
                op: "intervene",
                axis: "mask",
                expected: res * res,
                found: mask.height() * mask.width(),
            });
        }
        if !(loss_weights.lambda_attr >= 0.0 && loss_weights.lambda_norm >= 0.0) {
            return Err(Error::InvalidArgument(
                "loss weights must be nonnegative".into(),
            ));
        }
        let original = synthesize(&weights, s)?;
        Ok(Self {
            weights,
            s: s.clone(),
            dsz,
            dsn,
            mask,
            loss_weights,
            original,
        })
    }

    pub fn layout(&self) -> StyleLayout {
        self.weights.arch.layout()
    }

    pub fn original(&self) -> &Image<f64> {
        &self.original
    }

    pub fn dsz(&self) -> &[f64] {
        &self.dsz
    }

    pub fn dsn(&self) -> &[f64] {
        &self.dsn
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// `h(s + Δs_m(Λ))`.
    pub fn render(&self, lambda: &InterventionCoeffs) -> Result<Image<f64>> {
        let dsm = merge_displacement(lambda, &self.dsz, &self.dsn)?;
        synthesize(&self.weights, &self.s.offset_by(&dsm)?)
    }

    fn breakdown(&self, pix: f64, dsm: &[f64], lambda: &InterventionCoeffs) -> LossBreakdown {
        // a vanishing merged displacement has no direction; its cosine term is taken as 0
        let attr = loss_attr(&self.dsn, dsm).unwrap_or(0.0);
        let norm = loss_norm(lambda);
        let lw = self.loss_weights;
        LossBreakdown {
            pix,
            attr,
            norm,
            total: pix + lw.lambda_attr * attr + lw.lambda_norm * norm,
        }
    }

    /// Total loss at `Λ`, and the edited image.
    pub fn evaluate(&self, lambda: &InterventionCoeffs) -> Result<(LossBreakdown, Image<f64>)> {
        let dsm = merge_displacement(lambda, &self.dsz, &self.dsn)?;
        let img = synthesize(&self.weights, &self.s.offset_by(&dsm)?)?;
        let pix = loss_pix(&self.original, &img, &self.mask)?;
        Ok((self.breakdown(pix, &dsm, lambda), img))
    }

    /// Total loss, its gradient w.r.t. every coordinate of `Λ`, and the
    /// edited image. Non-differentiable points (zero norms) use the zero
    /// subgradient.
    pub fn loss_and_grad(
        &self,
        lambda: &InterventionCoeffs,
    ) -> Result<(LossBreakdown, Vec<f64>, Image<f64>)> {
        let dsm = merge_displacement(lambda, &self.dsz, &self.dsn)?;
        let edited = self.s.offset_by(&dsm)?;
        let layout = self.layout();
        let mut tape = Tape::<f64>::new();
        let gains: Vec<_> = (0..layout.n_layers())
            .map(|i| tape.leaf(Tensor::from_f64_slice(edited.slice(i))))
            .collect();
        let trace = trace_synthesis(&self.weights, &mut tape, &gains)?;
        let img = tape.value(trace.image).clone();

        let hw = self.mask.height() * self.mask.width();
        let bits = self.mask.bits();
        let diff: Vec<f64> = img
            .data()
            .iter()
            .zip(self.original.data())
            .enumerate()
            .map(|(i, (a, b))| if bits[i % hw] { 0.0 } else { a - b })
            .collect();
        let pix = l2(&diff);
        let loss = self.breakdown(pix, &dsm, lambda);

        // d pix / d s
        let mut g_s = vec![0.0; layout.total()];
        if pix > 0.0 {
            let seed = Tensor::new(img.dims().to_vec(), diff.iter().map(|d| d / pix).collect())?;
            let grads = tape.backward(trace.image, seed)?;
            for (i, node) in gains.iter().enumerate() {
                if let Some(g) = grads.get(*node) {
                    g_s[layout.range(i)].copy_from_slice(g.data());
                }
            }
        }
        // d attr / d Δs_m
        let (nn, nm) = (l2(&self.dsn), l2(&dsm));
        let lw = self.loss_weights;
        let mut g_m = vec![0.0; dsm.len()];
        if nn > 0.0 && nm > 0.0 && lw.lambda_attr != 0.0 {
            let c = dot(&self.dsn, &dsm);
            for ((g, n), m) in g_m.iter_mut().zip(&self.dsn).zip(&dsm) {
                *g = -(n / (nn * nm) - c * m / (nn * nm * nm * nm));
            }
        }
        let norm = loss.norm;
        let grad = (0..dsm.len())
            .map(|j| {
                let dm_dl = self.dsn[j] - self.dsz[j];
                let g_norm = if norm > 0.0 {
                    lambda.values[j] / norm
                } else {
                    0.0
                };
                (g_s[j] + lw.lambda_attr * g_m[j]) * dm_dl + lw.lambda_norm * g_norm
            })
            .collect();
        Ok((loss, grad, img))
    }
}

/// Total loss at `Λ` (see [`InterventionProblem::evaluate`]).
pub fn total_loss(
    problem: &InterventionProblem,
    lambda: &InterventionCoeffs,
) -> Result<LossBreakdown> {
    Ok(problem.evaluate(lambda)?.0)
}

/// Whether each styled layer gets one coefficient per channel or a single
/// shared scalar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    PerChannel,
    PerLayer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schedule {
    /// Adam steps per layer.
    pub steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub granularity: Granularity,
    /// Optimize all layers together for `steps × n_layers` steps instead of
    /// one layer at a time.
    pub joint: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            granularity: Granularity::PerChannel,
            joint: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad schedule {self:?}")))
        }
    }
}

/// Loss at the iterate whose gradient drove step `step` of layer `layer`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub layer: usize,
    pub step: usize,
    pub loss: LossBreakdown,
    /// Outside-mask MSE of the edited image vs the input image.
    pub masked_mse: f64,
}

/// State after finishing a layer; the first entry (`layer = None`) is the
/// initial Z-space edit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: Option<usize>,
    pub loss: LossBreakdown,
    pub masked_mse: f64,
}

#[derive(Clone, Debug)]
pub struct InterventionResult {
    pub lambda: InterventionCoeffs,
    pub trajectory: Vec<TrajectoryRow>,
    pub summaries: Vec<LayerSummary>,
    /// Edited image after each layer.
    pub layer_images: Vec<Image<f64>>,
    pub image: Image<f64>,
    pub dsm: Vec<f64>,
}

impl InterventionResult {
    /// Outside-mask MSE: initial, then after each layer.
    pub fn masked_mse_sequence(&self) -> Vec<f64> {
        self.summaries.iter().map(|s| s.masked_mse).collect()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64], sch: &Schedule) {
        self.t += 1;
        let b1t = 1.0 - sch.beta1.powi(self.t);
        let b2t = 1.0 - sch.beta2.powi(self.t);
        for (((xi, &gi), mi), vi) in x.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *mi = sch.beta1 * *mi + (1.0 - sch.beta1) * gi;
            *vi = sch.beta2 * *vi + (1.0 - sch.beta2) * gi * gi;
            let step = sch.lr * (*mi / b1t) / ((*vi / b2t).sqrt() + sch.eps);
            *xi = (*xi - step).clamp(0.0, 1.0);
        }
    }
}

/// Layer-wise projected Adam from `Λ = 0`: coarse to fine, one layer's
/// coefficients at a time with all others frozen, clamping to `[0,1]` after
/// every step. Adam moments restart for each layer.
pub fn optimize(problem: &InterventionProblem, schedule: &Schedule) -> Result<InterventionResult> {
    schedule.validate()?;
    let layout = problem.layout();
    let n_layers = layout.n_layers();
    let mut lambda = InterventionCoeffs::zeros(layout.clone());
    let mut trajectory = Vec::with_capacity(n_layers * schedule.steps);
    let mut summaries = Vec::with_capacity(n_layers + 1);
    let mut layer_images = Vec::with_capacity(n_layers);

    let summarize =
        |lambda: &InterventionCoeffs, layer: Option<usize>| -> Result<(LayerSummary, Image<f64>)> {
            let (loss, img) = problem.evaluate(lambda)?;
            let mse = masked_mse(problem.original(), &img, problem.mask(), Region::Outside)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    layer: layer.unwrap_or(0),
                    step: schedule.steps,
                });
            }
            Ok((
                LayerSummary {
                    layer,
                    loss,
                    masked_mse: mse,
                },
                img,
            ))
        };
    summaries.push(summarize(&lambda, None)?.0);

    // (coordinate range, block index) pairs optimized in sequence
    let blocks: Vec<(std::ops::Range<usize>, usize)> = if schedule.joint {
        vec![(0..layout.total(), 0)]
    } else {
        (0..n_layers).map(|i| (layout.range(i), i)).collect()
    };
    let steps_per_block = if schedule.joint {
        schedule.steps * n_layers
    } else {
        schedule.steps
    };

    for (range, block) in blocks {
        let per_layer = schedule.granularity == Granularity::PerLayer;
        let n_params = if per_layer && !schedule.joint {
            1
        } else if per_layer {
            n_layers
        } else {
            range.len()
        };
        let mut adam = Adam::new(n_params);
        let mut params: Vec<f64> = if per_layer {
            (0..n_params)
                .map(|k| {
                    let r = if schedule.joint {
                        layout.range(k)
                    } else {
                        range.clone()
                    };
                    lambda.values[r.start]
                })
                .collect()
        } else {
            lambda.values[range.clone()].to_vec()
        };
        for step in 0..steps_per_block {
            let layer = if schedule.joint {
                step / schedule.steps.max(1)
            } else {
                block
            };
            let (loss, grad, img) = problem.loss_and_grad(&lambda)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    layer,
                    step,
                });
            }
            if grad[range.clone()].iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    what: "gradient",
                    layer,
                    step,
                });
            }
            let mse = masked_mse(problem.original(), &img, problem.mask(), Region::Outside)?;
            trajectory.push(TrajectoryRow {
                layer,
                step: if schedule.joint {
                    step % schedule.steps.max(1)
                } else {
                    step
                },
                loss,
                masked_mse: mse,
            });
            let g: Vec<f64> = if per_layer {
                (0..n_params)
                    .map(|k| {
                        let r = if schedule.joint {
                            layout.range(k)
                        } else {
                            range.clone()
                        };
                        grad[r].iter().sum()
                    })
                    .collect()
            } else {
                grad[range.clone()].to_vec()
            };
            adam.step(&mut params, &g, schedule);
            if per_layer {
                for (k, &p) in params.iter().enumerate() {
                    let r = if schedule.joint {
                        layout.range(k)
                    } else {
                        range.clone()
                    };
                    lambda.values[r].iter_mut().for_each(|v| *v = p);
                }
            } else {
                lambda.values[range.clone()].copy_from_slice(&params);
            }
        }
        if schedule.joint {
            for i in 0..n_layers {
                let (s, img) = summarize(&lambda, Some(i))?;
                summaries.push(s);
                layer_images.push(img);
            }
        } else {
            let (s, img) = summarize(&lambda, Some(block))?;
            summaries.push(s);
            layer_images.push(img);
        }
    }
    let dsm = merge_displacement(&lambda, problem.dsz(), problem.dsn())?;
    let image = problem.render(&lambda)?;
    Ok(InterventionResult {
        lambda,
        trajectory,
        summaries,
        layer_images,
        image,
        dsm,
    })
}

/// `style(z')` with `z' = z + beta·Δz_n`.
#[derive(Clone, Debug)]
pub struct ZEdit {
    pub z_edited: Vec<f64>,
    pub s: StyleCode,
    pub s_edited: StyleCode,
    /// `Δs_z = style(z') − style(z)`.
    pub dsz: Vec<f64>,
}

/// Moves `z` by `beta` along the unit normal of a Z-space plane and maps
/// both latents to style space.
pub fn z_edit<T: Scalar>(
    weights: &GeneratorWeights<T>,
    plane_z: &Hyperplane,
    z: &[f64],
    beta: f64,
) -> Result<ZEdit> {
    plane_z.require_space(Space::Z)?;
    if !beta.is_finite() {
        return Err(Error::InvalidArgument("beta must be finite".into()));
    }
    if z.len() != plane_z.dim() {
        return Err(Error::Shape {
            op: "z_edit",
            axis: "z",
            expected: plane_z.dim(),
            found: z.len(),
        });
    }
    let dir = direction_in_space(plane_z)?;
    let z_edited: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + beta * d).collect();
    let style =
        |z: &[f64]| -> Result<StyleCode> { style_from_w(weights, &map_latent(weights, z)?) };
    let s = style(z)?;
    let s_edited = style(&z_edited)?;
    let dsz = s_edited
        .values()
        .iter()
        .zip(s.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(ZEdit {
        z_edited,
        s,
        s_edited,
        dsz,
    })
}

/// `+1` when `z` scores non-positive on the Z plane (edit toward the
/// positive class), `-1` otherwise: edits always head for the opposite class.
pub fn edit_sign(plane_z: &Hyperplane, z: &[f64]) -> Result<f64> {
    Ok(if classify(plane_z, z)? > 0.0 {
        -1.0
    } else {
        1.0
    })
}

/// Scales the unit S-space direction to `‖Δs_z‖₂` (or to `gamma` when
/// given) and orients it by `sign`.
pub fn scale_direction(unit: &[f64], dsz: &[f64], sign: f64, gamma: Option<f64>) -> Vec<f64> {
    let g = gamma.unwrap_or_else(|| l2(dsz));
    unit.iter().map(|v| sign * g * v).collect()
}

/// `h(s + (1−Λ)·Δs_z + t·Λ·Δs_n)`.
pub fn interpolate<T: Scalar>(
    weights: &GeneratorWeights<T>,
    s: &StyleCode,
    dsz: &[f64],
    dsn: &[f64],
    lambda: &InterventionCoeffs,
    t: f64,
) -> Result<Image<T>> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interpolation t must be ≥ 0, found {t}"
        )));
    }
    let layout = lambda.layout();
    layout.check_len("Δs_z", dsz.len())?;
    layout.check_len("Δs_n", dsn.len())?;
    let delta: Vec<f64> = lambda
        .values()
        .iter()
        .zip(dsz.iter().zip(dsn))
        .map(|(&l, (&z, &n))| (1.0 - l) * z + t * l * n)
        .collect();
    synthesize(weights, &s.offset_by(&delta)?)
}

/// Outcome of checking an edited style code against the ideal-edit
/// conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditVerification {
    pub score_before: f64,
    pub score_after: f64,
    /// `f(s)·f(ŝ) < 0`.
    pub sign_flip: bool,
    /// `max |ŝ_c̄ − s_c̄| ≤ tol`; `None` when no partition was given.
    pub off_concept_preserved: Option<bool>,
    pub max_off_concept_delta: Option<f64>,
    pub tol: f64,
}

pub const DEFAULT_VERIFY_TOL: f64 = 1e-3;

pub fn verify_edit(
    plane_s: &Hyperplane,
    s: &StyleCode,
    s_hat: &StyleCode,
    partition: Option<&ChannelPartition>,
    tol: f64,
) -> Result<EditVerification> {
    plane_s.require_space(Space::S)?;
    if s.layout() != s_hat.layout() {
        return Err(Error::Layout(
            "edited style code has a different layout".into(),
        ));
    }
    let before = classify(plane_s, s.values())?;
    let after = classify(plane_s, s_hat.values())?;
    let off = partition.map(|p| {
        let inside = p.indicator(s.layout());
        s.values()
            .iter()
            .zip(s_hat.values())
            .zip(inside)
            .filter(|(_, inside)| !inside)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    Ok(EditVerification {
        score_before: before,
        score_after: after,
        sign_flip: before * after < 0.0,
        off_concept_preserved: off.map(|d| d <= tol),
        max_off_concept_delta: off,
        tol,
    })
}
