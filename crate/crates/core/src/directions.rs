//! Sparse linear attribute classifiers in Z, W or S space.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::TensorFile;
use crate::numgrad::Scalar;
use crate::stylegen::{Image, Mask, StyleLayout};

/// Space a hyperplane was trained in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    Z,
    W,
    S,
}

impl Space {
    fn code(self) -> f64 {
        match self {
            Space::Z => 0.0,
            Space::W => 1.0,
            Space::S => 2.0,
        }
    }

    fn from_code(v: f64) -> Result<Self> {
        [Space::Z, Space::W, Space::S]
            .into_iter()
            .find(|s| s.code() == v)
            .ok_or_else(|| Error::Format(format!("unknown space code {v}")))
    }
}

impl std::str::FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z" | "Z" => Ok(Space::Z),
            "w" | "W" => Ok(Space::W),
            "s" | "S" => Ok(Space::S),
            other => Err(Error::InvalidArgument(format!(
                "unknown space `{other}` (expected z|w|s)"
            ))),
        }
    }
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Space::Z => "Z",
            Space::W => "W",
            Space::S => "S",
        })
    }
}

/// How an attribute's ±1 label is obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelRule {
    /// `+1` iff the mean of image channel `channel` over `region` exceeds
    /// `threshold`.
    Region {
        concept: usize,
        channel: usize,
        threshold: f64,
        region: Mask,
    },
    /// Labels are supplied alongside the dataset.
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub id: usize,
    pub name: String,
    pub rule: LabelRule,
}

impl AttributeSpec {
    /// Region statistic the label thresholds (mean intensity inside the
    /// region); `None` for external labels.
    pub fn statistic<T: Scalar>(&self, image: &Image<T>) -> Result<Option<f64>> {
        let LabelRule::Region {
            channel, region, ..
        } = &self.rule
        else {
            return Ok(None);
        };
        let (c, h, w) = match image.dims() {
            &[c, h, w] => (c, h, w),
            d => {
                return Err(Error::Rank {
                    op: "attribute",
                    expected: 3,
                    found: d.len(),
                })
            }
        };
        if *channel >= c || region.dims() != (h, w) {
            return Err(Error::InvalidArgument(format!(
                "attribute `{}` does not fit a {c}×{h}×{w} image",
                self.name
            )));
        }
        let n = region.count();
        if n == 0 {
            return Err(Error::InvalidArgument(format!(
                "attribute `{}` has an empty region",
                self.name
            )));
        }
        let plane = &image.data()[channel * h * w..(channel + 1) * h * w];
        let sum: f64 = plane
            .iter()
            .zip(region.bits())
            .filter(|(_, &b)| b)
            .map(|(v, _)| v.as_f64())
            .sum();
        Ok(Some(sum / n as f64))
    }

    pub fn label<T: Scalar>(&self, image: &Image<T>) -> Result<i8> {
        let LabelRule::Region { threshold, .. } = &self.rule else {
            return Err(Error::InvalidArgument(format!(
                "attribute `{}` has external labels",
                self.name
            )));
        };
        let stat = self.statistic(image)?.expect("region rule has a statistic");
        Ok(if stat > *threshold { 1 } else { -1 })
    }
}

/// Solver settings. The objective is
/// `hinge_c · mean(max(0, 1 − y(n·x + b))) + l1_lambda · ‖n‖₁`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub l1_lambda: f64,
    pub hinge_c: f64,
    /// Full-batch proximal steps.
    pub epochs: usize,
    /// Seed of the train/validation shuffle.
    pub seed: u64,
    /// Step size at iteration `t` is `step_scale / sqrt(t)`.
    pub step_scale: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l1_lambda: 1e-4,
            hinge_c: 1.0,
            epochs: 3000,
            seed: 0,
            step_scale: 1e4,
            val_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.l1_lambda >= 0.0
            && self.l1_lambda.is_finite()
            && self.hinge_c > 0.0
            && self.hinge_c.is_finite()
            && self.step_scale > 0.0
            && self.step_scale.is_finite()
            && (0.0..1.0).contains(&self.val_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "bad training config {self:?}"
            )))
        }
    }
}

/// Trained separating hyperplane `f(x) = n·x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub space: Space,
    /// Raw trained normal; used by [`classify`].
    pub normal: Vec<f64>,
    pub bias: f64,
    /// `normal / ‖normal‖₂`, all zeros if the raw normal is zero.
    pub unit_normal: Vec<f64>,
    pub config: TrainConfig,
}

impl Hyperplane {
    pub fn new(space: Space, normal: Vec<f64>, bias: f64, config: TrainConfig) -> Self {
        let norm = l2(&normal);
        let unit_normal = if norm > 0.0 {
            normal.iter().map(|v| v / norm).collect()
        } else {
            vec![0.0; normal.len()]
        };
        Self {
            space,
            normal,
            bias,
            unit_normal,
            config,
        }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Fraction of exactly-zero coordinates of the raw normal.
    pub fn sparsity(&self) -> f64 {
        if self.normal.is_empty() {
            return 0.0;
        }
        self.normal.iter().filter(|&&v| v == 0.0).count() as f64 / self.normal.len() as f64
    }

    pub fn require_space(&self, expected: Space) -> Result<()> {
        if self.space == expected {
            Ok(())
        } else {
            Err(Error::Space {
                expected,
                found: self.space,
            })
        }
    }

    pub fn to_file(&self) -> TensorFile {
        let c = &self.config;
        let mut f = TensorFile::new();
        let seed: Vec<f64> = (0..4)
            .map(|k| ((c.seed >> (16 * k)) & 0xffff) as f64)
            .collect();
        let entries: [(&str, Vec<f64>); 6] = [
            ("space", vec![self.space.code()]),
            ("normal", self.normal.clone()),
            ("bias", vec![self.bias]),
            (
                "config",
                vec![
                    c.l1_lambda,
                    c.hinge_c,
                    c.epochs as f64,
                    c.step_scale,
                    c.val_fraction,
                ],
            ),
            ("seed", seed),
            ("unit_normal", self.unit_normal.clone()),
        ];
        for (name, v) in entries {
            f.push_vec(name, &v).expect("unique names");
        }
        f
    }

    /// Loads a plane; the unit normal is recomputed in `f64` from the stored
    /// raw normal.
    pub fn from_file(file: &TensorFile) -> Result<Self> {
        let space = Space::from_code(file.get_scalar("space")?)?;
        let normal = file.get_vec("normal")?;
        let bias = file.get_scalar("bias")?;
        let cfg = file.get_vec("config")?;
        let seed = file.get_vec("seed")?;
        if cfg.len() != 5 || seed.len() != 4 {
            return Err(Error::Format("direction metadata has wrong length".into()));
        }
        let seed = seed
            .iter()
            .enumerate()
            .fold(0u64, |acc, (k, &v)| acc | ((v as u64 & 0xffff) << (16 * k)));
        let config = TrainConfig {
            l1_lambda: cfg[0],
            hinge_c: cfg[1],
            epochs: cfg[2] as usize,
            seed,
            step_scale: cfg[3],
            val_fraction: cfg[4],
        };
        Ok(Self::new(space, normal, bias, config))
    }
}

/// Accuracy and sparsity of a trained plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub space: Space,
    pub n_train: usize,
    pub n_validation: usize,
    pub train_accuracy: f64,
    /// `None` when the validation split is empty.
    pub validation_accuracy: Option<f64>,
    pub sparsity: f64,
    pub nonzero: usize,
    /// Nonzero coordinates per styled layer (S space only).
    pub per_layer_nonzero: Option<Vec<usize>>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Signed score `n·x + b` with the raw normal.
pub fn classify(plane: &Hyperplane, x: &[f64]) -> Result<f64> {
    if x.len() != plane.dim() {
        return Err(Error::Shape {
            op: "classify",
            axis: "dim",
            expected: plane.dim(),
            found: x.len(),
        });
    }
    Ok(dot(&plane.normal, x) + plane.bias)
}

/// Unit displacement along which the score increases.
pub fn direction_in_space(plane: &Hyperplane) -> Result<Vec<f64>> {
    if plane.unit_normal.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVector("hyperplane normal"));
    }
    Ok(plane.unit_normal.clone())
}

/// Nonzero normal coordinates per styled layer.
pub fn per_layer_nonzero(plane: &Hyperplane, layout: &StyleLayout) -> Result<Vec<usize>> {
    layout.check_len("hyperplane normal", plane.dim())?;
    Ok(layout
        .slots()
        .iter()
        .map(|s| {
            plane.normal[s.offset..s.offset + s.len]
                .iter()
                .filter(|&&v| v != 0.0)
                .count()
        })
        .collect())
}

fn accuracy(normal: &[f64], bias: f64, xs: &[&[f64]], ys: &[i8]) -> f64 {
    let hits = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| {
            let score = dot(normal, x) + bias;
            (score > 0.0 && y > 0) || (score <= 0.0 && y < 0)
        })
        .count();
    hits as f64 / xs.len() as f64
}

/// Trains an L1-regularized linear SVM by full-batch proximal subgradient
/// descent on mean-centred features. The soft-threshold step leaves exact
/// zeros. Accuracies come from a seeded shuffle split of `vectors`.
pub fn train_hyperplane(
    space: Space,
    vectors: &[Vec<f64>],
    labels: &[i8],
    config: &TrainConfig,
) -> Result<(Hyperplane, DirectionReport)> {
    config.validate()?;
    if vectors.len() != labels.len() {
        return Err(Error::Shape {
            op: "train_hyperplane",
            axis: "samples",
            expected: vectors.len(),
            found: labels.len(),
        });
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "vectors must have positive dimension".into(),
        ));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            op: "train_hyperplane",
            axis: "dim",
            expected: dim,
            found: v.len(),
        });
    }
    if !vectors.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    if let Some(&first) = labels.first() {
        if labels.iter().all(|&y| y == first) {
            return Err(Error::SingleClass { label: first });
        }
    }

    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_val = (config.val_fraction * vectors.len() as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let ty: Vec<i8> = train_idx.iter().map(|&i| labels[i]).collect();
    if ty.iter().all(|&y| y == ty[0]) {
        return Err(Error::SingleClass { label: ty[0] });
    }

    let m = train_idx.len();
    let mut mean = vec![0.0; dim];
    for &i in train_idx {
        for (acc, v) in mean.iter_mut().zip(&vectors[i]) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let xc: Vec<Vec<f64>> = train_idx
        .iter()
        .map(|&i| vectors[i].iter().zip(&mean).map(|(v, mu)| v - mu).collect())
        .collect();

    let mut n = vec![0.0; dim];
    let mut b = 0.0;
    let mut grad = vec![0.0; dim];
    for t in 1..=config.epochs {
        let eta = config.step_scale / (t as f64).sqrt();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (x, &y) in xc.iter().zip(&ty) {
            let y = y as f64;
            if y * (dot(&n, x) + b) < 1.0 {
                for (g, v) in grad.iter_mut().zip(x) {
                    *g -= y * v;
                }
                gb -= y;
            }
        }
        let scale = config.hinge_c / m as f64;
        for (nv, g) in n.iter_mut().zip(&grad) {
            *nv = soft_threshold(*nv - eta * scale * g, eta * config.l1_lambda);
        }
        b -= eta * scale * gb;
    }
    let bias = b - dot(&n, &mean);
    let plane = Hyperplane::new(space, n, bias, config.clone());

    let rows = |idx: &[usize]| -> (Vec<&[f64]>, Vec<i8>) {
        (
            idx.iter().map(|&i| vectors[i].as_slice()).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (tx, ty) = rows(train_idx);
    let (vx, vy) = rows(val_idx);
    let report = DirectionReport {
        space,
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        train_accuracy: accuracy(&plane.normal, plane.bias, &tx, &ty),
        validation_accuracy: (!vx.is_empty())
            .then(|| accuracy(&plane.normal, plane.bias, &vx, &vy)),
        sparsity: plane.sparsity(),
        nonzero: plane.normal.iter().filter(|&&v| v != 0.0).count(),
        per_layer_nonzero: None,
    };
    Ok((plane, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_points() -> (Vec<Vec<f64>>, Vec<i8>) {
        (vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![1, -1])
    }

    #[test]
    fn two_point_minimizer() {
        let (x, y) = two_points();
        let (plane, rep) = train_hyperplane(Space::S, &x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(plane.unit_normal, vec![1.0, 0.0]);
        assert_eq!(plane.normal[1], 0.0);
        assert_eq!(rep.train_accuracy, 1.0);
        assert_eq!(rep.validation_accuracy, None);
    }

    #[test]
    fn flipped_labels_negate_normal() {
        let (x, y) = two_points();
        let flipped: Vec<i8> = y.iter().map(|v| -v).collect();
        let cfg = TrainConfig::default();
        let (a, ra) = train_hyperplane(Space::S, &x, &y, &cfg).unwrap();
        let (b, rb) = train_hyperplane(Space::S, &x, &flipped, &cfg).unwrap();
        let neg: Vec<f64> = a.unit_normal.iter().map(|v| -v).collect();
        assert_eq!(b.unit_normal, neg);
        assert_eq!(ra.train_accuracy, rb.train_accuracy);
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        assert!(matches!(
            train_hyperplane(Space::Z, &x, &[1, 1, 1], &TrainConfig::default()),
            Err(Error::SingleClass { label: 1 })
        ));
        let empty: Vec<Vec<f64>> = vec![vec![], vec![]];
        assert!(train_hyperplane(Space::Z, &empty, &[1, -1], &TrainConfig::default()).is_err());
    }

    #[test]
    fn classify_properties() {
        let plane = Hyperplane::new(Space::S, vec![2.0, -1.0], 0.5, TrainConfig::default());
        // on the plane: 2x - y = -0.5
        assert_eq!(classify(&plane, &[0.0, 0.5]).unwrap(), 0.0);
        let scaled = Hyperplane::new(Space::S, vec![6.0, -3.0], 1.5, TrainConfig::default());
        for x in [[1.0, 3.0], [-0.3, 0.1], [0.0, 0.0]] {
            let (a, b) = (
                classify(&plane, &x).unwrap(),
                classify(&scaled, &x).unwrap(),
            );
            assert_eq!(a.signum(), b.signum());
        }
        assert!(classify(&plane, &[1.0]).is_err());
    }

    #[test]
    fn direction_is_unit_and_increases_score() {
        let plane = Hyperplane::new(Space::S, vec![3.0, 4.0], -1.0, TrainConfig::default());
        let d = direction_in_space(&plane).unwrap();
        assert!((l2(&d) - 1.0).abs() < 1e-12);
        let x = [0.3, -0.7];
        let eps = 0.25;
        let moved: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
        let delta = classify(&plane, &moved).unwrap() - classify(&plane, &x).unwrap();
        // raw normal has norm 5
        assert!((delta - 5.0 * eps).abs() < 1e-12);
        let zero = Hyperplane::new(Space::S, vec![0.0, 0.0], 1.0, TrainConfig::default());
        assert!(direction_in_space(&zero).is_err());
    }

    #[test]
    fn file_round_trip() {
        let cfg = TrainConfig {
            seed: 0x1234_5678_9abc,
            ..TrainConfig::default()
        };
        let plane = Hyperplane::new(Space::W, vec![0.5, 0.0, -0.25], 0.125, cfg);
        let back = Hyperplane::from_file(&plane.to_file()).unwrap();
        assert_eq!(back.normal, plane.normal);
        assert_eq!(back.unit_normal, plane.unit_normal);
        assert_eq!((back.space, back.bias), (plane.space, plane.bias));
        assert_eq!(back.config.seed, plane.config.seed);
        assert_eq!(back.config.epochs, plane.config.epochs);
        assert!(matches!(
            back.require_space(Space::Z),
            Err(Error::Space { .. })
        ));
    }

    #[test]
    fn irrelevant_coordinates_stay_zero() {
        // label depends on coordinate 0 only; coordinate 1 is constant noise-free
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 - 19.5) / 10.0, 1.0, ((i * 7) % 5) as f64 * 1e-3])
            .collect();
        let y: Vec<i8> = x.iter().map(|v| if v[0] > 0.0 { 1 } else { -1 }).collect();
        let (plane, rep) = train_hyperplane(Space::S, &x, &y, &TrainConfig::default()).unwrap();
        assert_eq!(plane.normal[1], 0.0);
        assert_eq!(plane.normal[2], 0.0);
        assert_eq!(rep.train_accuracy, 1.0);
        assert!((rep.sparsity - 2.0 / 3.0).abs() < 1e-12);
    }
}
