//! One function per CLI subcommand. Each is a pure function of its input
//! files and the resolved [`RunConfig`]; reports name inputs by file name
//! and checksum so re-runs into other directories stay byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Backend, RunConfig};
use super::dataset::{sample_dataset, sample_latent, Dataset};
use super::experiment::{run_edit, EditSetup, EditSummary};
use crate::directions::{
    per_layer_nonzero, train_hyperplane, AttributeSpec, DirectionReport, Hyperplane, LabelRule,
    Space,
};
use crate::dissect::{dissect_generator, DissectionReport};
use crate::error::{Error, Result};
use crate::format::{write_ppm, TensorFile};
use crate::intervene::{interpolate, EditVerification, InterventionCoeffs, LayerSummary};
use crate::metrics::{metrics_row, MetricsRow};
use crate::numgrad::{Scalar, Tensor};
use crate::stylegen::{
    build_planted_generator, build_random_generator, segmentation_mask, synthesize, ArchSpec,
    ChannelPartition, GeneratorWeights, Image, Mask, StyleCode,
};

pub const TOOL_VERSION: &str = concat!("siv ", env!("CARGO_PKG_VERSION"));

pub const DATASET_FILE: &str = "dataset.siv";
pub const DATASET_IMAGES: &str = "images.siv";
pub const DATASET_REPORT: &str = "dataset.json";
pub const LAMBDA_FILE: &str = "lambda.siv";
pub const VECTORS_FILE: &str = "vectors.siv";
pub const IMAGES_FILE: &str = "images.siv";
pub const MASK_FILE: &str = "mask.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const INTERP_FILE: &str = "interpolation.siv";
pub const INTERP_REPORT: &str = "interpolation.json";

/// Concept partitions and attribute labelers shipped next to planted weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Concepts {
    pub partitions: Vec<ChannelPartition>,
    pub attributes: Vec<AttributeSpec>,
}

impl Concepts {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&read(path.as_ref())?)?)
    }

    pub fn partition(&self, key: &str) -> Result<&ChannelPartition> {
        self.partitions
            .iter()
            .find(|p| p.name == key || p.concept.to_string() == key)
            .ok_or_else(|| Error::Missing(format!("concept `{key}`")))
    }

    pub fn attribute(&self, id: usize) -> Result<&AttributeSpec> {
        self.attributes
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::Missing(format!("attribute {id}")))
    }
}

/// `weights.siv` → `weights.concepts.json`.
pub fn concepts_path(weights: &Path) -> PathBuf {
    weights.with_extension("concepts.json")
}

/// `weights.siv` → `weights.report.json`.
pub fn sidecar_report_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Missing(path.display().to_string()),
        _ => Error::Io(e),
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

fn digest(path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&read(path)?),
    })
}

/// Envelope shared by every emitted report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<R> {
    pub tool: String,
    pub command: String,
    pub config: RunConfig,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: BTreeMap<String, String>,
    pub result: R,
}

struct ReportBuilder {
    command: &'static str,
    inputs: BTreeMap<String, FileDigest>,
    outputs: BTreeMap<String, String>,
}

impl ReportBuilder {
    fn new(command: &'static str) -> Self {
        Self {
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(role.into(), digest(path)?);
        Ok(())
    }

    /// Writes `bytes` to `path` and records its checksum.
    fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        fs::write(path, bytes)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.outputs.insert(name, sha256_hex(bytes));
        Ok(())
    }

    fn finish<R: Serialize>(self, cfg: &RunConfig, result: R, path: &Path) -> Result<Report<R>> {
        let report = Report {
            tool: TOOL_VERSION.into(),
            command: self.command.into(),
            config: cfg.clone(),
            inputs: self.inputs,
            outputs: self.outputs,
            result,
        };
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        fs::write(path, bytes)?;
        Ok(report)
    }
}

fn json_bytes<S: Serialize>(v: &S) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(v)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn images_tensor<T: Scalar>(images: &[Image<T>], chw: [usize; 3]) -> Result<Tensor<f32>> {
    let mut dims = vec![images.len()];
    dims.extend(chw);
    let data = images
        .iter()
        .flat_map(|img| img.data().iter().map(|v| v.as_f64() as f32))
        .collect();
    Tensor::new(dims, data)
}

fn image_chw(arch: &ArchSpec) -> [usize; 3] {
    let r = arch.resolution();
    [arch.out_channels, r, r]
}

// ---------------------------------------------------------------------------
// gen-weights

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenWeightsResult {
    pub backend: Backend,
    pub arch: ArchSpec,
    pub checksum: String,
    pub n_concepts: usize,
}

/// Writes `out`, its report and, for the planted backend, the concepts file.
pub fn cmd_gen_weights(cfg: &RunConfig, out: &Path) -> Result<Report<GenWeightsResult>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("gen-weights");
    let (weights, concepts) = match cfg.backend {
        Backend::Random => {
            let arch = cfg.arch.clone().unwrap_or_default();
            (build_random_generator(cfg.seed, &arch)?, None)
        }
        Backend::Planted => {
            if cfg.arch.is_some() {
                return Err(Error::InvalidArgument(
                    "the planted backend has a fixed architecture".into(),
                ));
            }
            let p = build_planted_generator(cfg.seed)?;
            let c = Concepts {
                partitions: p.partitions,
                attributes: p.attributes,
            };
            (p.weights, Some(c))
        }
    };
    rep.output(out, &weights.to_bytes())?;
    if let Some(c) = &concepts {
        rep.output(&concepts_path(out), &json_bytes(c)?)?;
    }
    rep.finish(
        cfg,
        GenWeightsResult {
            backend: cfg.backend,
            arch: weights.arch.clone(),
            checksum: weights.checksum(),
            n_concepts: concepts.map_or(0, |c| c.partitions.len()),
        },
        &sidecar_report_path(out),
    )
}

// ---------------------------------------------------------------------------
// sample

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeBalance {
    pub id: usize,
    pub name: String,
    pub positive_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub n: usize,
    pub seed: u64,
    pub attributes: Vec<AttributeBalance>,
}

/// Resolves an explicit concepts file, else the one next to the weights.
pub fn resolve_concepts(
    weights: &Path,
    explicit: Option<&Path>,
) -> Result<Option<(PathBuf, Concepts)>> {
    match explicit {
        Some(p) => Ok(Some((p.to_path_buf(), Concepts::load(p)?))),
        None => {
            let p = concepts_path(weights);
            if p.exists() {
                Ok(Some((p.clone(), Concepts::load(&p)?)))
            } else {
                Ok(None)
            }
        }
    }
}

pub fn cmd_sample(
    cfg: &RunConfig,
    weights_path: &Path,
    concepts: Option<&Path>,
    out_dir: &Path,
) -> Result<Report<SampleResult>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("sample");
    let weights = GeneratorWeights::load(weights_path)?;
    rep.input("weights", weights_path)?;
    let attrs = match resolve_concepts(weights_path, concepts)? {
        Some((p, c)) => {
            rep.input("concepts", &p)?;
            c.attributes
        }
        None => Vec::new(),
    };
    let (ds, images) = sample_dataset(&weights, &attrs, cfg.n_samples, cfg.seed, cfg.jobs)?;
    ensure_dir(out_dir)?;
    let arch = &weights.arch;
    let dims = (arch.d_z, arch.d_w, arch.layout().total());
    rep.output(&out_dir.join(DATASET_FILE), &ds.to_file(dims)?.to_bytes())?;
    let mut img = TensorFile::new();
    img.push("images", images_tensor(&images, image_chw(arch))?)?;
    rep.output(&out_dir.join(DATASET_IMAGES), &img.to_bytes())?;
    let balance = ds.class_balance();
    let result = SampleResult {
        n: ds.len(),
        seed: cfg.seed,
        attributes: attrs
            .iter()
            .zip(balance)
            .map(|(a, b)| AttributeBalance {
                id: a.id,
                name: a.name.clone(),
                positive_fraction: b,
            })
            .collect(),
    };
    rep.finish(cfg, result, &out_dir.join(DATASET_REPORT))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::from_file(&TensorFile::load(dir.join(DATASET_FILE))?)
}

// ---------------------------------------------------------------------------
// train-direction

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub attribute: usize,
    pub report: DirectionReport,
}

/// Trains a direction for `cfg.attribute` in `cfg.space`; `weights` (when
/// given) enables the per-layer breakdown for S-space planes.
pub fn cmd_train_direction(
    cfg: &RunConfig,
    dataset_dir: &Path,
    weights_path: Option<&Path>,
    out: &Path,
) -> Result<Report<TrainResult>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("train-direction");
    let ds_path = dataset_dir.join(DATASET_FILE);
    let ds = load_dataset(dataset_dir)?;
    rep.input("dataset", &ds_path)?;
    let y = ds.labels_for(cfg.attribute)?;
    let (plane, mut report) = train_hyperplane(cfg.space, ds.vectors(cfg.space), &y, &cfg.train)?;
    if let Some(wp) = weights_path {
        let w = GeneratorWeights::load(wp)?;
        rep.input("weights", wp)?;
        if cfg.space == Space::S {
            report.per_layer_nonzero = Some(per_layer_nonzero(&plane, &w.arch.layout())?);
        }
    }
    rep.output(out, &plane.to_file().to_bytes())?;
    rep.finish(
        cfg,
        TrainResult {
            attribute: cfg.attribute,
            report,
        },
        &out.with_extension("json"),
    )
}

// ---------------------------------------------------------------------------
// intervene

/// Where the edit mask comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskSource {
    /// Concept name or id from the concepts file.
    Concept(String),
    /// JSON mask file (rows of `0`/`1` strings).
    File(PathBuf),
}

impl MaskSource {
    /// A path to an existing file is a mask file, anything else a concept.
    pub fn parse(s: &str) -> Self {
        let p = Path::new(s);
        if p.is_file() {
            Self::File(p.to_path_buf())
        } else {
            Self::Concept(s.to_string())
        }
    }
}

pub struct IntervenePaths<'a> {
    pub weights: &'a Path,
    pub dataset: &'a Path,
    pub dir_z: &'a Path,
    pub dir_s: &'a Path,
    pub concepts: Option<&'a Path>,
    pub mask: MaskSource,
    pub out: &'a Path,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterveneResult {
    pub sample_index: usize,
    pub concept: Option<String>,
    pub summary: EditSummary,
    pub verification: EditVerification,
    pub layers: Vec<LayerSummary>,
    pub input_vs_z_edit: MetricsRow,
    pub input_vs_final: MetricsRow,
    pub lambda_mean_per_layer: Vec<f64>,
}

fn round_f32(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x as f32 as f64).collect()
}

pub fn cmd_intervene(
    cfg: &RunConfig,
    paths: &IntervenePaths<'_>,
) -> Result<Report<InterveneResult>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("intervene");
    let weights = GeneratorWeights::load(paths.weights)?;
    rep.input("weights", paths.weights)?;
    let ds = load_dataset(paths.dataset)?;
    rep.input("dataset", &paths.dataset.join(DATASET_FILE))?;
    let plane_z = Hyperplane::from_file(&TensorFile::load(paths.dir_z)?)?;
    rep.input("dir_z", paths.dir_z)?;
    let plane_s = Hyperplane::from_file(&TensorFile::load(paths.dir_s)?)?;
    rep.input("dir_s", paths.dir_s)?;
    plane_z.require_space(Space::Z)?;
    plane_s.require_space(Space::S)?;
    let layout = weights.arch.layout();
    if plane_s.dim() != layout.total() {
        return Err(Error::Layout(format!(
            "S direction has {} coordinates, generator style code has {}",
            plane_s.dim(),
            layout.total()
        )));
    }
    if plane_z.dim() != weights.arch.d_z {
        return Err(Error::Layout(format!(
            "Z direction has {} coordinates, generator latent has {}",
            plane_z.dim(),
            weights.arch.d_z
        )));
    }
    let z = ds
        .z
        .get(cfg.sample_index)
        .ok_or_else(|| Error::Missing(format!("sample {} of {}", cfg.sample_index, ds.len())))?;

    let concepts = resolve_concepts(paths.weights, paths.concepts)?;
    if let Some((p, _)) = &concepts {
        rep.input("concepts", p)?;
    }
    let (mask, partition) = match &paths.mask {
        MaskSource::File(p) => {
            rep.input("mask", p)?;
            let m: Mask = serde_json::from_slice(&read(p)?)?;
            (m, None)
        }
        MaskSource::Concept(key) => {
            let (_, c) = concepts
                .as_ref()
                .ok_or_else(|| Error::Missing("concepts file for a concept mask".into()))?;
            let part = c.partition(key)?.clone();
            (segmentation_mask(&part), Some(part))
        }
    };
    let attribute = concepts
        .as_ref()
        .and_then(|(_, c)| c.attribute(cfg.attribute).ok().cloned());
    if let (Some(a), Some(p)) = (&attribute, &partition) {
        if let LabelRule::Region { concept, .. } = a.rule {
            if concept != p.concept {
                return Err(Error::InvalidArgument(format!(
                    "attribute `{}` belongs to concept {concept}, mask is concept {}",
                    a.name, p.concept
                )));
            }
        }
    }

    let setup = EditSetup {
        weights: &weights,
        plane_z: &plane_z,
        plane_s: &plane_s,
        mask: &mask,
        partition: partition.as_ref(),
        attribute: attribute.as_ref(),
        beta: cfg.beta,
        gamma: cfg.gamma,
        loss_weights: cfg.loss,
        schedule: cfg.schedule.clone(),
        verify_tol: cfg.verify_tol,
    };
    let out = run_edit(&setup, z)?;
    ensure_dir(paths.out)?;

    // persisted vectors are f32; saved images are re-rendered from them so
    // that interpolation reproduces them exactly
    let lam = InterventionCoeffs::new(round_f32(out.result.lambda.values()), layout.clone())?;
    let s_r = StyleCode::new(round_f32(out.zedit.s.values()), layout.clone())?;
    let (dsz_r, dsn_r) = (round_f32(&out.zedit.dsz), round_f32(&out.dsn));
    let w64 = weights.cast::<f64>();
    let final_img = interpolate(&w64, &s_r, &dsz_r, &dsn_r, &lam, 1.0)?;
    let input_img = synthesize(&w64, &s_r)?;
    let zero = InterventionCoeffs::zeros(layout.clone());
    let z_img = interpolate(&w64, &s_r, &dsz_r, &dsn_r, &zero, 1.0)?;

    let mut lf = TensorFile::new();
    lf.push_vec("lambda", lam.values())?;
    for i in 0..layout.n_layers() {
        lf.push_vec(format!("lambda.{i}"), lam.layer(i))?;
    }
    rep.output(&paths.out.join(LAMBDA_FILE), &lf.to_bytes())?;

    let s_hat: Vec<f64> = out
        .zedit
        .s
        .values()
        .iter()
        .zip(&out.result.dsm)
        .map(|(a, b)| a + b)
        .collect();
    let mut vf = TensorFile::new();
    vf.push_vec("z", z)?;
    vf.push_vec("z_edit", &out.zedit.z_edited)?;
    vf.push_vec("s", out.zedit.s.values())?;
    vf.push_vec("s_z_edit", out.zedit.s_edited.values())?;
    vf.push_vec("ds_z", &out.zedit.dsz)?;
    vf.push_vec("ds_n", &out.dsn)?;
    vf.push_vec("ds_m", &out.result.dsm)?;
    vf.push_vec("s_hat", &s_hat)?;
    rep.output(&paths.out.join(VECTORS_FILE), &vf.to_bytes())?;

    let chw = image_chw(&weights.arch);
    let mut imf = TensorFile::new();
    imf.push(
        "input",
        images_tensor(std::slice::from_ref(&input_img), chw)?.reshape(&chw)?,
    )?;
    imf.push(
        "z_edit",
        images_tensor(std::slice::from_ref(&z_img), chw)?.reshape(&chw)?,
    )?;
    imf.push(
        "final",
        images_tensor(std::slice::from_ref(&final_img), chw)?.reshape(&chw)?,
    )?;
    for (i, img) in out.result.layer_images.iter().enumerate() {
        imf.push(
            format!("layer.{i}"),
            images_tensor(std::slice::from_ref(img), chw)?.reshape(&chw)?,
        )?;
    }
    rep.output(&paths.out.join(IMAGES_FILE), &imf.to_bytes())?;
    rep.output(&paths.out.join(MASK_FILE), &json_bytes(&mask)?)?;

    for (name, img) in [
        ("input", &input_img),
        ("z_edit", &z_img),
        ("final", &final_img),
    ] {
        let p = paths.out.join(format!("{name}.ppm"));
        write_ppm(&p, img)?;
        rep.output(&p, &read(&p)?)?;
    }
    for (i, img) in out.result.layer_images.iter().enumerate() {
        let p = paths.out.join(format!("layer_{i}.ppm"));
        write_ppm(&p, img)?;
        rep.output(&p, &read(&p)?)?;
    }

    let mut csv = String::from("layer,step,pix,attr,norm,total,masked_mse\n");
    for r in &out.result.trajectory {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.layer, r.step, r.loss.pix, r.loss.attr, r.loss.norm, r.loss.total, r.masked_mse
        ));
    }
    rep.output(&paths.out.join(TRAJECTORY_FILE), csv.as_bytes())?;

    let result = InterveneResult {
        sample_index: cfg.sample_index,
        concept: partition.as_ref().map(|p| p.name.clone()),
        input_vs_z_edit: metrics_row(&input_img, &z_img, &mask)?,
        input_vs_final: metrics_row(&input_img, &final_img, &mask)?,
        summary: out.summary,
        verification: out.verification,
        layers: out.result.summaries.clone(),
        lambda_mean_per_layer: (0..layout.n_layers())
            .map(|i| {
                let l = lam.layer(i);
                l.iter().sum::<f64>() / l.len().max(1) as f64
            })
            .collect(),
    };
    rep.finish(cfg, result, &paths.out.join(REPORT_FILE))
}

// ---------------------------------------------------------------------------
// interpolate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolateResult {
    pub t: Vec<f64>,
    /// Largest outside-mask per-pixel change relative to `t = 0`.
    pub max_outside_delta: Vec<f64>,
    /// Mean intensity inside the mask, all channels.
    pub inside_mean: Vec<f64>,
}

fn inside_mean(img: &Image<f64>, mask: &Mask) -> f64 {
    let hw = mask.height() * mask.width();
    let bits = mask.bits();
    let (s, n) = img
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| bits[i % hw])
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn cmd_interpolate(
    cfg: &RunConfig,
    weights_path: &Path,
    result_dir: &Path,
    out_dir: &Path,
) -> Result<Report<InterpolateResult>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("interpolate");
    let weights = GeneratorWeights::load(weights_path)?;
    rep.input("weights", weights_path)?;
    let prior: Report<serde_json::Value> =
        serde_json::from_slice(&read(&result_dir.join(REPORT_FILE))?)?;
    if let Some(d) = prior.inputs.get("weights") {
        let here = sha256_hex(&read(weights_path)?);
        if d.sha256 != here {
            return Err(Error::InvalidArgument(
                "weights differ from the ones the intervention ran with".into(),
            ));
        }
    }
    let (lp, vp, mp) = (
        result_dir.join(LAMBDA_FILE),
        result_dir.join(VECTORS_FILE),
        result_dir.join(MASK_FILE),
    );
    let lf = TensorFile::load(&lp)?;
    let vf = TensorFile::load(&vp)?;
    let mask: Mask = serde_json::from_slice(&read(&mp)?)?;
    rep.input("lambda", &lp)?;
    rep.input("vectors", &vp)?;
    rep.input("mask", &mp)?;
    let layout = weights.arch.layout();
    let lam = InterventionCoeffs::new(lf.get_vec("lambda")?, layout.clone())?;
    let s = StyleCode::new(vf.get_vec("s")?, layout)?;
    let (dsz, dsn) = (vf.get_vec("ds_z")?, vf.get_vec("ds_n")?);
    let w64 = weights.cast::<f64>();
    let images = cfg
        .t_list
        .iter()
        .map(|&t| interpolate(&w64, &s, &dsz, &dsn, &lam, t))
        .collect::<Result<Vec<_>>>()?;
    let base = interpolate(&w64, &s, &dsz, &dsn, &lam, 0.0)?;
    let hw = mask.height() * mask.width();
    let result = InterpolateResult {
        t: cfg.t_list.clone(),
        max_outside_delta: images
            .iter()
            .map(|img| {
                img.data()
                    .iter()
                    .zip(base.data())
                    .enumerate()
                    .filter(|(i, _)| !mask.bits()[i % hw])
                    .map(|(_, (a, b))| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect(),
        inside_mean: images.iter().map(|img| inside_mean(img, &mask)).collect(),
    };
    ensure_dir(out_dir)?;
    let mut f = TensorFile::new();
    f.push_vec("t", &cfg.t_list)?;
    f.push("images", images_tensor(&images, image_chw(&weights.arch))?)?;
    rep.output(&out_dir.join(INTERP_FILE), &f.to_bytes())?;
    for (k, img) in images.iter().enumerate() {
        let p = out_dir.join(format!("interp_{k}.ppm"));
        write_ppm(&p, img)?;
        rep.output(&p, &read(&p)?)?;
    }
    rep.finish(cfg, result, &out_dir.join(INTERP_REPORT))
}

// ---------------------------------------------------------------------------
// dissect

/// Dissects `cfg.dissect_samples` latents drawn from `cfg.seed` against the
/// concept masks and writes the report to `out`.
pub fn cmd_dissect(
    cfg: &RunConfig,
    weights_path: &Path,
    concepts: Option<&Path>,
    out: &Path,
) -> Result<Report<DissectionReport>> {
    cfg.validate()?;
    let mut rep = ReportBuilder::new("dissect");
    let weights = GeneratorWeights::load(weights_path)?;
    rep.input("weights", weights_path)?;
    let (cp, c) = resolve_concepts(weights_path, concepts)?
        .ok_or_else(|| Error::Missing("concepts file for dissection".into()))?;
    rep.input("concepts", &cp)?;
    let samples: Vec<Vec<f64>> = (0..cfg.dissect_samples as u64)
        .map(|i| sample_latent(cfg.seed, i, weights.arch.d_z))
        .collect();
    let report = dissect_generator(
        &weights,
        &samples,
        &c.partitions,
        cfg.fraction,
        cfg.upsample,
        cfg.jobs,
    )?;
    rep.finish(cfg, report, out)
}
