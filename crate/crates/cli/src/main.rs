use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use siv_core::directions::Space;
use siv_core::intervene::Granularity;
use siv_core::numgrad::UpsampleMode;
use siv_core::pipeline::{
    cmd_dissect, cmd_gen_weights, cmd_interpolate, cmd_intervene, cmd_sample, cmd_train_direction,
    Backend, IntervenePaths, MaskSource, RunConfig,
};
use siv_core::stylegen::ArchSpec;

/// Style-space attribute directions and layer-wise intervention on a toy
/// style-based generator.
#[derive(Parser, Debug)]
#[command(name = "siv", version, about)]
struct Cli {
    /// TOML file with run settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a generator and write its weight file.
    GenWeights(GenWeights),
    /// Sample latents, render and label them.
    Sample(Sample),
    /// Train a sparse linear attribute classifier.
    TrainDirection(TrainDirection),
    /// Edit one sample with the layer-wise intervention.
    Intervene(Intervene),
    /// Render images along the style-space direction of an intervention.
    Interpolate(Interpolate),
    /// Score feature maps against concept masks.
    Dissect(Dissect),
}

#[derive(Args, Debug)]
struct GenWeights {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend: Option<Backend>,
    /// JSON architecture description (random backend).
    #[arg(long)]
    arch: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Sample {
    #[arg(long)]
    weights: PathBuf,
    /// Concepts file; defaults to the one written next to the weights.
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainDirection {
    #[arg(long)]
    dataset: PathBuf,
    /// Generator weights, for the per-layer breakdown of S-space planes.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    space: Option<Space>,
    #[arg(long)]
    attr: Option<usize>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hinge_c: Option<f64>,
    #[arg(long)]
    step_scale: Option<f64>,
    /// Seed of the train/validation split.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Intervene {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    sample_index: Option<usize>,
    #[arg(long)]
    dir_z: PathBuf,
    #[arg(long)]
    dir_s: PathBuf,
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// Concept name/id, or a JSON mask file.
    #[arg(long)]
    mask: String,
    /// Attribute used to label the edited images.
    #[arg(long)]
    attr: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lattr: Option<f64>,
    #[arg(long)]
    lnorm: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// One shared coefficient per layer instead of one per channel.
    #[arg(long)]
    per_layer_scalar: bool,
    /// Optimize all layers at once.
    #[arg(long)]
    joint: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Interpolate {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    result: PathBuf,
    #[arg(long, value_delimiter = ',')]
    t_list: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Dissect {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    concepts: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    upsample: Option<UpsampleMode>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load_arch(path: &Path) -> anyhow::Result<ArchSpec> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let arch: ArchSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(arch)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::GenWeights(a) => {
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.backend, a.backend);
            if let Some(p) = &a.arch {
                cfg.arch = Some(load_arch(p)?);
            }
            let r = cmd_gen_weights(&cfg, &a.out)?;
            println!("wrote {} (sha256 {})", a.out.display(), r.result.checksum);
        }
        Command::Sample(a) => {
            set(&mut cfg.n_samples, a.n);
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.jobs, a.jobs);
            let r = cmd_sample(&cfg, &a.weights, a.concepts.as_deref(), &a.out)?;
            println!("sampled {} into {}", r.result.n, a.out.display());
            for b in &r.result.attributes {
                println!("  {} positive fraction {:.3}", b.name, b.positive_fraction);
            }
        }
        Command::TrainDirection(a) => {
            set(&mut cfg.space, a.space);
            set(&mut cfg.attribute, a.attr);
            set(&mut cfg.train.l1_lambda, a.l1);
            set(&mut cfg.train.epochs, a.epochs);
            set(&mut cfg.train.hinge_c, a.hinge_c);
            set(&mut cfg.train.step_scale, a.step_scale);
            set(&mut cfg.train.seed, a.split_seed);
            let r = cmd_train_direction(&cfg, &a.dataset, a.weights.as_deref(), &a.out)?;
            let d = &r.result.report;
            println!(
                "{} plane: train {:.4} validation {} sparsity {:.3}",
                d.space,
                d.train_accuracy,
                d.validation_accuracy
                    .map_or("n/a".into(), |v| format!("{v:.4}")),
                d.sparsity
            );
        }
        Command::Intervene(a) => {
            set(&mut cfg.sample_index, a.sample_index);
            set(&mut cfg.attribute, a.attr);
            set(&mut cfg.beta, a.beta);
            if a.gamma.is_some() {
                cfg.gamma = a.gamma;
            }
            set(&mut cfg.loss.lambda_attr, a.lattr);
            set(&mut cfg.loss.lambda_norm, a.lnorm);
            set(&mut cfg.schedule.steps, a.steps);
            set(&mut cfg.schedule.lr, a.lr);
            if a.per_layer_scalar {
                cfg.schedule.granularity = Granularity::PerLayer;
            }
            if a.joint {
                cfg.schedule.joint = true;
            }
            let paths = IntervenePaths {
                weights: &a.weights,
                dataset: &a.dataset,
                dir_z: &a.dir_z,
                dir_s: &a.dir_s,
                concepts: a.concepts.as_deref(),
                mask: MaskSource::parse(&a.mask),
                out: &a.out,
            };
            let r = cmd_intervene(&cfg, &paths)?;
            let s = &r.result.summary;
            println!(
                "outside-mask MSE: z-edit {:.3e}, final {:.3e}; score {:.3} -> {:.3}",
                s.z_edit_masked_mse, s.final_masked_mse, s.score_before, s.score_after
            );
        }
        Command::Interpolate(a) => {
            set(&mut cfg.t_list, a.t_list);
            let r = cmd_interpolate(&cfg, &a.weights, &a.result, &a.out)?;
            println!(
                "rendered {} images into {}",
                r.result.t.len(),
                a.out.display()
            );
        }
        Command::Dissect(a) => {
            set(&mut cfg.dissect_samples, a.samples);
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.fraction, a.fraction);
            set(&mut cfg.upsample, a.upsample);
            set(&mut cfg.jobs, a.jobs);
            let r = cmd_dissect(&cfg, &a.weights, a.concepts.as_deref(), &a.out)?;
            for c in &r.result.concepts {
                if let Some(top) = c.final_level.first() {
                    println!(
                        "{}: best final-level channel ({}, {}) IoU {:.3}",
                        c.name, top.layer, top.channel, top.iou
                    );
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
