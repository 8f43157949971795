//! Network dissection: threshold feature maps at their top activations and
//! score spatial agreement with concept masks by IoU.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::ops::upsample;
use crate::numgrad::{Scalar, Tensor, UpsampleMode};
use crate::stylegen::{generate, synthesize_layer_inputs, ChannelPartition, GeneratorWeights};

pub use crate::stylegen::Mask;

pub const DEFAULT_FRACTION: f64 = 0.05;

/// Brings a `[H, W]` map up to `(out_h, out_w)` by repeated ×2 upsampling.
fn upsample_to<T: Scalar>(
    fmap: &Tensor<T>,
    out: (usize, usize),
    mode: UpsampleMode,
) -> Result<Tensor<T>> {
    let &[h, w] = fmap.dims() else {
        return Err(Error::Rank {
            op: "binarize_topk",
            expected: 2,
            found: fmap.rank(),
        });
    };
    let mut x = fmap.clone().reshape(&[1, h, w])?;
    let (mut ch, mut cw) = (h, w);
    while ch < out.0 && cw < out.1 {
        x = upsample(&x, mode)?;
        ch *= 2;
        cw *= 2;
    }
    if (ch, cw) != out {
        return Err(Error::InvalidArgument(format!(
            "binarize_topk: {h}×{w} map cannot be doubled to {}×{}",
            out.0, out.1
        )));
    }
    x.reshape(&[ch, cw])
}

/// Marks the top `fraction` of locations of `fmap` after upsampling it to
/// `out` (skipped when already at that size). `k = max(1, ⌊fraction·H·W⌋)`;
/// every location tying the k-th largest value is included.
pub fn binarize_topk<T: Scalar>(
    fmap: &Tensor<T>,
    fraction: f64,
    out: (usize, usize),
    mode: UpsampleMode,
) -> Result<Mask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "binarize_topk: fraction must lie in (0,1), found {fraction}"
        )));
    }
    let up = upsample_to(fmap, out, mode)?;
    let vals = up.to_f64_vec();
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(
            "binarize_topk: NaN in feature map".into(),
        ));
    }
    let k = ((fraction * vals.len() as f64).floor() as usize).max(1);
    let mut sorted = vals.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    Mask::new(out.0, out.1, vals.iter().map(|&v| v >= threshold).collect())
}

/// `|a ∧ b| / |a ∨ b|`, 0 when both are empty.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.count() + b.count() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub layer: usize,
    pub channel: usize,
    /// Mean IoU against each concept, in concept order.
    pub iou: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedChannel {
    pub layer: usize,
    pub channel: usize,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptRanking {
    pub concept: usize,
    pub name: String,
    /// All channels, descending IoU (ties by layer, then channel).
    pub ranking: Vec<RankedChannel>,
    /// Channels of the final resolution level only, same order rule.
    pub final_level: Vec<RankedChannel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissectionReport {
    pub fraction: f64,
    pub upsample: UpsampleMode,
    pub n_samples: usize,
    pub final_level_layers: Vec<usize>,
    pub channels: Vec<ChannelScore>,
    pub concepts: Vec<ConceptRanking>,
}

fn rank(mut v: Vec<RankedChannel>) -> Vec<RankedChannel> {
    v.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.layer.cmp(&b.layer))
            .then(a.channel.cmp(&b.channel))
    });
    v
}

/// Per-sample IoU table, `[layer][channel][concept]`.
fn sample_ious(
    weights: &GeneratorWeights,
    z: &[f64],
    concepts: &[ChannelPartition],
    fraction: f64,
    mode: UpsampleMode,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let res = weights.arch.resolution();
    let g = generate(weights, z)?;
    let (maps, _) = synthesize_layer_inputs(weights, &g.s)?;
    maps.iter()
        .map(|m| {
            let (c, h, w) = (m.dims()[0], m.dims()[1], m.dims()[2]);
            (0..c)
                .map(|ch| {
                    let plane =
                        Tensor::new(vec![h, w], m.data()[ch * h * w..(ch + 1) * h * w].to_vec())?;
                    let bin = binarize_topk(&plane, fraction, (res, res), mode)?;
                    concepts.iter().map(|p| iou(&bin, &p.region)).collect()
                })
                .collect()
        })
        .collect()
}

/// Dissects the maps each style coordinate modulates (see
/// [`synthesize_layer_inputs`]) so that `(layer, channel)` ids coincide with
/// the style layout and with [`ChannelPartition`] members. IoUs are averaged
/// over samples in index order.
pub fn dissect_generator(
    weights: &GeneratorWeights,
    samples: &[Vec<f64>],
    concepts: &[ChannelPartition],
    fraction: f64,
    mode: UpsampleMode,
    jobs: usize,
) -> Result<DissectionReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "dissection needs at least one sample".into(),
        ));
    }
    let res = weights.arch.resolution();
    for p in concepts {
        if p.region.dims() != (res, res) {
            return Err(Error::InvalidArgument(format!(
                "concept `{}` mask is {:?}, images are {res}×{res}",
                p.name,
                p.region.dims()
            )));
        }
    }
    let one = |z: &Vec<f64>| sample_ious(weights, z, concepts, fraction, mode);
    let per_sample: Vec<_> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        pool.install(|| samples.par_iter().map(one).collect::<Result<Vec<_>>>())?
    } else {
        samples.iter().map(one).collect::<Result<Vec<_>>>()?
    };

    let n = per_sample.len() as f64;
    let mut mean = per_sample[0].clone();
    for (l, layer) in mean.iter_mut().enumerate() {
        for (c, chan) in layer.iter_mut().enumerate() {
            for (k, v) in chan.iter_mut().enumerate() {
                *v = per_sample.iter().map(|s| s[l][c][k]).sum::<f64>() / n;
            }
        }
    }

    let layers = weights.arch.layers();
    let final_level_layers: Vec<usize> = layers
        .iter()
        .filter(|l| l.resolution == res)
        .map(|l| l.index)
        .collect();
    let channels: Vec<ChannelScore> = mean
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            layer.iter().enumerate().map(move |(c, ious)| ChannelScore {
                layer: l,
                channel: c,
                iou: ious.clone(),
            })
        })
        .collect();
    let concepts = concepts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let all: Vec<RankedChannel> = channels
                .iter()
                .map(|c| RankedChannel {
                    layer: c.layer,
                    channel: c.channel,
                    iou: c.iou[k],
                })
                .collect();
            let fin = all
                .iter()
                .filter(|c| final_level_layers.contains(&c.layer))
                .cloned()
                .collect();
            ConceptRanking {
                concept: p.concept,
                name: p.name.clone(),
                ranking: rank(all),
                final_level: rank(fin),
            }
        })
        .collect();
    Ok(DissectionReport {
        fraction,
        upsample: mode,
        n_samples: samples.len(),
        final_level_layers,
        channels,
        concepts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_fn(&[h, w], |i| i as f64)
    }

    #[test]
    fn top_five_percent_of_32x32() {
        let m = binarize_topk(&ramp(32, 32), 0.05, (32, 32), UpsampleMode::Bilinear).unwrap();
        assert_eq!(m.count(), 51);
    }

    #[test]
    fn tiny_map_keeps_single_maximum() {
        let m = binarize_topk(&ramp(4, 4), 0.05, (4, 4), UpsampleMode::Bilinear).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.get(3, 3));
    }

    #[test]
    fn constant_map_ties_everywhere() {
        let f = Tensor::<f64>::full(&[8, 8], 0.4);
        let m = binarize_topk(&f, 0.05, (32, 32), UpsampleMode::Bilinear).unwrap();
        assert_eq!(m.count(), 1024);
    }

    #[test]
    fn upsampling_reaches_output_size() {
        let m = binarize_topk(&ramp(8, 8), 0.05, (32, 32), UpsampleMode::Nearest).unwrap();
        // top 51 of 1024 → the brightest 4×4 block (16) plus ties of the next blocks
        assert!(m.count() >= 51);
        assert!(binarize_topk(&ramp(6, 6), 0.05, (32, 32), UpsampleMode::Nearest).is_err());
        assert!(binarize_topk(&ramp(4, 4), 1.0, (4, 4), UpsampleMode::Nearest).is_err());
    }

    #[test]
    fn iou_cases() {
        let tl = Mask::from_fn(32, 32, |y, x| y < 16 && x < 16);
        let left = Mask::from_fn(32, 32, |_, x| x < 16);
        let br = Mask::from_fn(32, 32, |y, x| y >= 16 && x >= 16);
        assert_eq!(iou(&tl, &tl).unwrap(), 1.0);
        assert_eq!(iou(&tl, &br).unwrap(), 0.0);
        assert_eq!(iou(&tl, &left).unwrap(), 0.5);
        assert_eq!(iou(&Mask::zeros(4, 4), &Mask::zeros(4, 4)).unwrap(), 0.0);
        assert!(iou(&tl, &Mask::zeros(4, 4)).is_err());
    }
}
