//! Hand-constructed generator whose channel→region correspondence is exact.
//!
//! Channel `c` of a `C`-channel tensor belongs to group `c / (C/4)`; group
//! `g` lives in quadrant `g` (0 top-left, 1 top-right, 2 bottom-left,
//! 3 bottom-right). Within a group, sub-channel 0 forms the "red chain" that
//! drives the red output of the quadrant and the remaining sub-channels form
//! the "green/blue chain". Kernels are 1×1 and block-diagonal over groups and
//! chains, upsampling is nearest and there is no normalization, so nothing
//! ever leaks across quadrants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{synthesize_features, ArchSpec, ChannelPartition, GeneratorWeights, Mask, StyleCode};
use crate::directions::{AttributeSpec, LabelRule};
use crate::error::Result;
use crate::numgrad::Tensor;

pub const PLANTED_GROUPS: usize = 4;

const QUADRANT_NAMES: [&str; 4] = ["top-left", "top-right", "bottom-left", "bottom-right"];

/// `w ≈ Q z + W_SHIFT` keeps the mapping network in its linear regime.
const W_SHIFT: f64 = 3.0;
/// Scale of the attribute coordinate's affine row.
const ATTR_SCALE: f64 = 0.25;
/// Mixing of the neighbouring latent axis into the attribute row, so that
/// a Z-space edit drags other quadrants along.
const ATTR_CROSS: f64 = 0.3;
const GB_SCALE: f64 = 0.2;
/// Styled layer holding the varying green/blue coordinate of each group.
const GB_LAYERS: [usize; 4] = [0, 1, 2, 5];
/// Styled layer holding the attribute (red) coordinate of every group.
const ATTR_LAYER: usize = 3;

pub struct PlantedGenerator {
    pub weights: GeneratorWeights,
    pub partitions: Vec<ChannelPartition>,
    pub attributes: Vec<AttributeSpec>,
}

fn group_of(c: usize, channels: usize) -> (usize, usize) {
    let size = channels / PLANTED_GROUPS;
    (c / size, c % size)
}

fn quadrant(g: usize, res: usize) -> Mask {
    let half = res / 2;
    let (qy, qx) = (g / 2, g % 2);
    Mask::from_fn(res, res, |y, x| y / half == qy && x / half == qx)
}

/// Haar-random orthogonal matrix via Gram–Schmidt on a Gaussian matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for r in &rows {
                let d: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= d * ri;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    rows
}

/// Builds the planted generator together with its four quadrant partitions
/// and quadrant "redness" attributes.
pub fn build_planted_generator(seed: u64) -> Result<PlantedGenerator> {
    let arch = ArchSpec::planted();
    let layers = arch.layers();
    let layout = arch.layout();
    let res = arch.resolution();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut kernels = Vec::with_capacity(layers.len());
    for l in &layers {
        let (ci, co) = (l.in_channels, l.out_channels);
        let mut k = vec![0.0f32; co * ci];
        for o in 0..co {
            let (go, so) = group_of(o, co);
            let inputs: Vec<usize> = (0..ci)
                .filter(|&c| {
                    let (g, s) = group_of(c, ci);
                    g == go && (s == 0) == (so == 0)
                })
                .collect();
            for &c in &inputs {
                k[o * ci + c] = if so == 0 {
                    1.0
                } else {
                    (rng.random_range(0.8..1.2) / inputs.len() as f64) as f32
                };
            }
        }
        kernels.push(Tensor::new(vec![co, ci, 1, 1], k)?);
    }

    let cc = arch.const_channels;
    let mut konst = vec![0.0f32; cc * 16];
    for c in 0..cc {
        let (g, sub) = group_of(c, cc);
        let v = if sub == 0 {
            1.0
        } else {
            rng.random_range(0.5..1.5) as f32
        };
        let (qy, qx) = (g / 2, g % 2);
        for y in 2 * qy..2 * qy + 2 {
            for x in 2 * qx..2 * qx + 2 {
                konst[(c * 4 + y) * 4 + x] = v;
            }
        }
    }
    let const_input = Tensor::new(vec![cc, 4, 4], konst)?;

    let (d_z, d_w) = (arch.d_z, arch.d_w);
    let q = random_orthogonal(&mut rng, d_z.max(d_w));
    let map_w1 = Tensor::from_fn(&[d_w, d_z], |i| q[i / d_z][i % d_z] as f32);
    let map_w2 = Tensor::from_fn(&[d_w, d_w], |i| if i % (d_w + 1) == 0 { 1.0 } else { 0.0 });

    let fc = arch.final_channels();
    let mut weights = GeneratorWeights {
        arch: arch.clone(),
        map_w: [map_w1, map_w2],
        map_b: [Tensor::full(&[d_w], W_SHIFT as f32), Tensor::zeros(&[d_w])],
        affine_w: layers
            .iter()
            .map(|l| Tensor::zeros(&[l.in_channels, d_w]))
            .collect(),
        affine_b: layers
            .iter()
            .map(|l| Tensor::full(&[l.in_channels], 1.0))
            .collect(),
        const_input,
        kernels,
        rgb_w: Tensor::zeros(&[arch.out_channels, fc, 1, 1]),
        rgb_b: Tensor::from_f64_slice(&[-0.5, 0.25, 0.35]),
    };

    // toRGB normalizes each final channel by its amplitude at unit gains, so
    // red is exactly 0.5 when the red chain's gain product is 1.
    let (feats, _) = synthesize_features(&weights, &StyleCode::ones(layout.clone()))?;
    let last = feats.last().expect("at least one layer");
    let amp: Vec<f64> = last
        .data()
        .chunks(res * res)
        .map(|ch| ch.iter().fold(0.0f64, |m, &v| m.max(v as f64)))
        .collect();
    let mut rgb = vec![0.0f32; arch.out_channels * fc];
    let per = fc / PLANTED_GROUPS;
    for g in 0..PLANTED_GROUPS {
        let (red, gb) = (per * g, per * g + 1);
        let cg: f64 = rng.random_range(0.25..0.4);
        rgb[red] = (1.0 / amp[red]) as f32;
        rgb[fc + gb] = (cg / amp[gb]) as f32;
        rgb[2 * fc + gb] = ((0.65 - cg) / amp[gb]) as f32;
    }
    weights.rgb_w = Tensor::new(vec![arch.out_channels, fc, 1, 1], rgb)?;

    let unit = |idx: &[(usize, f64)]| {
        let mut v = vec![0.0; d_w];
        for &(i, x) in idx {
            v[i] += x;
        }
        v
    };
    let mut set_row = |layer: usize, channel: usize, row: Vec<f64>| {
        let a = weights.affine_w[layer].data_mut();
        for (j, &x) in row.iter().enumerate() {
            a[channel * d_w + j] = x as f32;
        }
        let shift: f64 = row.iter().sum::<f64>() * W_SHIFT;
        weights.affine_b[layer].data_mut()[channel] = (1.0 - shift) as f32;
    };
    for (g, &gl) in GB_LAYERS.iter().enumerate() {
        let norm = (1.0 + ATTR_CROSS * ATTR_CROSS).sqrt();
        let row = unit(&[(g, 1.0 / norm), ((g + 1) % 4, ATTR_CROSS / norm)]);
        let attr_ch = layers[ATTR_LAYER].in_channels / PLANTED_GROUPS * g;
        set_row(
            ATTR_LAYER,
            attr_ch,
            row.iter().map(|x| x * ATTR_SCALE).collect(),
        );

        let gb_ch = layers[gl].in_channels / PLANTED_GROUPS * g + 1;
        let row = unit(&[((g + 3) % 4, 0.6), (4 + g, 0.8)]);
        set_row(gl, gb_ch, row.iter().map(|x| x * GB_SCALE).collect());
    }
    weights.validate()?;

    let mut partitions = Vec::with_capacity(PLANTED_GROUPS);
    let mut attributes = Vec::with_capacity(PLANTED_GROUPS);
    for (g, name) in QUADRANT_NAMES.iter().enumerate() {
        let members = layers
            .iter()
            .flat_map(|l| {
                (0..l.in_channels)
                    .filter(move |&c| group_of(c, l.in_channels).0 == g)
                    .map(move |c| (l.index, c))
            })
            .collect();
        let region = quadrant(g, res);
        partitions.push(ChannelPartition {
            concept: g,
            name: name.to_string(),
            members,
            region: region.clone(),
        });
        attributes.push(AttributeSpec {
            id: g,
            name: format!("{name}-red"),
            rule: LabelRule::Region {
                concept: g,
                channel: 0,
                threshold: 0.5,
                region,
            },
        });
    }
    for p in &partitions {
        p.validate(&arch)?;
    }
    Ok(PlantedGenerator {
        weights,
        partitions,
        attributes,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{generate, synthesize};
    use super::*;

    #[test]
    fn quadrants_tile_the_image() {
        let p = build_planted_generator(7).unwrap();
        let mut union = Mask::zeros(32, 32);
        for (i, a) in p.partitions.iter().enumerate() {
            assert_eq!(a.region.count(), 256);
            for b in &p.partitions[i + 1..] {
                assert_eq!(a.region.intersection_count(&b.region).unwrap(), 0);
            }
            union = union.union(&a.region).unwrap();
        }
        assert_eq!(union.count(), 1024);
    }

    #[test]
    fn partition_sizes() {
        let p = build_planted_generator(7).unwrap();
        for part in &p.partitions {
            assert_eq!(part.members.len(), 30);
        }
        let layout = p.weights.arch.layout();
        let mut seen = vec![0; layout.total()];
        for part in &p.partitions {
            for c in part.coords(&layout) {
                seen[c] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    fn unit_gains_give_half_red() {
        let p = build_planted_generator(7).unwrap();
        let img = synthesize(&p.weights, &StyleCode::ones(p.weights.arch.layout())).unwrap();
        for a in &p.attributes {
            let r = a.statistic(&img).unwrap().unwrap();
            assert!((r - 0.5).abs() < 1e-6, "{r}");
        }
    }

    #[test]
    fn mapping_is_near_linear() {
        let p = build_planted_generator(7).unwrap();
        let g = generate(&p.weights, &[0.0; 32]).unwrap();
        assert!(g.w.iter().all(|&v| (v - 3.0).abs() < 1e-5));
        assert!(g.s.values().iter().all(|&v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn orthogonal_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthogonal(&mut rng, 8);
        for i in 0..8 {
            for j in 0..8 {
                let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
