//! Toy style-based generator: mapping network, per-layer affine style heads
//! and a channel-gain modulated synthesis network.

mod mask;
mod planted;
mod synth;
mod weights;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::UpsampleMode;

pub use mask::{segmentation_mask, ChannelPartition, Mask};
pub use planted::{build_planted_generator, PlantedGenerator, PLANTED_GROUPS};
pub use synth::{
    generate, map_latent, style_from_w, synthesize, synthesize_features, synthesize_layer_inputs,
    synthesize_unmodulated, trace_synthesis, Generated, SynthesisTrace,
};
pub use weights::{build_random_generator, GeneratorWeights};

/// Generated images are `[3, H, W]` tensors with values in `[0, 1]`.
pub type Image<T = f32> = crate::numgrad::Tensor<T>;

pub const LRELU_SLOPE: f64 = 0.2;

/// One resolution level: all its conv layers run at `resolution`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub resolution: usize,
    /// Output channels of each conv layer in the level.
    pub channels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub d_z: usize,
    pub d_w: usize,
    /// Channels of the learned 4×4 constant input.
    pub const_channels: usize,
    pub levels: Vec<Level>,
    /// Square conv kernel size, 1 or 3.
    pub kernel: usize,
    pub out_channels: usize,
    pub upsample: UpsampleMode,
    pub instance_norm: bool,
}

/// Derived per-layer geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub index: usize,
    pub level: usize,
    pub resolution: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Feature maps are upsampled ×2 right before this layer.
    pub upsample_before: bool,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            d_z: 32,
            d_w: 32,
            const_channels: 32,
            levels: vec![
                Level {
                    resolution: 4,
                    channels: vec![32],
                },
                Level {
                    resolution: 8,
                    channels: vec![16, 16],
                },
                Level {
                    resolution: 16,
                    channels: vec![8, 8],
                },
                Level {
                    resolution: 32,
                    channels: vec![8, 8],
                },
            ],
            kernel: 3,
            out_channels: 3,
            upsample: UpsampleMode::Bilinear,
            instance_norm: true,
        }
    }
}

impl ArchSpec {
    /// Default geometry with 1×1 kernels, nearest upsampling and no
    /// normalization, as used by the planted generator.
    pub fn planted() -> Self {
        Self {
            kernel: 1,
            upsample: UpsampleMode::Nearest,
            instance_norm: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("arch: {m}")));
        if self.d_z == 0 || self.d_w == 0 || self.const_channels == 0 || self.out_channels == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.kernel != 1 && self.kernel != 3 {
            return bad(format!("kernel must be 1 or 3, found {}", self.kernel));
        }
        if self.levels.is_empty() {
            return bad("at least one level required".into());
        }
        let mut res = 4;
        for (i, lvl) in self.levels.iter().enumerate() {
            if lvl.resolution != res {
                return bad(format!(
                    "level {i} has resolution {}, expected {res}",
                    lvl.resolution
                ));
            }
            if lvl.channels.is_empty() || lvl.channels.contains(&0) {
                return bad(format!("level {i} needs ≥1 layer with positive channels"));
            }
            res *= 2;
        }
        if res / 2 > 64 {
            return bad("resolutions above 64 are not supported".into());
        }
        Ok(())
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let mut in_ch = self.const_channels;
        for (li, lvl) in self.levels.iter().enumerate() {
            for (j, &c) in lvl.channels.iter().enumerate() {
                out.push(LayerSpec {
                    index: out.len(),
                    level: li,
                    resolution: lvl.resolution,
                    in_channels: in_ch,
                    out_channels: c,
                    upsample_before: li > 0 && j == 0,
                });
                in_ch = c;
            }
        }
        out
    }

    pub fn n_layers(&self) -> usize {
        self.levels.iter().map(|l| l.channels.len()).sum()
    }

    pub fn resolution(&self) -> usize {
        self.levels.last().map_or(0, |l| l.resolution)
    }

    pub fn final_channels(&self) -> usize {
        self.levels
            .last()
            .and_then(|l| l.channels.last().copied())
            .unwrap_or(self.const_channels)
    }

    pub fn layout(&self) -> StyleLayout {
        StyleLayout::from_arch(self)
    }

    /// Flat numeric encoding stored alongside weights.
    pub fn encode(&self) -> Vec<f64> {
        let mut v = vec![
            1.0,
            self.d_z as f64,
            self.d_w as f64,
            self.const_channels as f64,
            self.kernel as f64,
            self.out_channels as f64,
            match self.upsample {
                UpsampleMode::Nearest => 0.0,
                UpsampleMode::Bilinear => 1.0,
            },
            if self.instance_norm { 1.0 } else { 0.0 },
            self.levels.len() as f64,
        ];
        for lvl in &self.levels {
            v.push(lvl.resolution as f64);
            v.push(lvl.channels.len() as f64);
            v.extend(lvl.channels.iter().map(|&c| c as f64));
        }
        v
    }

    pub fn decode(v: &[f64]) -> Result<Self> {
        let bad = || Error::Format("malformed arch descriptor".into());
        let mut it = v.iter().map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e6 {
                Ok(x as usize)
            } else {
                Err(bad())
            }
        });
        let mut next = || it.next().unwrap_or_else(|| Err(bad()));
        if next()? != 1 {
            return Err(Error::Format("unsupported arch descriptor version".into()));
        }
        let d_z = next()?;
        let d_w = next()?;
        let const_channels = next()?;
        let kernel = next()?;
        let out_channels = next()?;
        let upsample = match next()? {
            0 => UpsampleMode::Nearest,
            1 => UpsampleMode::Bilinear,
            _ => return Err(bad()),
        };
        let instance_norm = match next()? {
            0 => false,
            1 => true,
            _ => return Err(bad()),
        };
        let n_levels = next()?;
        let mut levels = Vec::with_capacity(n_levels.min(16));
        for _ in 0..n_levels {
            let resolution = next()?;
            let n = next()?;
            let channels = (0..n).map(|_| next()).collect::<Result<Vec<_>>>()?;
            levels.push(Level {
                resolution,
                channels,
            });
        }
        if next().is_ok() {
            return Err(bad());
        }
        let arch = Self {
            d_z,
            d_w,
            const_channels,
            levels,
            kernel,
            out_channels,
            upsample,
            instance_norm,
        };
        arch.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(arch)
    }
}

/// Where styled layer `layer` reads its gains inside the style vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSlot {
    pub layer: usize,
    pub offset: usize,
    pub len: usize,
}

/// Contiguous coarse→fine layout of the style vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleLayout {
    slots: Vec<LayoutSlot>,
}

impl StyleLayout {
    pub fn from_arch(arch: &ArchSpec) -> Self {
        Self::from_lengths(
            &arch
                .layers()
                .iter()
                .map(|l| l.in_channels)
                .collect::<Vec<_>>(),
        )
    }

    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut offset = 0;
        let slots = lengths
            .iter()
            .enumerate()
            .map(|(layer, &len)| {
                let s = LayoutSlot { layer, offset, len };
                offset += len;
                s
            })
            .collect();
        Self { slots }
    }

    pub fn slots(&self) -> &[LayoutSlot] {
        &self.slots
    }

    pub fn n_layers(&self) -> usize {
        self.slots.len()
    }

    pub fn total(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn offsets(&self) -> Vec<usize> {
        self.slots.iter().map(|s| s.offset).collect()
    }

    pub fn range(&self, layer: usize) -> std::ops::Range<usize> {
        let s = &self.slots[layer];
        s.offset..s.offset + s.len
    }

    /// Flat index of `(layer, channel)`.
    pub fn index(&self, layer: usize, channel: usize) -> Option<usize> {
        let s = self.slots.get(layer)?;
        (channel < s.len).then_some(s.offset + channel)
    }

    /// Inverse of [`index`](Self::index).
    pub fn locate(&self, coord: usize) -> Option<(usize, usize)> {
        self.slots
            .iter()
            .find(|s| coord >= s.offset && coord < s.offset + s.len)
            .map(|s| (s.layer, coord - s.offset))
    }

    pub fn check_len(&self, what: &str, len: usize) -> Result<()> {
        if len == self.total() {
            Ok(())
        } else {
            Err(Error::Layout(format!(
                "{what} has {len} coordinates, layout expects {}",
                self.total()
            )))
        }
    }
}

/// Concatenated per-layer channel gains.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode {
    values: Vec<f64>,
    layout: StyleLayout,
}

impl StyleCode {
    pub fn new(values: Vec<f64>, layout: StyleLayout) -> Result<Self> {
        layout.check_len("style code", values.len())?;
        Ok(Self { values, layout })
    }

    pub fn ones(layout: StyleLayout) -> Self {
        Self {
            values: vec![1.0; layout.total()],
            layout,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &StyleLayout {
        &self.layout
    }

    /// Gains consumed by styled layer `layer`.
    pub fn slice(&self, layer: usize) -> &[f64] {
        &self.values[self.layout.range(layer)]
    }

    /// `self + delta`, same layout.
    pub fn offset_by(&self, delta: &[f64]) -> Result<Self> {
        self.layout.check_len("displacement", delta.len())?;
        Ok(Self {
            values: self.values.iter().zip(delta).map(|(a, b)| a + b).collect(),
            layout: self.layout.clone(),
        })
    }
}
