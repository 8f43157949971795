use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{ArchSpec, StyleLayout};
use crate::error::{Error, Result};

/// Binary `[H, W]` mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Shape {
                op: "mask",
                axis: "data",
                expected: height * width,
                found: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height * width)
            .map(|i| f(i / width, i % width))
            .collect();
        Self {
            height,
            width,
            bits,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| false)
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::from_fn(height, width, |_, _| true)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn union(&self, other: &Mask) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
        })
    }

    pub fn intersection_count(&self, other: &Mask) -> Result<usize> {
        self.check_same(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count())
    }

    /// Mask values as 0.0/1.0 in row-major order.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.bits
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect()
    }

    pub(crate) fn check_same(&self, other: &Mask) -> Result<()> {
        if self.height != other.height {
            return Err(Error::Shape {
                op: "mask",
                axis: "height",
                expected: self.height,
                found: other.height,
            });
        }
        if self.width != other.width {
            return Err(Error::Shape {
                op: "mask",
                axis: "width",
                expected: self.width,
                found: other.width,
            });
        }
        Ok(())
    }

    fn rows(&self) -> Vec<String> {
        self.bits
            .chunks(self.width.max(1))
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect()
    }

    fn from_rows(rows: &[String]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(height * width);
        for r in rows {
            if r.len() != width {
                return Err(Error::Format("mask rows have unequal length".into()));
            }
            for ch in r.chars() {
                bits.push(match ch {
                    '0' => false,
                    '1' => true,
                    _ => return Err(Error::Format(format!("mask row has `{ch}`"))),
                });
            }
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }
}

/// Serialized as a list of `"0101…"` row strings.
impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        Mask::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Style channels `U_c` that generate concept `c`, plus the image region it
/// occupies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPartition {
    pub concept: usize,
    pub name: String,
    /// `(layer, channel)` pairs.
    pub members: Vec<(usize, usize)>,
    pub region: Mask,
}

impl ChannelPartition {
    pub fn validate(&self, arch: &ArchSpec) -> Result<()> {
        let layout = arch.layout();
        let mut seen = std::collections::HashSet::new();
        for &(l, c) in &self.members {
            if layout.index(l, c).is_none() {
                return Err(Error::InvalidArgument(format!(
                    "partition `{}`: ({l}, {c}) outside the style layout",
                    self.name
                )));
            }
            if !seen.insert((l, c)) {
                return Err(Error::InvalidArgument(format!(
                    "partition `{}`: duplicate member ({l}, {c})",
                    self.name
                )));
            }
        }
        let res = arch.resolution();
        if self.region.dims() != (res, res) {
            return Err(Error::InvalidArgument(format!(
                "partition `{}`: region is {:?}, image is {res}×{res}",
                self.name,
                self.region.dims()
            )));
        }
        Ok(())
    }

    /// Flat style coordinates of `U_c`, ascending.
    pub fn coords(&self, layout: &StyleLayout) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .members
            .iter()
            .filter_map(|&(l, c)| layout.index(l, c))
            .collect();
        v.sort_unstable();
        v
    }

    /// Membership indicator over all style coordinates.
    pub fn indicator(&self, layout: &StyleLayout) -> Vec<bool> {
        let mut v = vec![false; layout.total()];
        for i in self.coords(layout) {
            v[i] = true;
        }
        v
    }

    pub fn contains(&self, layer: usize, channel: usize) -> bool {
        self.members.contains(&(layer, channel))
    }
}

/// Binary mask `m_c`: 1 inside the concept's region, 0 elsewhere.
pub fn segmentation_mask(partition: &ChannelPartition) -> Mask {
    partition.region.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_rows_round_trip() {
        let m = Mask::from_fn(3, 5, |y, x| (x + y) % 2 == 0);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with("[\"10101\""));
        let back: Mask = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<Mask>("[\"10\",\"1\"]").is_err());
    }

    #[test]
    fn quadrant_counts() {
        let q = Mask::from_fn(32, 32, |y, x| y < 16 && x < 16);
        assert_eq!(q.count(), 256);
        assert_eq!(q.complement().count(), 1024 - 256);
    }
}
