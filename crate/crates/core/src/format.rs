//! `SIV1` tensor container: the single binary format used for weights,
//! directions, intervention coefficients, datasets and style vectors.
//!
//! Layout (all integers `u32` little-endian):
//!
//! ```text
//! "SIV1" version count { name_len name[name_len] rank dims[rank] f32[prod(dims)] }*
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numgrad::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"SIV1";
pub const VERSION: u32 = 1;

const MAX_RANK: u32 = 8;

/// Ordered collection of named `f32` tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    entries: Vec<(String, Tensor<f32>)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!(
                "duplicate tensor name `{name}`"
            )));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    /// Convenience for rank-1 data given in `f64`.
    pub fn push_vec(&mut self, name: impl Into<String>, values: &[f64]) -> Result<()> {
        self.push(name, Tensor::from_f64_slice(values))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Missing(format!("tensor `{name}`")))
    }

    pub fn get_vec(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.to_f64_vec())
    }

    /// Single scalar stored as a length-1 tensor.
    pub fn get_scalar(&self, name: &str) -> Result<f64> {
        let t = self.get(name)?;
        if t.len() != 1 {
            return Err(Error::Format(format!(
                "`{name}` should hold one value, holds {}",
                t.len()
            )));
        }
        Ok(t.data()[0] as f64)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        put_u32(&mut out, VERSION)?;
        put_u32(&mut out, to_u32(self.entries.len(), "tensor count")?)?;
        for (name, t) in &self.entries {
            put_u32(&mut out, to_u32(name.len(), "name length")?)?;
            out.write_all(name.as_bytes())?;
            put_u32(&mut out, to_u32(t.rank(), "rank")?)?;
            for &d in t.dims() {
                put_u32(&mut out, to_u32(d, "dim")?)?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail for in-range sizes");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let file = Self::read_from(&mut cur)?;
        if !cur.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cur.len())));
        }
        Ok(file)
    }

    pub fn read_from<R: Read>(mut inp: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(&mut inp, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic (not a SIV1 file)".into()));
        }
        let version = get_u32(&mut inp)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = get_u32(&mut inp)?;
        let mut file = Self::new();
        for _ in 0..count {
            let name_len = get_u32(&mut inp)? as usize;
            let mut name = vec![0u8; name_len];
            read_exact(&mut inp, &mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            let rank = get_u32(&mut inp)?;
            if rank > MAX_RANK {
                return Err(Error::Format(format!("`{name}`: rank {rank} too large")));
            }
            let mut dims = Vec::with_capacity(rank as usize);
            let mut n: usize = 1;
            for _ in 0..rank {
                let d = get_u32(&mut inp)? as usize;
                n = n
                    .checked_mul(d)
                    .ok_or_else(|| Error::Format(format!("`{name}`: size overflow")))?;
                dims.push(d);
            }
            let mut raw = vec![
                0u8;
                n.checked_mul(4).ok_or_else(|| {
                    Error::Format(format!("`{name}`: size overflow"))
                })?
            ];
            read_exact(&mut inp, &mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            file.push(name, Tensor::new(dims, data)?)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::Missing(path.display().to_string())
            } else {
                Error::Io(e)
            }
        })?;
        Self::from_bytes(&bytes)
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
}

fn put_u32<W: Write>(out: &mut W, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(inp: &mut R, buf: &mut [u8]) -> Result<()> {
    inp.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format("unexpected end of file".into())
        } else {
            Error::Io(e)
        }
    })
}

fn get_u32<R: Read>(inp: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(inp, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Binary PPM (P6, maxval 255) of a `[3,H,W]` image; values are clamped to
/// `[0,1]` and rounded to the nearest level.
pub fn ppm_bytes<T: Scalar>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let &[3, h, w] = image.dims() else {
        return Err(Error::InvalidArgument(format!(
            "ppm: expected a [3,H,W] image, found {:?}",
            image.dims()
        )));
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for p in 0..h * w {
        for c in 0..3 {
            let v = d[c * h * w + p].as_f64();
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn write_ppm<T: Scalar>(path: impl AsRef<Path>, image: &Tensor<T>) -> Result<()> {
    fs::write(path, ppm_bytes(image)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TensorFile {
        let mut f = TensorFile::new();
        f.push("a", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.25 - 1.0))
            .unwrap();
        f.push("empty", Tensor::zeros(&[0, 4])).unwrap();
        f.push_vec("scalar", &[f64::from(std::f32::consts::PI)])
            .unwrap();
        f
    }

    #[test]
    fn round_trip_is_exact() {
        let f = sample();
        let bytes = f.to_bytes();
        let g = TensorFile::from_bytes(&bytes).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.to_bytes(), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"SIV1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        // first name length + name
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1);
        assert_eq!(bytes[16], b'a');
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            TensorFile::from_bytes(&bad),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            TensorFile::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            TensorFile::from_bytes(&long),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn missing_and_duplicate_names() {
        let mut f = sample();
        assert!(matches!(f.get("nope"), Err(Error::Missing(_))));
        assert!(f.push("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn ppm_header_and_rounding() {
        let img = Tensor::<f64>::from_fn(&[3, 1, 2], |i| [0.0, 1.0, 0.5, 2.0, -1.0, 0.1][i]);
        let b = ppm_bytes(&img).unwrap();
        assert_eq!(&b[..11], b"P6\n2 1\n255\n");
        // pixel-major RGB triples
        assert_eq!(&b[11..], &[0, 128, 0, 255, 255, 26]);
        assert!(ppm_bytes(&Tensor::<f64>::zeros(&[1, 2, 2])).is_err());
    }
}
