//! Image-consistency metrics: MSE, masked MSE and single-scale SSIM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Scalar;
use crate::stylegen::{Image, Mask};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 1.0;

/// Which side of a mask a masked metric covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Inside,
    Outside,
}

/// One row of the consistency table. Face-identity similarity has no
/// meaningful analog on toy images and is not reported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mse: f64,
    /// MSE outside the edit mask.
    pub masked_mse: f64,
    pub ssim: f64,
}

fn chw<T: Scalar>(img: &Image<T>) -> Result<(usize, usize, usize)> {
    match *img.dims() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Rank {
            op: "metrics",
            expected: 3,
            found: img.rank(),
        }),
    }
}

fn same_dims<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<(usize, usize, usize)> {
    let da = chw(a)?;
    let db = chw(b)?;
    for (axis, x, y) in [
        ("channels", da.0, db.0),
        ("height", da.1, db.1),
        ("width", da.2, db.2),
    ] {
        if x != y {
            return Err(Error::Shape {
                op: "metrics",
                axis,
                expected: x,
                found: y,
            });
        }
    }
    Ok(da)
}

/// Mean squared difference over all pixels and channels.
pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Mean squared difference over the pixels (all channels) selected by
/// `region` of `mask`.
pub fn masked_mse<T: Scalar>(
    a: &Image<T>,
    b: &Image<T>,
    mask: &Mask,
    region: Region,
) -> Result<f64> {
    let (c, h, w) = same_dims(a, b)?;
    if mask.dims() != (h, w) {
        return Err(Error::Shape {
            op: "masked_mse",
            axis: "mask",
            expected: h * w,
            found: mask.height() * mask.width(),
        });
    }
    let want = region == Region::Inside;
    let count = mask.bits().iter().filter(|&&m| m == want).count();
    if count == 0 {
        return Err(Error::InvalidArgument(format!(
            "masked_mse: {region:?} region is empty"
        )));
    }
    let mut sum = 0.0;
    for ch in 0..c {
        let base = ch * h * w;
        for (i, &m) in mask.bits().iter().enumerate() {
            if m == want {
                let d = a.data()[base + i].as_f64() - b.data()[base + i].as_f64();
                sum += d * d;
            }
        }
    }
    Ok(sum / (count * c) as f64)
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Single-scale SSIM with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 and dynamic range 1, averaged over valid windows and channels.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    let (c, h, w) = same_dims(a, b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim: image {h}×{w} smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"
        )));
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_RANGE).powi(2);
    let c2 = (SSIM_K2 * SSIM_RANGE).powi(2);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut total = 0.0;
    for ch in 0..c {
        let pa = &a.data()[ch * h * w..(ch + 1) * h * w];
        let pb = &b.data()[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (dy, gy) in g.iter().enumerate() {
                    for (dx, gx) in g.iter().enumerate() {
                        let wgt = gy * gx;
                        let i = (y + dy) * w + x + dx;
                        let (va, vb) = (pa[i].as_f64(), pb[i].as_f64());
                        ma += wgt * va;
                        mb += wgt * vb;
                        saa += wgt * va * va;
                        sbb += wgt * vb * vb;
                        sab += wgt * (va * vb);
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
                let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                total += num / den;
            }
        }
    }
    Ok(total / (c * oh * ow) as f64)
}

/// MSE, outside-mask MSE and SSIM of `b` against reference `a`.
pub fn metrics_row<T: Scalar>(a: &Image<T>, b: &Image<T>, mask: &Mask) -> Result<MetricsRow> {
    Ok(MetricsRow {
        mse: mse(a, b)?,
        masked_mse: masked_mse(a, b, mask, Region::Outside)?,
        ssim: ssim(a, b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::Tensor;

    fn full(v: f64) -> Image<f64> {
        Tensor::full(&[3, 32, 32], v)
    }

    fn pattern(seed: usize) -> Image<f64> {
        Tensor::from_fn(&[3, 32, 32], |i| {
            (((i * 2654435761 + seed * 97) % 1000) as f64) / 1000.0
        })
    }

    #[test]
    fn mse_closed_forms() {
        assert_eq!(mse(&full(0.3), &full(0.3)).unwrap(), 0.0);
        assert_eq!(mse(&full(0.0), &full(1.0)).unwrap(), 1.0);
        assert_eq!(mse(&full(0.0), &full(0.5)).unwrap(), 0.25);
    }

    #[test]
    fn masked_mse_regions() {
        let m = Mask::from_fn(32, 32, |y, x| y < 16 && x < 16);
        let a = full(0.2);
        let b = Tensor::from_fn(&[3, 32, 32], |i| {
            let p = i % 1024;
            if m.get(p / 32, p % 32) {
                0.7
            } else {
                0.2
            }
        });
        assert_eq!(masked_mse(&a, &b, &m, Region::Outside).unwrap(), 0.0);
        assert!((masked_mse(&a, &b, &m, Region::Inside).unwrap() - 0.25).abs() < 1e-15);
        let c = full(0.3);
        assert!((masked_mse(&a, &c, &m, Region::Inside).unwrap() - 0.01).abs() < 1e-12);
        assert!(masked_mse(&a, &c, &Mask::ones(32, 32), Region::Outside).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = pattern(1);
        let b = pattern(2);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ssim(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn ssim_constant_images() {
        let c1 = 1e-4;
        let v = ssim(&full(0.0), &full(1.0)).unwrap();
        assert!((v - c1 / (1.0 + c1)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Tensor::<f64>::zeros(&[3, 10, 32]);
        assert!(ssim(&a, &a).is_err());
    }
}
