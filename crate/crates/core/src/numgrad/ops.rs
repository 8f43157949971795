//! Forward functions and backward rules for the synthesis primitives.
//!
//! Each `*_backward` takes the upstream gradient of the op's output and
//! returns gradients for every differentiable input, in argument order.

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn check(op: &'static str, axis: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            axis,
            expected,
            found,
        })
    }
}

fn check_rank<T: Scalar>(op: &'static str, t: &Tensor<T>, rank: usize) -> Result<()> {
    if t.rank() == rank {
        Ok(())
    } else {
        Err(Error::Rank {
            op,
            expected: rank,
            found: t.rank(),
        })
    }
}

fn same_dims<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    check_rank(op, b, a.rank())?;
    for (&x, &y) in a.dims().iter().zip(b.dims()) {
        check(op, "grad", x, y)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// conv2d

fn conv_dims<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (c_in, h, w) = input.chw("conv2d")?;
    check_rank("conv2d", kernel, 4)?;
    let kd = kernel.dims();
    let (c_out, k) = (kd[0], kd[2]);
    check("conv2d", "in_channels", c_in, kd[1])?;
    check("conv2d", "kernel_width", k, kd[3])?;
    if k != 1 && k != 3 {
        return Err(Error::InvalidArgument(format!(
            "conv2d: kernel size must be 1 or 3, found {k}"
        )));
    }
    Ok((c_in, c_out, h, w, k))
}

/// Valid `(dst, src)` ranges along one axis for kernel tap `d` with padding
/// `pad`: output index `i` reads input `i + d − pad`.
fn tap_range(n: usize, d: usize, pad: usize) -> (usize, usize, usize) {
    let lo = pad.saturating_sub(d);
    let hi = (n + pad).saturating_sub(d).min(n);
    (lo, hi, lo + d - pad)
}

fn widen<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.as_f64()).collect()
}

/// Same-padded cross-correlation of `[C_in,H,W]` with `[C_out,C_in,k,k]`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (c_in, c_out, h, w, k) = conv_dims(input, kernel)?;
    let pad = k / 2;
    let x = widen(input);
    let kw = widen(kernel);
    let mut out = vec![0.0f64; c_out * h * w];
    for o in 0..c_out {
        let acc = &mut out[o * h * w..(o + 1) * h * w];
        for c in 0..c_in {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for dy in 0..k {
                let (y0, y1, sy0) = tap_range(h, dy, pad);
                for dx in 0..k {
                    let (x0, x1, sx0) = tap_range(w, dx, pad);
                    let wv = kw[((o * c_in + c) * k + dy) * k + dx];
                    for y in y0..y1 {
                        let src = &plane[(sy0 + y - y0) * w + sx0..][..x1 - x0];
                        let dst = &mut acc[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(
        vec![c_out, h, w],
        out.into_iter().map(T::from_f64).collect(),
    )
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c_in, c_out, h, w, k) = conv_dims(input, kernel)?;
    let (go_c, go_h, go_w) = grad_out.chw("conv2d")?;
    check("conv2d", "out_channels", c_out, go_c)?;
    check("conv2d", "height", h, go_h)?;
    check("conv2d", "width", w, go_w)?;
    let pad = k / 2;
    let x = widen(input);
    let kw = widen(kernel);
    let g = widen(grad_out);
    let mut gx = vec![0.0f64; c_in * h * w];
    let mut gk = vec![0.0f64; c_out * c_in * k * k];
    for o in 0..c_out {
        let go = &g[o * h * w..(o + 1) * h * w];
        for c in 0..c_in {
            let plane = &x[c * h * w..(c + 1) * h * w];
            let gplane = &mut gx[c * h * w..(c + 1) * h * w];
            for dy in 0..k {
                let (y0, y1, sy0) = tap_range(h, dy, pad);
                for dx in 0..k {
                    let (x0, x1, sx0) = tap_range(w, dx, pad);
                    let ki = ((o * c_in + c) * k + dy) * k + dx;
                    let wv = kw[ki];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let off = (sy0 + y - y0) * w + sx0;
                        let gs = &go[y * w + x0..y * w + x1];
                        for (j, gv) in gs.iter().enumerate() {
                            acc += plane[off + j] * gv;
                            gplane[off + j] += wv * gv;
                        }
                    }
                    gk[ki] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(
            input.dims().to_vec(),
            gx.into_iter().map(T::from_f64).collect(),
        )?,
        Tensor::new(
            kernel.dims().to_vec(),
            gk.into_iter().map(T::from_f64).collect(),
        )?,
    ))
}

// ---------------------------------------------------------------------------
// upsample

/// Interpolation used when doubling spatial resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpsampleMode {
    Nearest,
    Bilinear,
}

impl std::str::FromStr for UpsampleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "bilinear" => Ok(Self::Bilinear),
            other => Err(Error::InvalidArgument(format!(
                "unknown upsample mode `{other}` (expected nearest|bilinear)"
            ))),
        }
    }
}

/// Source taps for one output coordinate along an axis of length `n`
/// upsampled by 2, half-pixel (align-corners-false) convention.
fn taps(mode: UpsampleMode, i: usize, n: usize) -> [(usize, f64); 2] {
    match mode {
        UpsampleMode::Nearest => [(i / 2, 1.0), (i / 2, 0.0)],
        UpsampleMode::Bilinear => {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = src.floor() as usize;
            let frac = src - i0 as f64;
            let i0 = i0.min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            [(i0, 1.0 - frac), (i1, frac)]
        }
    }
}

/// Doubles H and W of a `[C,H,W]` tensor.
pub fn upsample<T: Scalar>(input: &Tensor<T>, mode: UpsampleMode) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw("upsample")?;
    if h == 0 || w == 0 {
        return Err(Error::InvalidArgument(
            "upsample: empty spatial dims".into(),
        ));
    }
    let (oh, ow) = (2 * h, 2 * w);
    let ty: Vec<_> = (0..oh).map(|i| taps(mode, i, h)).collect();
    let tx: Vec<_> = (0..ow).map(|j| taps(mode, j, w)).collect();
    let x = input.data();
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let at = |y: usize, xx: usize| x[(ch * h + y) * w + xx].as_f64();
        for &[(y0, _), (y1, fy)] in &ty {
            for &[(x0, _), (x1, fx)] in &tx {
                // lerp form keeps constant inputs exactly constant
                let top = lerp(at(y0, x0), at(y0, x1), fx);
                let bot = lerp(at(y1, x0), at(y1, x1), fx);
                out.push(T::from_f64(lerp(top, bot, fy)));
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// Gradient of [`upsample`] w.r.t. its input, given `in_dims = [C,H,W]`.
pub fn upsample_backward<T: Scalar>(
    in_dims: &[usize],
    grad_out: &Tensor<T>,
    mode: UpsampleMode,
) -> Result<Tensor<T>> {
    let (c, h, w) = match in_dims {
        &[c, h, w] => (c, h, w),
        _ => {
            return Err(Error::Rank {
                op: "upsample",
                expected: 3,
                found: in_dims.len(),
            })
        }
    };
    let (gc, gh, gw) = grad_out.chw("upsample")?;
    check("upsample", "channels", c, gc)?;
    check("upsample", "height", 2 * h, gh)?;
    check("upsample", "width", 2 * w, gw)?;
    let ty: Vec<_> = (0..gh).map(|i| taps(mode, i, h)).collect();
    let tx: Vec<_> = (0..gw).map(|j| taps(mode, j, w)).collect();
    let g = grad_out.data();
    let mut gx = vec![0.0f64; c * h * w];
    for ch in 0..c {
        for (i, ty_i) in ty.iter().enumerate() {
            for (j, tx_j) in tx.iter().enumerate() {
                let gv = g[(ch * gh + i) * gw + j].as_f64();
                for &(yi, wy) in ty_i {
                    for &(xj, wx) in tx_j {
                        gx[(ch * h + yi) * w + xj] += wy * wx * gv;
                    }
                }
            }
        }
    }
    Tensor::new(in_dims.to_vec(), gx.into_iter().map(T::from_f64).collect())
}

// ---------------------------------------------------------------------------
// instance_norm

pub const DEFAULT_NORM_EPS: f64 = 1e-8;

fn channel_stats<T: Scalar>(xs: &[T], eps: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var = xs
        .iter()
        .map(|v| {
            let d = v.as_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, (var + eps).sqrt())
}

/// Per-channel `(x - mean) / sqrt(var + eps)` over the spatial dims.
pub fn instance_norm<T: Scalar>(input: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw("instance_norm")?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(
            "instance_norm: eps must be > 0".into(),
        ));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(c * hw);
    for xs in input.data().chunks(hw) {
        let (mean, std) = channel_stats(xs, eps);
        out.extend(xs.iter().map(|v| T::from_f64((v.as_f64() - mean) / std)));
    }
    Tensor::new(input.dims().to_vec(), out)
}

pub fn instance_norm_backward<T: Scalar>(
    input: &Tensor<T>,
    eps: f64,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (_, h, w) = input.chw("instance_norm")?;
    same_dims("instance_norm", input, grad_out)?;
    let hw = h * w;
    let n = hw as f64;
    let mut gx = Vec::with_capacity(input.len());
    for (xs, gs) in input.data().chunks(hw).zip(grad_out.data().chunks(hw)) {
        let (mean, std) = channel_stats(xs, eps);
        let y: Vec<f64> = xs.iter().map(|v| (v.as_f64() - mean) / std).collect();
        let g_mean = gs.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let gy_mean = gs
            .iter()
            .zip(&y)
            .map(|(g, yv)| g.as_f64() * yv)
            .sum::<f64>()
            / n;
        gx.extend(
            gs.iter()
                .zip(&y)
                .map(|(g, yv)| T::from_f64((g.as_f64() - g_mean - yv * gy_mean) / std)),
        );
    }
    Tensor::new(input.dims().to_vec(), gx)
}

// ---------------------------------------------------------------------------
// scale_channels

/// Multiplies channel `c` of a `[C,H,W]` tensor by `gains[c]`.
pub fn scale_channels<T: Scalar>(input: &Tensor<T>, gains: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw("scale_channels")?;
    check_rank("scale_channels", gains, 1)?;
    check("scale_channels", "channels", c, gains.len())?;
    let hw = h * w;
    let mut out = Vec::with_capacity(input.len());
    for (xs, &g) in input.data().chunks(hw).zip(gains.data()) {
        out.extend(xs.iter().map(|&v| v * g));
    }
    Tensor::new(input.dims().to_vec(), out)
}

pub fn scale_channels_backward<T: Scalar>(
    input: &Tensor<T>,
    gains: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = input.chw("scale_channels")?;
    check("scale_channels", "channels", c, gains.len())?;
    same_dims("scale_channels", input, grad_out)?;
    let hw = h * w;
    let mut gx = Vec::with_capacity(input.len());
    let mut gg = Vec::with_capacity(c);
    for ((xs, gs), &g) in input
        .data()
        .chunks(hw)
        .zip(grad_out.data().chunks(hw))
        .zip(gains.data())
    {
        gx.extend(gs.iter().map(|&v| v * g));
        gg.push(T::from_f64(
            xs.iter()
                .zip(gs)
                .map(|(x, g)| x.as_f64() * g.as_f64())
                .sum(),
        ));
    }
    Ok((
        Tensor::new(input.dims().to_vec(), gx)?,
        Tensor::new(vec![c], gg)?,
    ))
}

// ---------------------------------------------------------------------------
// leaky_relu

pub const DEFAULT_SLOPE: f64 = 0.2;

pub fn leaky_relu<T: Scalar>(input: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
    if !(slope > 0.0 && slope < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "leaky_relu: slope must lie in (0,1), found {slope}"
        )));
    }
    let s = T::from_f64(slope);
    Ok(input.map(|v| if v >= T::zero() { v } else { s * v }))
}

/// Subgradient at exactly zero is `slope`.
pub fn leaky_relu_backward<T: Scalar>(
    input: &Tensor<T>,
    slope: f64,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    same_dims("leaky_relu", input, grad_out)?;
    let s = T::from_f64(slope);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { s * g })
        .collect();
    Tensor::new(input.dims().to_vec(), data)
}

// ---------------------------------------------------------------------------
// matvec

fn matvec_dims<T: Scalar>(
    weight: &Tensor<T>,
    input: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize)> {
    check_rank("matvec", weight, 2)?;
    check_rank("matvec", input, 1)?;
    check_rank("matvec", bias, 1)?;
    let (m, n) = (weight.dims()[0], weight.dims()[1]);
    check("matvec", "cols", n, input.len())?;
    check("matvec", "rows", m, bias.len())?;
    Ok((m, n))
}

/// `weight · input + bias` for `weight: [M,N]`.
pub fn matvec<T: Scalar>(
    weight: &Tensor<T>,
    input: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = matvec_dims(weight, input, bias)?;
    let x = input.data();
    let out = weight
        .data()
        .chunks(n)
        .zip(bias.data())
        .map(|(row, b)| {
            let acc: f64 = row
                .iter()
                .zip(x)
                .map(|(a, v)| a.as_f64() * v.as_f64())
                .sum();
            T::from_f64(acc + b.as_f64())
        })
        .collect();
    Tensor::new(vec![m], out)
}

/// Returns `(grad_weight, grad_input, grad_bias)`.
pub fn matvec_backward<T: Scalar>(
    weight: &Tensor<T>,
    input: &Tensor<T>,
    bias: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (m, n) = matvec_dims(weight, input, bias)?;
    check("matvec", "rows", m, grad_out.len())?;
    let x = input.data();
    let g = grad_out.data();
    let mut gw = Vec::with_capacity(m * n);
    for &gi in g {
        gw.extend(x.iter().map(|&xv| gi * xv));
    }
    let mut gx = vec![0.0f64; n];
    for (row, gi) in weight.data().chunks(n).zip(g) {
        for (acc, a) in gx.iter_mut().zip(row) {
            *acc += a.as_f64() * gi.as_f64();
        }
    }
    Ok((
        Tensor::new(vec![m, n], gw)?,
        Tensor::new(vec![n], gx.into_iter().map(T::from_f64).collect())?,
        grad_out.clone().reshape(&[m])?,
    ))
}

// ---------------------------------------------------------------------------
// add_channel_bias

pub fn add_channel_bias<T: Scalar>(input: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = input.chw("add_channel_bias")?;
    check_rank("add_channel_bias", bias, 1)?;
    check("add_channel_bias", "channels", c, bias.len())?;
    let hw = h * w;
    let mut out = Vec::with_capacity(input.len());
    for (xs, &b) in input.data().chunks(hw).zip(bias.data()) {
        out.extend(xs.iter().map(|&v| v + b));
    }
    Tensor::new(input.dims().to_vec(), out)
}

pub fn add_channel_bias_backward<T: Scalar>(
    input_dims: &[usize],
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = grad_out.chw("add_channel_bias")?;
    if input_dims != grad_out.dims() {
        return Err(Error::Shape {
            op: "add_channel_bias",
            axis: "grad",
            expected: input_dims.iter().product(),
            found: grad_out.len(),
        });
    }
    let gb = grad_out
        .data()
        .chunks(h * w)
        .map(|gs| T::from_f64(gs.iter().map(|v| v.as_f64()).sum()))
        .collect();
    Ok((grad_out.clone(), Tensor::new(vec![c], gb)?))
}

// ---------------------------------------------------------------------------
// clamp

pub fn clamp<T: Scalar>(input: &Tensor<T>, lo: f64, hi: f64) -> Tensor<T> {
    let (l, h) = (T::from_f64(lo), T::from_f64(hi));
    input.map(|v| v.max(l).min(h))
}

/// Passes the gradient where `lo <= x <= hi`, zero elsewhere.
pub fn clamp_backward<T: Scalar>(
    input: &Tensor<T>,
    lo: f64,
    hi: f64,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    same_dims("clamp", input, grad_out)?;
    let (l, h) = (T::from_f64(lo), T::from_f64(hi));
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= l && x <= h { g } else { T::zero() })
        .collect();
    Tensor::new(input.dims().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(dims.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = t(&[1, 2, 3], &[1., 2., 3., 4., 5., 6.]);
        let k = t(&[1, 1, 1, 1], &[1.]);
        assert_eq!(conv2d(&x, &k).unwrap(), x);
    }

    #[test]
    fn zero_kernel_gives_zeros() {
        let x = Tensor::<f64>::from_fn(&[2, 4, 4], |i| i as f64 - 7.0);
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        let y = conv2d(&x, &k).unwrap();
        assert_eq!(y.dims(), &[3, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_names_offending_axis() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[3, 5, 3, 3]);
        match conv2d(&x, &k) {
            Err(Error::Shape {
                axis,
                expected,
                found,
                ..
            }) => {
                assert_eq!(axis, "in_channels");
                assert_eq!((expected, found), (2, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
        let k = Tensor::zeros(&[3, 2, 5, 5]);
        assert!(matches!(conv2d(&x, &k), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn conv3x3_zero_padding() {
        // all-ones 3x3 kernel sums the neighbourhood
        let x = Tensor::<f64>::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &k).unwrap();
        assert_eq!(y.data(), &[4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn nearest_block_replication() {
        let x = t(&[1, 2, 2], &[1., 2., 3., 4.]);
        let y = upsample(&x, UpsampleMode::Nearest).unwrap();
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
    }

    #[test]
    fn bilinear_keeps_constants() {
        let x = Tensor::<f64>::full(&[2, 3, 5], 0.37);
        let y = upsample(&x, UpsampleMode::Bilinear).unwrap();
        assert_eq!(y.dims(), &[2, 6, 10]);
        assert!(y.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn bilinear_half_pixel_weights() {
        let x = t(&[1, 1, 2], &[0., 4.]);
        let y = upsample(&x, UpsampleMode::Bilinear).unwrap();
        // rows are duplicated; columns: 0, 0.25*4, 0.75*4, 4
        assert_eq!(&y.data()[..4], &[0., 1., 3., 4.]);
    }

    #[test]
    fn instance_norm_constant_channel_is_zero() {
        let x = Tensor::<f64>::full(&[1, 4, 4], 3.5);
        let y = instance_norm(&x, DEFAULT_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_norm_standardizes() {
        let x = Tensor::<f64>::from_fn(&[2, 4, 4], |i| ((i * 37) % 11) as f64 * 0.3 - 1.0);
        let y = instance_norm(&x, DEFAULT_NORM_EPS).unwrap();
        for ch in y.data().chunks(16) {
            let m = ch.iter().sum::<f64>() / 16.0;
            let v = ch.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 16.0;
            assert!(m.abs() < 1e-6);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn scale_channels_identity_and_zero() {
        let x = Tensor::<f64>::from_fn(&[3, 2, 2], |i| i as f64);
        assert_eq!(scale_channels(&x, &Tensor::full(&[3], 1.0)).unwrap(), x);
        let z = scale_channels(&x, &Tensor::zeros(&[3])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            scale_channels(&x, &Tensor::zeros(&[2])),
            Err(Error::Shape {
                axis: "channels",
                ..
            })
        ));
    }

    #[test]
    fn leaky_relu_values() {
        let x = t(&[3], &[-1., 3., 0.]);
        let y = leaky_relu(&x, 0.2).unwrap();
        assert!((y.data()[0] + 0.2).abs() < 1e-15);
        assert_eq!(y.data()[1], 3.0);
        assert_eq!(y.data()[2], 0.0);
        let g = leaky_relu_backward(&x, 0.2, &t(&[3], &[1., 1., 1.])).unwrap();
        assert_eq!(g.data(), &[0.2, 1.0, 0.2]);
        assert!(leaky_relu(&x, 1.5).is_err());
    }

    #[test]
    fn matvec_identity_and_zero() {
        let x = t(&[3], &[1., -2., 5.]);
        let eye = Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(matvec(&eye, &x, &Tensor::zeros(&[3])).unwrap(), x);
        let b = t(&[2], &[0.5, -0.5]);
        assert_eq!(matvec(&Tensor::zeros(&[2, 3]), &x, &b).unwrap(), b);
        assert!(matches!(
            matvec(&Tensor::zeros(&[2, 4]), &x, &b),
            Err(Error::Shape { axis: "cols", .. })
        ));
    }

    #[test]
    fn clamp_range_and_gradient() {
        let x = t(&[4], &[-0.5, 0.2, 1.0, 1.7]);
        assert_eq!(clamp(&x, 0.0, 1.0).data(), &[0.0, 0.2, 1.0, 1.0]);
        let g = clamp_backward(&x, 0.0, 1.0, &t(&[4], &[1., 1., 1., 1.])).unwrap();
        assert_eq!(g.data(), &[0., 1., 1., 0.]);
    }
}
