use super::{GeneratorWeights, Image, StyleCode, LRELU_SLOPE};
use crate::error::{Error, Result};
use crate::numgrad::ops::{self, DEFAULT_NORM_EPS};
use crate::numgrad::{NodeId, Scalar, Tape, Tensor};

/// `w = LReLU(W2·LReLU(W1·z + b1) + b2)`.
pub fn map_latent<T: Scalar>(weights: &GeneratorWeights<T>, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != weights.arch.d_z {
        return Err(Error::Shape {
            op: "map_latent",
            axis: "z",
            expected: weights.arch.d_z,
            found: z.len(),
        });
    }
    let mut h = Tensor::<T>::from_f64_slice(z);
    for k in 0..2 {
        h = ops::matvec(&weights.map_w[k], &h, &weights.map_b[k])?;
        h = ops::leaky_relu(&h, LRELU_SLOPE)?;
    }
    Ok(h.to_f64_vec())
}

/// Concatenated affine head outputs `s_i = A_i·w + b_i`.
pub fn style_from_w<T: Scalar>(weights: &GeneratorWeights<T>, w: &[f64]) -> Result<StyleCode> {
    if w.len() != weights.arch.d_w {
        return Err(Error::Shape {
            op: "style_from_w",
            axis: "w",
            expected: weights.arch.d_w,
            found: w.len(),
        });
    }
    let wt = Tensor::<T>::from_f64_slice(w);
    let mut values = Vec::with_capacity(weights.arch.layout().total());
    for (a, b) in weights.affine_w.iter().zip(&weights.affine_b) {
        values.extend(ops::matvec(a, &wt, b)?.to_f64_vec());
    }
    StyleCode::new(values, weights.arch.layout())
}

fn check_layout<T: Scalar>(weights: &GeneratorWeights<T>, s: &StyleCode) -> Result<()> {
    if *s.layout() != weights.arch.layout() {
        return Err(Error::Layout(format!(
            "style code offsets {:?} do not match generator offsets {:?}",
            s.layout().offsets(),
            weights.arch.layout().offsets()
        )));
    }
    Ok(())
}

/// Shared forward pass; `gains = None` skips modulation entirely.
/// `outputs` collects post-activation maps, `inputs` the maps each layer's
/// gains act on (after upsampling, before normalization).
fn forward<T: Scalar>(
    weights: &GeneratorWeights<T>,
    gains: Option<&StyleCode>,
    mut outputs: Option<&mut Vec<Tensor<T>>>,
    mut inputs: Option<&mut Vec<Tensor<T>>>,
) -> Result<Image<T>> {
    let arch = &weights.arch;
    let mut x = weights.const_input.clone();
    for l in arch.layers() {
        if l.upsample_before {
            x = ops::upsample(&x, arch.upsample)?;
        }
        if let Some(f) = inputs.as_deref_mut() {
            f.push(x.clone());
        }
        if arch.instance_norm {
            x = ops::instance_norm(&x, DEFAULT_NORM_EPS)?;
        }
        if let Some(s) = gains {
            x = ops::scale_channels(&x, &Tensor::from_f64_slice(s.slice(l.index)))?;
        }
        x = ops::conv2d(&x, &weights.kernels[l.index])?;
        x = ops::leaky_relu(&x, LRELU_SLOPE)?;
        if let Some(f) = outputs.as_deref_mut() {
            f.push(x.clone());
        }
    }
    let y = ops::conv2d(&x, &weights.rgb_w)?;
    let y = ops::add_channel_bias(&y, &weights.rgb_b)?;
    Ok(ops::clamp(&y, 0.0, 1.0))
}

/// Renders `h(s)`.
pub fn synthesize<T: Scalar>(weights: &GeneratorWeights<T>, s: &StyleCode) -> Result<Image<T>> {
    check_layout(weights, s)?;
    forward(weights, Some(s), None, None)
}

/// Baseline image with every `scale_channels` step skipped.
pub fn synthesize_unmodulated<T: Scalar>(weights: &GeneratorWeights<T>) -> Result<Image<T>> {
    forward(weights, None, None, None)
}

/// Renders `h(s)` and returns every post-activation feature map, one per
/// styled layer.
pub fn synthesize_features<T: Scalar>(
    weights: &GeneratorWeights<T>,
    s: &StyleCode,
) -> Result<(Vec<Tensor<T>>, Image<T>)> {
    check_layout(weights, s)?;
    let mut feats = Vec::with_capacity(weights.arch.n_layers());
    let img = forward(weights, Some(s), Some(&mut feats), None)?;
    Ok((feats, img))
}

/// Renders `h(s)` and returns, per styled layer, the feature map its gains
/// modulate: the constant input for the first layer, otherwise the previous
/// layer's post-activation output (upsampled at level boundaries). Channel
/// `c` of entry `i` is the map scaled by style coordinate `(i, c)`.
pub fn synthesize_layer_inputs<T: Scalar>(
    weights: &GeneratorWeights<T>,
    s: &StyleCode,
) -> Result<(Vec<Tensor<T>>, Image<T>)> {
    check_layout(weights, s)?;
    let mut maps = Vec::with_capacity(weights.arch.n_layers());
    let img = forward(weights, Some(s), None, Some(&mut maps))?;
    Ok((maps, img))
}

/// Node ids of a synthesis pass recorded on a tape.
#[derive(Clone, Debug)]
pub struct SynthesisTrace {
    pub features: Vec<NodeId>,
    pub image: NodeId,
}

/// Records the synthesis network on `tape`, reading per-layer gains from the
/// already-recorded nodes `gains[i]` (each `[l_i]`). Weights enter as leaves.
pub fn trace_synthesis<T: Scalar>(
    weights: &GeneratorWeights<T>,
    tape: &mut Tape<T>,
    gains: &[NodeId],
) -> Result<SynthesisTrace> {
    let arch = &weights.arch;
    let layers = arch.layers();
    if gains.len() != layers.len() {
        return Err(Error::Layout(format!(
            "{} gain nodes for {} styled layers",
            gains.len(),
            layers.len()
        )));
    }
    let mut x = tape.leaf(weights.const_input.clone());
    let mut features = Vec::with_capacity(layers.len());
    for l in &layers {
        if l.upsample_before {
            x = tape.upsample(x, arch.upsample)?;
        }
        if arch.instance_norm {
            x = tape.instance_norm(x, DEFAULT_NORM_EPS)?;
        }
        x = tape.scale_channels(x, gains[l.index])?;
        let k = tape.leaf(weights.kernels[l.index].clone());
        x = tape.conv2d(x, k)?;
        x = tape.leaky_relu(x, LRELU_SLOPE)?;
        features.push(x);
    }
    let rw = tape.leaf(weights.rgb_w.clone());
    let rb = tape.leaf(weights.rgb_b.clone());
    let y = tape.conv2d(x, rw)?;
    let y = tape.add_channel_bias(y, rb)?;
    let image = tape.clamp(y, 0.0, 1.0)?;
    Ok(SynthesisTrace { features, image })
}

/// Output of [`generate`].
#[derive(Clone, Debug)]
pub struct Generated<T: Scalar = f32> {
    pub w: Vec<f64>,
    pub s: StyleCode,
    pub image: Image<T>,
}

/// `z → w → s → image`.
pub fn generate<T: Scalar>(weights: &GeneratorWeights<T>, z: &[f64]) -> Result<Generated<T>> {
    let w = map_latent(weights, z)?;
    let s = style_from_w(weights, &w)?;
    let image = synthesize(weights, &s)?;
    Ok(Generated { w, s, image })
}
