use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::ArchSpec;
use crate::error::{Error, Result};
use crate::format::TensorFile;
use crate::numgrad::{Scalar, Tensor};

/// All generator parameters. Convs have no bias; toRGB is a 1×1 conv plus a
/// per-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorWeights<T: Scalar = f32> {
    pub arch: ArchSpec,
    /// Mapping network `[d_w, d_z]` then `[d_w, d_w]`.
    pub map_w: [Tensor<T>; 2],
    pub map_b: [Tensor<T>; 2],
    /// Affine style head per styled layer, `[l_i, d_w]`.
    pub affine_w: Vec<Tensor<T>>,
    pub affine_b: Vec<Tensor<T>>,
    /// `[const_channels, 4, 4]`.
    pub const_input: Tensor<T>,
    /// `[out, in, k, k]` per styled layer.
    pub kernels: Vec<Tensor<T>>,
    /// `[out_channels, final_channels, 1, 1]`.
    pub rgb_w: Tensor<T>,
    pub rgb_b: Tensor<T>,
}

fn expect_dims<T: Scalar>(name: &str, t: &Tensor<T>, dims: &[usize]) -> Result<()> {
    if t.dims() == dims {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "weights: `{name}` has dims {:?}, arch requires {dims:?}",
            t.dims()
        )))
    }
}

impl<T: Scalar> GeneratorWeights<T> {
    /// Checks every tensor's dims against `arch`.
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        a.validate()?;
        expect_dims("map.w1", &self.map_w[0], &[a.d_w, a.d_z])?;
        expect_dims("map.b1", &self.map_b[0], &[a.d_w])?;
        expect_dims("map.w2", &self.map_w[1], &[a.d_w, a.d_w])?;
        expect_dims("map.b2", &self.map_b[1], &[a.d_w])?;
        let layers = a.layers();
        if self.affine_w.len() != layers.len()
            || self.affine_b.len() != layers.len()
            || self.kernels.len() != layers.len()
        {
            return Err(Error::InvalidArgument(format!(
                "weights: expected {} styled layers",
                layers.len()
            )));
        }
        for l in &layers {
            let i = l.index;
            expect_dims("affine.w", &self.affine_w[i], &[l.in_channels, a.d_w])?;
            expect_dims("affine.b", &self.affine_b[i], &[l.in_channels])?;
            expect_dims(
                "conv",
                &self.kernels[i],
                &[l.out_channels, l.in_channels, a.kernel, a.kernel],
            )?;
        }
        expect_dims("const", &self.const_input, &[a.const_channels, 4, 4])?;
        expect_dims(
            "rgb.w",
            &self.rgb_w,
            &[a.out_channels, a.final_channels(), 1, 1],
        )?;
        expect_dims("rgb.b", &self.rgb_b, &[a.out_channels])?;
        let all_finite = self.tensors().all(|(_, t)| t.all_finite());
        if !all_finite {
            return Err(Error::InvalidArgument(
                "weights contain non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Tensors in file order with their stored names.
    pub fn tensors(&self) -> impl Iterator<Item = (String, &Tensor<T>)> {
        let head = [
            ("map.w1".to_string(), &self.map_w[0]),
            ("map.b1".to_string(), &self.map_b[0]),
            ("map.w2".to_string(), &self.map_w[1]),
            ("map.b2".to_string(), &self.map_b[1]),
            ("const".to_string(), &self.const_input),
        ];
        let per_layer = (0..self.kernels.len()).flat_map(move |i| {
            [
                (format!("affine.{i}.w"), &self.affine_w[i]),
                (format!("affine.{i}.b"), &self.affine_b[i]),
                (format!("conv.{i}"), &self.kernels[i]),
            ]
        });
        let tail = [
            ("rgb.w".to_string(), &self.rgb_w),
            ("rgb.b".to_string(), &self.rgb_b),
        ];
        head.into_iter().chain(per_layer).chain(tail)
    }

    pub fn cast<U: Scalar>(&self) -> GeneratorWeights<U> {
        GeneratorWeights {
            arch: self.arch.clone(),
            map_w: [self.map_w[0].cast(), self.map_w[1].cast()],
            map_b: [self.map_b[0].cast(), self.map_b[1].cast()],
            affine_w: self.affine_w.iter().map(Tensor::cast).collect(),
            affine_b: self.affine_b.iter().map(Tensor::cast).collect(),
            const_input: self.const_input.cast(),
            kernels: self.kernels.iter().map(Tensor::cast).collect(),
            rgb_w: self.rgb_w.cast(),
            rgb_b: self.rgb_b.cast(),
        }
    }

    pub fn to_file(&self) -> TensorFile {
        let mut f = TensorFile::new();
        f.push_vec("arch", &self.arch.encode())
            .expect("fresh file has no duplicates");
        for (name, t) in self.tensors() {
            f.push(name, t.cast()).expect("tensor names are unique");
        }
        f
    }
}

impl GeneratorWeights<f32> {
    pub fn from_file(file: &TensorFile) -> Result<Self> {
        let arch = ArchSpec::decode(&file.get_vec("arch")?)?;
        let n = arch.n_layers();
        let get = |name: &str| file.get(name).cloned();
        let mut affine_w = Vec::with_capacity(n);
        let mut affine_b = Vec::with_capacity(n);
        let mut kernels = Vec::with_capacity(n);
        for i in 0..n {
            affine_w.push(get(&format!("affine.{i}.w"))?);
            affine_b.push(get(&format!("affine.{i}.b"))?);
            kernels.push(get(&format!("conv.{i}"))?);
        }
        let w = Self {
            arch,
            map_w: [get("map.w1")?, get("map.w2")?],
            map_b: [get("map.b1")?, get("map.b2")?],
            affine_w,
            affine_b,
            const_input: get("const")?,
            kernels,
            rgb_w: get("rgb.w")?,
            rgb_b: get("rgb.b")?,
        };
        w.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_file().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_file(&TensorFile::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_file(&TensorFile::load(path)?)
    }

    /// Hex SHA-256 of the serialized weights.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn normal_tensor(rng: &mut ChaCha8Rng, dims: &[usize], std: f64) -> Tensor<f32> {
    Tensor::from_fn(dims, |_| {
        let v: f64 = rng.sample(StandardNormal);
        (v * std) as f32
    })
}

/// Seeded random generator: normal weights with std `1/sqrt(fan_in)`,
/// affine heads with std 0.2 and bias 1 (so `s ≈ 1` at `w = 0`), toRGB bias
/// 0.5 to centre the image range.
pub fn build_random_generator(seed: u64, arch: &ArchSpec) -> Result<GeneratorWeights> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = arch;
    let map_w = [
        normal_tensor(&mut rng, &[a.d_w, a.d_z], 1.0 / (a.d_z as f64).sqrt()),
        normal_tensor(&mut rng, &[a.d_w, a.d_w], 1.0 / (a.d_w as f64).sqrt()),
    ];
    let map_b = [Tensor::zeros(&[a.d_w]), Tensor::zeros(&[a.d_w])];
    let const_input = normal_tensor(&mut rng, &[a.const_channels, 4, 4], 1.0);
    let mut affine_w = Vec::new();
    let mut affine_b = Vec::new();
    let mut kernels = Vec::new();
    for l in a.layers() {
        affine_w.push(normal_tensor(&mut rng, &[l.in_channels, a.d_w], 0.2));
        affine_b.push(Tensor::full(&[l.in_channels], 1.0));
        let fan_in = (l.in_channels * a.kernel * a.kernel) as f64;
        kernels.push(normal_tensor(
            &mut rng,
            &[l.out_channels, l.in_channels, a.kernel, a.kernel],
            1.0 / fan_in.sqrt(),
        ));
    }
    let c = a.final_channels();
    let rgb_w = normal_tensor(
        &mut rng,
        &[a.out_channels, c, 1, 1],
        1.0 / (c as f64).sqrt(),
    );
    let rgb_b = Tensor::full(&[a.out_channels], 0.5);
    let w = GeneratorWeights {
        arch: arch.clone(),
        map_w,
        map_b,
        affine_w,
        affine_b,
        const_input,
        kernels,
        rgb_w,
        rgb_b,
    };
    w.validate()?;
    Ok(w)
}
