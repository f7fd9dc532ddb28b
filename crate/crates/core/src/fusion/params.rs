use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{FeatureSchema, FusionError};
use crate::autodiff::Tensor;
use crate::seed;

/// Network shape. The image branch is two or more conv(3x3, pad 1)-ReLU-maxpool(2)
/// blocks followed by a linear projection to `image_feature_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub image_size: usize,
    pub conv_channels: Vec<usize>,
    pub image_feature_dim: usize,
    pub cross_layers: usize,
    pub deep_layers: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            image_size: 32,
            conv_channels: vec![4, 8],
            image_feature_dim: 16,
            cross_layers: 3,
            deep_layers: vec![64, 64],
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let shrink = 1usize << self.conv_channels.len();
        if self.image_size == 0 || self.image_size % shrink != 0 {
            return Err(FusionError::Config(format!(
                "image_size {} must be a positive multiple of {shrink}",
                self.image_size
            )));
        }
        if self.image_feature_dim == 0 || self.conv_channels.iter().chain(&self.deep_layers).any(|&c| c == 0) {
            return Err(FusionError::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    /// Flattened conv output width.
    pub fn conv_output_dim(&self) -> usize {
        let side = self.image_size >> self.conv_channels.len();
        side * side * self.conv_channels.last().copied().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[in, out]`.
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    /// `[out, in, 3, 3]`.
    pub kernels: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLayerParams {
    /// `[d, 1]`; any shape with `d` elements works for [`cross_layer`].
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub arch: ArchConfig,
    pub embeddings: Vec<Tensor>,
    pub conv: Vec<ConvLayer>,
    pub image_projection: Dense,
    pub cross: Vec<CrossLayerParams>,
    pub deep: Vec<Dense>,
    pub head_24h: Dense,
    pub head_72h: Dense,
}

fn glorot(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

fn gaussian(rng: &mut ChaCha8Rng, shape: Vec<usize>, sd: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

fn dense(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Dense {
    Dense {
        weight: glorot(rng, vec![fan_in, fan_out], fan_in, fan_out),
        bias: Tensor::zeros(&[fan_out]),
    }
}

impl FusionParams {
    /// Seeded random initialization for `schema`.
    pub fn init(schema: &FeatureSchema, arch: &ArchConfig, seed: u64) -> Result<Self, FusionError> {
        arch.validate()?;
        if schema.image_feature_dim != arch.image_feature_dim {
            return Err(FusionError::Dimension {
                what: "image feature width",
                expected: arch.image_feature_dim,
                got: schema.image_feature_dim,
            });
        }
        let mut rng = seed::item_rng(seed, 0);
        let embeddings = schema
            .categorical_features
            .iter()
            .map(|c| gaussian(&mut rng, vec![c.cardinality, c.embedding_dim], 0.1))
            .collect();
        let mut conv = Vec::new();
        let mut in_ch = 1;
        for &out in &arch.conv_channels {
            let fan_in = in_ch * 9;
            conv.push(ConvLayer {
                kernels: gaussian(&mut rng, vec![out, in_ch, 3, 3], (2.0 / fan_in as f64).sqrt()),
                bias: Tensor::zeros(&[out]),
            });
            in_ch = out;
        }
        let image_projection = dense(&mut rng, arch.conv_output_dim(), arch.image_feature_dim);
        let d = schema.input_dim();
        let cross = (0..arch.cross_layers)
            .map(|_| CrossLayerParams {
                weight: gaussian(&mut rng, vec![d, 1], (1.0 / d as f64).sqrt()),
                bias: Tensor::zeros(&[d]),
            })
            .collect();
        let mut deep = Vec::new();
        let mut width = d;
        for &h in &arch.deep_layers {
            deep.push(dense(&mut rng, width, h));
            width = h;
        }
        let joint = d + width;
        Ok(FusionParams {
            arch: arch.clone(),
            embeddings,
            conv,
            image_projection,
            cross,
            deep,
            head_24h: dense(&mut rng, joint, 1),
            head_72h: dense(&mut rng, joint, 1),
        })
    }

    /// Every trainable tensor in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.embeddings.iter().collect();
        for c in &self.conv {
            out.extend([&c.kernels, &c.bias]);
        }
        out.extend([&self.image_projection.weight, &self.image_projection.bias]);
        for c in &self.cross {
            out.extend([&c.weight, &c.bias]);
        }
        for l in self.deep.iter().chain([&self.head_24h, &self.head_72h]) {
            out.extend([&l.weight, &l.bias]);
        }
        out
    }

    /// Same order as [`FusionParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.embeddings.iter_mut().collect();
        for c in &mut self.conv {
            out.extend([&mut c.kernels, &mut c.bias]);
        }
        out.extend([&mut self.image_projection.weight, &mut self.image_projection.bias]);
        for c in &mut self.cross {
            out.extend([&mut c.weight, &mut c.bias]);
        }
        for l in self.deep.iter_mut().chain([&mut self.head_24h, &mut self.head_72h]) {
            out.extend([&mut l.weight, &mut l.bias]);
        }
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }
}

/// One cross layer on plain vectors: `x0 * (xl . w) + b + xl`.
pub fn cross_layer(x0: &[f64], xl: &[f64], params: &CrossLayerParams) -> Result<Vec<f64>, FusionError> {
    let d = x0.len();
    for (what, got) in [
        ("cross xl", xl.len()),
        ("cross weight", params.weight.len()),
        ("cross bias", params.bias.len()),
    ] {
        if got != d {
            return Err(FusionError::Dimension { what, expected: d, got });
        }
    }
    let s: f64 = xl.iter().zip(params.weight.data()).map(|(a, b)| a * b).sum();
    Ok(x0
        .iter()
        .zip(params.bias.data())
        .zip(xl)
        .map(|((x, b), l)| x * s + b + l)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_layer_worked_example() {
        let p = CrossLayerParams {
            weight: Tensor::vector(vec![0.5, -1.0]),
            bias: Tensor::vector(vec![0.1, 0.2]),
        };
        // s = 3*0.5 - 4 = -2.5
        let out = cross_layer(&[1.0, 2.0], &[3.0, 4.0], &p).unwrap();
        assert_eq!(out, vec![1.0 * -2.5 + 0.1 + 3.0, 2.0 * -2.5 + 0.2 + 4.0]);
    }

    #[test]
    fn zero_weights_are_residual() {
        let p = CrossLayerParams {
            weight: Tensor::zeros(&[3]),
            bias: Tensor::zeros(&[3]),
        };
        assert_eq!(cross_layer(&[9.0, 9.0, 9.0], &[1.0, 2.0, 3.0], &p).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(cross_layer(&[1.0], &[1.0, 2.0], &p).is_err());
    }

    #[test]
    fn arch_validation() {
        assert!(ArchConfig::default().validate().is_ok());
        let bad = ArchConfig {
            image_size: 30,
            ..ArchConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ArchConfig::default().conv_output_dim(), 8 * 8 * 8);
    }
}
