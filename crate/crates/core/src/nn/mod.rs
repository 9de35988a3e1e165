//! Declarative model construction: a [`ModelSpec`] describes the encoder and
//! decoder as layer lists, decoupled from the training algorithm;
//! [`build_model`] shape-checks the spec and instantiates parameters
//! deterministically from a seed.

mod adam;
pub mod profiles;
mod mlp;

pub use adam::AdamState;
pub use mlp::{Mlp, MlpSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, DetRng};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Deconv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        units: usize,
    },
    Flatten,
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
    Activation {
        act: Activation,
    },
}

/// Architecture description: encoder maps the image (plus condition planes)
/// to a 2·latent_dim vector (mean ⊕ log-variance heads); decoder maps
/// latent_dim (+ condition_dim) back to the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub encoder_layers: Vec<LayerSpec>,
    pub decoder_layers: Vec<LayerSpec>,
    pub latent_dim: usize,
    /// (channels, height, width)
    pub image_shape: (usize, usize, usize),
    #[serde(default)]
    pub condition_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Image(usize, usize, usize),
    Vector(usize),
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Image(c, h, w) => write!(f, "{c}x{h}x{w}"),
            Shape::Vector(n) => write!(f, "vec[{n}]"),
        }
    }
}

fn apply_layer(shape: &Shape, layer: &LayerSpec, name: &str) -> Result<Shape> {
    let fail = |msg: String| Err(Error::shape(format!("layer {name}: {msg}")));
    match layer {
        LayerSpec::Conv { out_channels, kernel, stride, padding } => match shape {
            Shape::Image(_, h, w) => {
                let oh = (h + 2 * padding).checked_sub(*kernel).map(|v| v / stride + 1);
                let ow = (w + 2 * padding).checked_sub(*kernel).map(|v| v / stride + 1);
                match (oh, ow) {
                    (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => {
                        Ok(Shape::Image(*out_channels, oh, ow))
                    }
                    _ => fail(format!(
                        "conv output extent is non-positive for input {h}x{w}, kernel {kernel}, stride {stride}, padding {padding}"
                    )),
                }
            }
            s => fail(format!("conv needs an image input, got {s}")),
        },
        LayerSpec::Deconv { out_channels, kernel, stride, padding } => match shape {
            Shape::Image(_, h, w) => {
                let oh = ((h - 1) * stride + kernel).checked_sub(2 * padding);
                let ow = ((w - 1) * stride + kernel).checked_sub(2 * padding);
                match (oh, ow) {
                    (Some(oh), Some(ow)) if oh >= 1 && ow >= 1 => {
                        Ok(Shape::Image(*out_channels, oh, ow))
                    }
                    _ => fail(format!(
                        "deconv output extent is non-positive for input {h}x{w}, kernel {kernel}, stride {stride}, padding {padding}"
                    )),
                }
            }
            s => fail(format!("deconv needs an image input, got {s}")),
        },
        LayerSpec::Dense { units } => match shape {
            Shape::Vector(_) => Ok(Shape::Vector(*units)),
            s => fail(format!("dense needs a flattened input, got {s} (insert a flatten layer)")),
        },
        LayerSpec::Flatten => match shape {
            Shape::Image(ch, h, w) => Ok(Shape::Vector(ch * h * w)),
            Shape::Vector(n) => Ok(Shape::Vector(*n)),
        },
        LayerSpec::Reshape { channels, height, width } => match shape {
            Shape::Vector(n) if *n == channels * height * width => {
                Ok(Shape::Image(*channels, *height, *width))
            }
            s => fail(format!("reshape to {channels}x{height}x{width} does not match input {s}")),
        },
        LayerSpec::Activation { .. } => Ok(shape.clone()),
    }
}

impl ModelSpec {
    /// Shape-check both towers; errors name the first inconsistent layer.
    pub fn validate(&self) -> Result<()> {
        let (ch, h, w) = self.image_shape;
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim must be positive"));
        }
        let mut shape = Shape::Image(ch + self.condition_dim, h, w);
        for (i, layer) in self.encoder_layers.iter().enumerate() {
            shape = apply_layer(&shape, layer, &format!("encoder.{i}"))?;
        }
        if shape != Shape::Vector(2 * self.latent_dim) {
            return Err(Error::shape(format!(
                "encoder composes to {shape}, expected vec[{}] (2 x latent_dim)",
                2 * self.latent_dim
            )));
        }
        let mut shape = Shape::Vector(self.latent_dim + self.condition_dim);
        for (i, layer) in self.decoder_layers.iter().enumerate() {
            shape = apply_layer(&shape, layer, &format!("decoder.{i}"))?;
        }
        if shape != Shape::Image(ch, h, w) {
            return Err(Error::shape(format!(
                "decoder composes to {shape}, expected {ch}x{h}x{w}"
            )));
        }
        Ok(())
    }
}

enum LayerInstance<S: Scalar> {
    Conv {
        weight: Tensor<S>,
        bias: Tensor<S>,
        stride: usize,
        padding: usize,
    },
    Deconv {
        weight: Tensor<S>,
        bias: Tensor<S>,
        stride: usize,
        padding: usize,
    },
    Dense {
        weight: Tensor<S>,
        bias: Tensor<S>,
    },
    Flatten,
    Reshape {
        channels: usize,
        height: usize,
        width: usize,
    },
    Activation(Activation),
}

impl<S: Scalar> LayerInstance<S> {
    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        match self {
            LayerInstance::Conv { weight, bias, stride, padding } => {
                x.conv2d(weight, Some(bias), *stride, *padding)
            }
            LayerInstance::Deconv { weight, bias, stride, padding } => {
                x.conv_transpose2d(weight, Some(bias), *stride, *padding)
            }
            LayerInstance::Dense { weight, bias } => x.matmul(weight).add(bias),
            LayerInstance::Flatten => {
                let b = x.shape()[0];
                x.reshape(&[b, x.len() / b])
            }
            LayerInstance::Reshape { channels, height, width } => {
                let b = x.shape()[0];
                x.reshape(&[b, *channels, *height, *width])
            }
            LayerInstance::Activation(act) => match act {
                Activation::Relu => x.relu(),
                Activation::Sigmoid => x.sigmoid(),
                Activation::Tanh => x.tanh(),
                Activation::None => x.clone(),
            },
        }
    }

    fn parameters(&self) -> Vec<(&'static str, &Tensor<S>)> {
        match self {
            LayerInstance::Conv { weight, bias, .. }
            | LayerInstance::Deconv { weight, bias, .. }
            | LayerInstance::Dense { weight, bias } => {
                vec![("weight", weight), ("bias", bias)]
            }
            _ => Vec::new(),
        }
    }
}

/// Instantiated encoder/decoder pair. Parameters are addressable by
/// "encoder.3.weight"-style paths in a stable order.
pub struct Network<S: Scalar = f64> {
    pub spec: ModelSpec,
    encoder: Vec<LayerInstance<S>>,
    decoder: Vec<LayerInstance<S>>,
}

impl<S: Scalar> std::fmt::Debug for Network<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Network(latent_dim={}, image={:?}, {} params)",
            self.spec.latent_dim,
            self.spec.image_shape,
            self.named_parameters().len()
        )
    }
}

/// Kaiming-uniform fan-in draw: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
fn kaiming<S: Scalar>(rng: &mut DetRng, shape: &[usize], fan_in: usize) -> Tensor<S> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n).map(|_| c(rng.uniform_in(-bound, bound))).collect();
    Tensor::from_vec(data, shape).requires_grad()
}

fn instantiate<S: Scalar>(
    layers: &[LayerSpec],
    mut shape: Shape,
    rng: &mut DetRng,
) -> Vec<LayerInstance<S>> {
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let inst = match (layer, &shape) {
            (LayerSpec::Conv { out_channels, kernel, stride, padding }, Shape::Image(ci, ..)) => {
                let fan_in = ci * kernel * kernel;
                LayerInstance::Conv {
                    weight: kaiming(rng, &[*out_channels, *ci, *kernel, *kernel], fan_in),
                    bias: Tensor::zeros(&[*out_channels]).requires_grad(),
                    stride: *stride,
                    padding: *padding,
                }
            }
            (LayerSpec::Deconv { out_channels, kernel, stride, padding }, Shape::Image(ci, ..)) => {
                let fan_in = ci * kernel * kernel;
                LayerInstance::Deconv {
                    weight: kaiming(rng, &[*ci, *out_channels, *kernel, *kernel], fan_in),
                    bias: Tensor::zeros(&[*out_channels]).requires_grad(),
                    stride: *stride,
                    padding: *padding,
                }
            }
            (LayerSpec::Dense { units }, Shape::Vector(n)) => LayerInstance::Dense {
                weight: kaiming(rng, &[*n, *units], *n),
                bias: Tensor::zeros(&[*units]).requires_grad(),
            },
            (LayerSpec::Flatten, _) => LayerInstance::Flatten,
            (LayerSpec::Reshape { channels, height, width }, _) => LayerInstance::Reshape {
                channels: *channels,
                height: *height,
                width: *width,
            },
            (LayerSpec::Activation { act }, _) => LayerInstance::Activation(*act),
            _ => unreachable!("spec validated before instantiation"),
        };
        shape = apply_layer(&shape, layer, "validated").expect("validated");
        out.push(inst);
    }
    out
}

/// Validate `spec` and instantiate a network; a pure function of
/// `(spec, seed)`.
pub fn build_model<S: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Network<S>> {
    spec.validate()?;
    let mut rng = DetRng::seed_from(derive_seed(seed, "model-init"));
    let (ch, h, w) = spec.image_shape;
    let encoder = instantiate(
        &spec.encoder_layers,
        Shape::Image(ch + spec.condition_dim, h, w),
        &mut rng,
    );
    let decoder = instantiate(
        &spec.decoder_layers,
        Shape::Vector(spec.latent_dim + spec.condition_dim),
        &mut rng,
    );
    Ok(Network {
        spec: spec.clone(),
        encoder,
        decoder,
    })
}

impl<S: Scalar> Network<S> {
    /// Encode a batch into posterior parameters (mu, logvar), each B x d.
    /// A conditional network receives the condition one-hot broadcast to
    /// constant image planes appended as input channels.
    pub fn encode(&self, x: &Tensor<S>, condition: Option<&Tensor<S>>) -> Result<(Tensor<S>, Tensor<S>)> {
        assert_eq!(x.rank(), 4, "encode input must be [B,C,H,W]");
        let b = x.shape()[0];
        let mut h = if self.spec.condition_dim > 0 {
            let cond = condition.ok_or_else(|| {
                Error::config("conditional network requires a condition batch")
            })?;
            assert_eq!(cond.shape(), &[b, self.spec.condition_dim], "condition shape mismatch");
            let (_, ih, iw) = self.spec.image_shape;
            let planes = cond
                .reshape(&[b, self.spec.condition_dim, 1, 1])
                .broadcast_to(&[b, self.spec.condition_dim, ih, iw]);
            Tensor::concat(&[x, &planes], 1)
        } else {
            x.clone()
        };
        for layer in &self.encoder {
            h = layer.forward(&h);
        }
        let d = self.spec.latent_dim;
        let mu = h.narrow(1, 0, d);
        let logvar = h.narrow(1, d, d).clamp(c(-30.0), c(30.0));
        Ok((mu, logvar))
    }

    /// Decode latent codes (with the condition one-hot concatenated for
    /// conditional networks) back to image space.
    pub fn decode(&self, z: &Tensor<S>, condition: Option<&Tensor<S>>) -> Result<Tensor<S>> {
        assert_eq!(z.rank(), 2, "decode input must be [B,d]");
        let b = z.shape()[0];
        let mut h = if self.spec.condition_dim > 0 {
            let cond = condition.ok_or_else(|| {
                Error::config("conditional network requires a condition batch")
            })?;
            assert_eq!(cond.shape(), &[b, self.spec.condition_dim], "condition shape mismatch");
            Tensor::concat(&[z, cond], 1)
        } else {
            z.clone()
        };
        for layer in &self.decoder {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    /// Named parameters in a stable order (encoder first, then decoder).
    pub fn named_parameters(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        for (prefix, layers) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, layer) in layers.iter().enumerate() {
                for (kind, t) in layer.parameters() {
                    out.push((format!("{prefix}.{i}.{kind}"), t.clone()));
                }
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor<S>> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn zero_grad(&self) {
        for p in self.parameters() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_spec() -> ModelSpec {
        // dense-only towers on 1x8x8, latent 2
        ModelSpec {
            encoder_layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 16 },
                LayerSpec::Activation { act: Activation::Relu },
                LayerSpec::Dense { units: 4 },
            ],
            decoder_layers: vec![
                LayerSpec::Dense { units: 16 },
                LayerSpec::Activation { act: Activation::Relu },
                LayerSpec::Dense { units: 64 },
                LayerSpec::Activation { act: Activation::Sigmoid },
                LayerSpec::Reshape { channels: 1, height: 8, width: 8 },
            ],
            latent_dim: 2,
            image_shape: (1, 8, 8),
            condition_dim: 0,
        }
    }

    #[test]
    fn minimal_spec_round_trips_shapes() {
        let net = build_model::<f64>(&minimal_spec(), 3).unwrap();
        let x = Tensor::<f64>::zeros(&[5, 1, 8, 8]);
        let (mu, logvar) = net.encode(&x, None).unwrap();
        assert_eq!(mu.shape(), &[5, 2]);
        assert_eq!(logvar.shape(), &[5, 2]);
        let out = net.decode(&mu, None).unwrap();
        assert_eq!(out.shape(), &[5, 1, 8, 8]);
    }

    #[test]
    fn build_is_deterministic_in_spec_and_seed() {
        let a = build_model::<f64>(&minimal_spec(), 42).unwrap();
        let b = build_model::<f64>(&minimal_spec(), 42).unwrap();
        let c = build_model::<f64>(&minimal_spec(), 43).unwrap();
        for ((na, ta), (nb, tb)) in a.named_parameters().iter().zip(b.named_parameters()) {
            assert_eq!(*na, nb);
            assert_eq!(ta.to_vec(), tb.to_vec(), "parameter {na} differs across builds");
        }
        let wa = a.named_parameters()[0].1.to_vec();
        let wc = c.named_parameters()[0].1.to_vec();
        assert_ne!(wa, wc, "different seeds must give different weights");
    }

    #[test]
    fn shape_error_names_offending_layer() {
        let mut spec = minimal_spec();
        spec.encoder_layers[3] = LayerSpec::Dense { units: 5 }; // not 2*latent
        let err = build_model::<f64>(&spec, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vec[4]"), "unexpected message: {msg}");

        let mut spec = minimal_spec();
        spec.encoder_layers.insert(0, LayerSpec::Conv { out_channels: 4, kernel: 9, stride: 1, padding: 0 });
        let err = build_model::<f64>(&spec, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("encoder.0"), "error should name the layer: {msg}");
    }

    #[test]
    fn final_sigmoid_bounds_decoder_output() {
        let net = build_model::<f64>(&minimal_spec(), 7).unwrap();
        let z = Tensor::from_vec(vec![5.0, -3.0, 0.1, 2.0], &[2, 2]);
        let out = net.decode(&z, None).unwrap();
        assert!(out.to_vec().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn conditional_net_requires_condition() {
        let mut spec = minimal_spec();
        spec.condition_dim = 3;
        // adjust first dense: flatten of (1+3)x8x8 = 256
        let net = build_model::<f64>(&spec, 1).unwrap();
        let x = Tensor::<f64>::zeros(&[2, 1, 8, 8]);
        assert!(net.encode(&x, None).is_err());
        let cond = Tensor::<f64>::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[2, 3]);
        let (mu, _) = net.encode(&x, Some(&cond)).unwrap();
        assert_eq!(mu.shape(), &[2, 2]);
        assert!(net.decode(&mu, None).is_err());
        assert_eq!(net.decode(&mu, Some(&cond)).unwrap().shape(), &[2, 1, 8, 8]);
    }

    #[test]
    fn paper_profile_builds_and_shapes_check() {
        // 3x64x64, 5 convs stride 2 k3 (32 -> 256 kernels), dense head to 2*20;
        // decoder: dense to 256, 1 conv, 6 deconvs k4 s2 down to 3 channels.
        let spec = crate::nn::profiles::paper64();
        let net = build_model::<f64>(&spec, 0).unwrap();
        let x = Tensor::<f64>::zeros(&[64, 3, 64, 64]);
        let (mu, logvar) = net.encode(&x, None).unwrap();
        assert_eq!(mu.shape(), &[64, 20]);
        assert_eq!(logvar.shape(), &[64, 20]);
        let out = net.decode(&mu.narrow(0, 0, 2), None).unwrap();
        assert_eq!(out.shape(), &[2, 3, 64, 64]);
    }

    #[test]
    fn towers_are_shape_inverse_for_any_batch_size() {
        let net = build_model::<f64>(&minimal_spec(), 5).unwrap();
        for b in [1usize, 2, 5, 17] {
            let x = Tensor::<f64>::zeros(&[b, 1, 8, 8]);
            let (mu, _) = net.encode(&x, None).unwrap();
            assert_eq!(mu.shape(), &[b, 2]);
            assert_eq!(net.decode(&mu, None).unwrap().shape(), &[b, 1, 8, 8]);
        }
    }

    #[test]
    fn zeroed_head_emits_zero_posterior_parameters() {
        let net = build_model::<f64>(&minimal_spec(), 5).unwrap();
        // zero the dense head feeding the (mu, logvar) split
        for (name, p) in net.named_parameters() {
            if name.starts_with("encoder.3") {
                p.update_data(|d| d.iter_mut().for_each(|v| *v = 0.0));
            }
        }
        let mut rng = crate::rng::DetRng::seed_from(8);
        let x = Tensor::<f64>::from_vec((0..64).map(|_| rng.uniform()).collect(), &[1, 1, 8, 8]);
        let (mu, logvar) = net.encode(&x, None).unwrap();
        assert!(mu.to_vec().iter().all(|&v| v == 0.0));
        assert!(logvar.to_vec().iter().all(|&v| v == 0.0));
    }
}
