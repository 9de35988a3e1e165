//! Named architecture profiles.

use super::{Activation, LayerSpec, ModelSpec};
use crate::error::{Error, Result};

fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Conv { out_channels, kernel, stride, padding }
}

fn deconv(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> LayerSpec {
    LayerSpec::Deconv { out_channels, kernel, stride, padding }
}

fn dense(units: usize) -> LayerSpec {
    LayerSpec::Dense { units }
}

fn act(a: Activation) -> LayerSpec {
    LayerSpec::Activation { act: a }
}

/// The 64x64 RGB architecture: 5 stride-2 3x3 convolutions with channel
/// counts growing 32 to 256 into a dense posterior head; decoder is one
/// convolution followed by six stride-2 4x4 transposed convolutions with
/// channels shrinking 256 down to the image. Latent dimensionality 20,
/// ReLU everywhere except the output heads, sigmoid image output.
pub fn paper64() -> ModelSpec {
    paper64_with_latent(20)
}

pub fn paper64_with_latent(latent_dim: usize) -> ModelSpec {
    ModelSpec {
        encoder_layers: vec![
            conv(32, 3, 2, 1),
            act(Activation::Relu),
            conv(64, 3, 2, 1),
            act(Activation::Relu),
            conv(128, 3, 2, 1),
            act(Activation::Relu),
            conv(256, 3, 2, 1),
            act(Activation::Relu),
            conv(256, 3, 2, 1),
            act(Activation::Relu),
            LayerSpec::Flatten,
            dense(2 * latent_dim),
        ],
        decoder_layers: vec![
            dense(256),
            act(Activation::Relu),
            LayerSpec::Reshape { channels: 256, height: 1, width: 1 },
            conv(256, 3, 1, 1),
            act(Activation::Relu),
            deconv(128, 4, 2, 1),
            act(Activation::Relu),
            deconv(64, 4, 2, 1),
            act(Activation::Relu),
            deconv(32, 4, 2, 1),
            act(Activation::Relu),
            deconv(16, 4, 2, 1),
            act(Activation::Relu),
            deconv(8, 4, 2, 1),
            act(Activation::Relu),
            deconv(3, 4, 2, 1),
            act(Activation::Sigmoid),
        ],
        latent_dim,
        image_shape: (3, 64, 64),
        condition_dim: 0,
    }
}

/// Desk-scale profile for 1x32x32 grayscale data: three stride-2 4x4
/// convolutions (8/16/32 channels) and a 128-unit dense layer; mirrored
/// decoder with sigmoid output. Sized so a 5k-iteration batch-64 run
/// finishes in minutes on one CPU core.
pub fn conv32(latent_dim: usize) -> ModelSpec {
    ModelSpec {
        encoder_layers: vec![
            conv(8, 4, 2, 1),
            act(Activation::Relu),
            conv(16, 4, 2, 1),
            act(Activation::Relu),
            conv(32, 4, 2, 1),
            act(Activation::Relu),
            LayerSpec::Flatten,
            dense(128),
            act(Activation::Relu),
            dense(2 * latent_dim),
        ],
        decoder_layers: vec![
            dense(128),
            act(Activation::Relu),
            dense(512),
            act(Activation::Relu),
            LayerSpec::Reshape { channels: 32, height: 4, width: 4 },
            deconv(16, 4, 2, 1),
            act(Activation::Relu),
            deconv(8, 4, 2, 1),
            act(Activation::Relu),
            deconv(1, 4, 2, 1),
            act(Activation::Sigmoid),
        ],
        latent_dim,
        image_shape: (1, 32, 32),
        condition_dim: 0,
    }
}

/// Dense-only profile on 1x8x8 inputs for fast tests.
pub fn dense8(latent_dim: usize) -> ModelSpec {
    ModelSpec {
        encoder_layers: vec![
            LayerSpec::Flatten,
            dense(32),
            act(Activation::Relu),
            dense(2 * latent_dim),
        ],
        decoder_layers: vec![
            dense(32),
            act(Activation::Relu),
            dense(64),
            act(Activation::Sigmoid),
            LayerSpec::Reshape { channels: 1, height: 8, width: 8 },
        ],
        latent_dim,
        image_shape: (1, 8, 8),
        condition_dim: 0,
    }
}

/// Look up a named profile.
pub fn by_name(name: &str, latent_dim: Option<usize>) -> Result<ModelSpec> {
    match name {
        "paper64" => Ok(paper64_with_latent(latent_dim.unwrap_or(20))),
        "conv32" => Ok(conv32(latent_dim.unwrap_or(8))),
        "dense8" => Ok(dense8(latent_dim.unwrap_or(4))),
        other => Err(Error::config(format!(
            "unknown model profile '{other}' (expected paper64, conv32, or dense8)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_profiles_validate() {
        paper64().validate().unwrap();
        conv32(8).validate().unwrap();
        dense8(2).validate().unwrap();
    }

    #[test]
    fn unknown_profile_is_config_error() {
        assert!(by_name("bogus", None).is_err());
    }
}
