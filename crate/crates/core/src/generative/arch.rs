//! Architecture descriptors for the per-modality encoder/decoder pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::nn::{
    conv_out_size, Activation, BatchNorm1d, Conv2d, ConvGeometry, ConvTranspose2d, Layer, Linear, Real,
    Reshape, Sequential,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub geometry: ConvGeometry,
}

impl ConvSpec {
    pub fn new(filters: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            filters,
            geometry: ConvGeometry {
                kernel,
                stride,
                padding,
            },
        }
    }
}

/// Convolutional encoder over `(channels, size, size)` stacked frames,
/// followed by fully connected layers; the decoder mirrors it with
/// transposed convolutions and emits logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageArch {
    pub channels: usize,
    pub size: usize,
    pub conv: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

/// Fully connected encoder over the flattened sound payload, with optional
/// batch normalization after the first layer. The decoder ends in a sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoundArch {
    pub input_shape: Vec<usize>,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub activation: Activation,
}

impl SoundArch {
    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvaeArchitecture {
    pub latent_dim: usize,
    pub image: ImageArch,
    pub sound: SoundArch,
}

impl AvaeArchitecture {
    pub fn pendulum(latent_dim: usize, frame_stack: usize, image_size: usize, receivers: usize) -> Self {
        Self {
            latent_dim,
            image: ImageArch {
                channels: frame_stack,
                size: image_size,
                conv: vec![ConvSpec::new(32, 4, 2, 1), ConvSpec::new(64, 4, 2, 1)],
                hidden: vec![256, 256],
                activation: Activation::Swish,
            },
            sound: SoundArch {
                input_shape: vec![frame_stack, receivers, 2],
                hidden: vec![50, 50],
                batch_norm: true,
                activation: Activation::Swish,
            },
        }
    }

    pub fn hyperhot(
        latent_dim: usize,
        frame_stack: usize,
        image_size: usize,
        receivers: usize,
        samples_per_frame: usize,
    ) -> Self {
        Self {
            latent_dim,
            image: ImageArch {
                channels: frame_stack,
                size: image_size,
                conv: vec![
                    ConvSpec::new(32, 8, 4, 2),
                    ConvSpec::new(64, 4, 2, 1),
                    ConvSpec::new(64, 2, 1, 1),
                ],
                hidden: vec![512, 512],
                activation: Activation::Relu,
            },
            sound: SoundArch {
                input_shape: vec![frame_stack, receivers, samples_per_frame],
                hidden: vec![512, 512],
                batch_norm: true,
                activation: Activation::Relu,
            },
        }
    }

    pub fn for_config(cfg: &ExperimentConfig) -> Self {
        let latent = cfg.avae.latent_dim;
        match &cfg.scenario {
            ScenarioConfig::Pendulum(p) => {
                Self::pendulum(latent, p.frame_stack, p.image_size, p.receivers.len())
            }
            ScenarioConfig::Hyperhot(h) => Self::hyperhot(
                latent,
                h.frame_stack,
                h.image_size,
                h.receivers.len(),
                h.samples_per_frame,
            ),
        }
    }

    /// Small network used for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            latent_dim: 4,
            image: ImageArch {
                channels: 1,
                size: 8,
                conv: vec![ConvSpec::new(3, 4, 2, 1)],
                hidden: vec![16],
                activation: Activation::Swish,
            },
            sound: SoundArch {
                input_shape: vec![6],
                hidden: vec![16],
                batch_norm: true,
                activation: Activation::Swish,
            },
        }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.image.channels, self.image.size, self.image.size]
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        self.image.spatial_sizes()?;
        if self.image.hidden.is_empty() || self.sound.hidden.is_empty() {
            return Err(Error::Config("encoders need at least one hidden layer".into()));
        }
        if self.sound.input_dim() == 0 {
            return Err(Error::Config("sound input must be non-empty".into()));
        }
        Ok(())
    }
}

impl ImageArch {
    /// Spatial size after each convolution, starting with the input size.
    pub fn spatial_sizes(&self) -> Result<Vec<usize>> {
        let mut sizes = vec![self.size];
        for spec in &self.conv {
            let last = *sizes.last().unwrap();
            let next = conv_out_size(last, &spec.geometry)
                .ok_or_else(|| Error::Config(format!("convolution does not fit a {last}-pixel input")))?;
            sizes.push(next);
        }
        Ok(sizes)
    }

    fn flat_features(&self) -> Result<usize> {
        let s = *self.spatial_sizes()?.last().unwrap();
        let c = self.conv.last().map_or(self.channels, |c| c.filters);
        Ok(c * s * s)
    }

    pub fn build_encoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, latent_dim: usize) -> Result<Sequential<T>> {
        let mut layers = Vec::new();
        let mut c = self.channels;
        for spec in &self.conv {
            layers.push(Layer::Conv2d(Conv2d::new(rng, c, spec.filters, spec.geometry)));
            layers.push(Layer::activation(self.activation));
            c = spec.filters;
        }
        let flat = self.flat_features()?;
        layers.push(Layer::Reshape(Reshape::new(vec![flat])));
        let mut width = flat;
        for &h in &self.hidden {
            layers.push(Layer::Linear(Linear::new(rng, width, h)));
            layers.push(Layer::activation(self.activation));
            width = h;
        }
        layers.push(Layer::Linear(Linear::new(rng, width, 2 * latent_dim)));
        Ok(Sequential::new(layers))
    }

    pub fn build_decoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, latent_dim: usize) -> Result<Sequential<T>> {
        let sizes = self.spatial_sizes()?;
        let mut layers = Vec::new();
        let mut width = latent_dim;
        for &h in self.hidden.iter().rev() {
            layers.push(Layer::Linear(Linear::new(rng, width, h)));
            layers.push(Layer::activation(self.activation));
            width = h;
        }
        let flat = self.flat_features()?;
        layers.push(Layer::Linear(Linear::new(rng, width, flat)));
        if self.conv.is_empty() {
            layers.push(Layer::Reshape(Reshape::new(vec![self.channels, self.size, self.size])));
            return Ok(Sequential::new(layers));
        }
        layers.push(Layer::activation(self.activation));
        let n = self.conv.len();
        let s = sizes[n];
        layers.push(Layer::Reshape(Reshape::new(vec![self.conv[n - 1].filters, s, s])));
        for i in (0..n).rev() {
            let out_c = if i == 0 { self.channels } else { self.conv[i - 1].filters };
            let out = sizes[i];
            layers.push(Layer::ConvTranspose2d(ConvTranspose2d::new(
                rng,
                self.conv[i].filters,
                out_c,
                self.conv[i].geometry,
                (out, out),
            )));
            if i > 0 {
                layers.push(Layer::activation(self.activation));
            }
        }
        Ok(Sequential::new(layers))
    }
}

impl SoundArch {
    fn stack<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, widths: &[usize], out: usize) -> Vec<Layer<T>> {
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            layers.push(Layer::Linear(Linear::new(rng, pair[0], pair[1])));
            if i == 0 && self.batch_norm {
                layers.push(Layer::BatchNorm1d(BatchNorm1d::new(pair[1])));
            }
            layers.push(Layer::activation(self.activation));
        }
        layers.push(Layer::Linear(Linear::new(rng, *widths.last().unwrap(), out)));
        layers
    }

    pub fn build_encoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, latent_dim: usize) -> Sequential<T> {
        let mut widths = vec![self.input_dim()];
        widths.extend(&self.hidden);
        Sequential::new(self.stack(rng, &widths, 2 * latent_dim))
    }

    pub fn build_decoder<T: Real, R: Rng + ?Sized>(&self, rng: &mut R, latent_dim: usize) -> Sequential<T> {
        let mut widths = vec![latent_dim];
        widths.extend(self.hidden.iter().rev());
        let mut layers = self.stack(rng, &widths, self.input_dim());
        layers.push(Layer::activation(Activation::Sigmoid));
        Sequential::new(layers)
    }
}
