//! Two-step remapping: a VAE learns a latent code for hidden-scene depth
//! maps, a compressor regresses Lidar readings onto those codes, and
//! inference decodes the compressor's output.

mod params_file;
mod registry;
mod train;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::StackedInput;
use crate::error::{Error, Result};
use crate::nn::{Layer, Network, NetworkSpec, Shape};
use crate::renderer::NlosDepthMap;

pub use params_file::{decode_params, encode_params, load_params, save_params, ModelFile, PARAMS_MAGIC};
pub use registry::{build_latent_registry, LatentRegistry};
pub use train::{
    compressor_loss, compressor_loss_and_grad, train_compressor, train_compressor_with, train_vae, vae_loss,
    vae_loss_and_grad, write_loss_csv, LossRecord, TrainConfig, VaeGradient,
};

/// Paper-scale latent size is 256; desk-scale networks use 32.
pub const DEFAULT_LATENT_DIM: usize = 32;

/// Mean and log-variance of the approximate posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// The VAE. Its encoder maps a depth map in network units to
/// `mu ‖ log_var`; its decoder, the generator, maps a latent to a map in
/// `[0, 1]`.
///
/// Network units are `background + (1 − 2·background)·depth/depth_scale`,
/// clamped to `[0, 1]`. Keeping empty pixels off 0 gives the sigmoid output a
/// finite optimum there; with targets at exactly 0 it saturates and the
/// foreground gradients vanish.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub encoder: Network,
    pub decoder: Network,
    pub latent_dim: usize,
    pub depth_scale: f64,
    pub background: f64,
}

fn vector(n: usize) -> Shape {
    [n, 1, 1]
}

impl Vae {
    /// Checks that the two networks fit together.
    pub fn new(encoder: Network, decoder: Network, depth_scale: f64, background: f64) -> Result<Self> {
        let latent_dim = decoder.input_len();
        if encoder.output_shape() != vector(2 * latent_dim) || decoder.input_shape() != vector(latent_dim) {
            return Err(Error::contract(format!(
                "encoder output {:?} does not match decoder input {:?}",
                encoder.output_shape(),
                decoder.input_shape()
            )));
        }
        if decoder.output_shape() != encoder.input_shape() {
            return Err(Error::contract("decoder output shape differs from encoder input"));
        }
        if !(depth_scale > 0.0 && depth_scale.is_finite()) {
            return Err(Error::contract("depth_scale must be positive"));
        }
        if !(0.0..0.5).contains(&background) {
            return Err(Error::contract("background must lie in [0, 0.5)"));
        }
        Ok(Vae {
            encoder,
            decoder,
            latent_dim,
            depth_scale,
            background,
        })
    }

    pub fn image_shape(&self) -> Shape {
        self.encoder.input_shape()
    }

    pub fn encode(&self, x: &[f64]) -> Result<EncoderOutput> {
        let mut out = self.encoder.forward(x)?;
        let log_var = out.split_off(self.latent_dim);
        Ok(EncoderOutput { mu: out, log_var })
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.forward(z)
    }

    /// Depth map in meters to network units.
    pub fn target_tensor(&self, map: &NlosDepthMap) -> Result<Vec<f64>> {
        let [c, h, w] = self.image_shape();
        if c != 1 || map.height != h || map.width != w {
            return Err(Error::contract(format!(
                "{}x{} depth map for a {h}x{w} model",
                map.height, map.width
            )));
        }
        let span = 1.0 - 2.0 * self.background;
        Ok(map
            .depth
            .iter()
            .map(|&d| (self.background + span * d as f64 / self.depth_scale).clamp(0.0, 1.0))
            .collect())
    }

    /// Network units back to meters; values at or below the background
    /// level are empty.
    pub fn to_depth_map(&self, x: &[f64]) -> NlosDepthMap {
        let [_, h, w] = self.image_shape();
        let span = 1.0 - 2.0 * self.background;
        NlosDepthMap {
            width: w,
            height: h,
            depth: x
                .iter()
                .map(|&v| ((v - self.background).max(0.0) * self.depth_scale / span) as f32)
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }
}

/// `z = mu + exp(log_var / 2) ⊙ epsilon`.
pub fn reparameterize(out: &EncoderOutput, epsilon: &[f64]) -> Result<Vec<f64>> {
    if out.mu.len() != epsilon.len() || out.log_var.len() != epsilon.len() {
        return Err(Error::contract("latent dimensions disagree"));
    }
    Ok(out
        .mu
        .iter()
        .zip(&out.log_var)
        .zip(epsilon)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect())
}

/// `KL(N(mu, diag e^log_var) ‖ N(0, I)) = ½ Σ (mu² + e^log_var − 1 − log_var)`.
pub fn kl_divergence(out: &EncoderOutput) -> f64 {
    0.5 * out
        .mu
        .iter()
        .zip(&out.log_var)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Mean squared error over all values.
pub fn reconstruction_loss(x: &[f64], x_prime: &[f64]) -> Result<f64> {
    if x.len() != x_prime.len() || x.is_empty() {
        return Err(Error::contract(format!(
            "reconstruction of {} values against {}",
            x_prime.len(),
            x.len()
        )));
    }
    Ok(x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64)
}

/// Regresses a stacked Lidar reading onto a latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    pub net: Network,
    pub latent_dim: usize,
}

impl Compressor {
    pub fn new(net: Network) -> Result<Self> {
        let [d, h, w] = net.output_shape();
        if h != 1 || w != 1 {
            return Err(Error::contract("compressor must end in a vector"));
        }
        Ok(Compressor { net, latent_dim: d })
    }

    pub fn input_shape(&self) -> Shape {
        self.net.input_shape()
    }

    pub fn compress_tensor(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(y)
    }

    pub fn compress(&self, y: &StackedInput) -> Result<Vec<f64>> {
        if self.input_shape() != [4, y.height, y.width] {
            return Err(Error::contract(format!(
                "stacked input 4x{}x{} for a compressor expecting {:?}",
                y.height,
                y.width,
                self.input_shape()
            )));
        }
        self.net.forward(&y.to_tensor())
    }
}

/// A generator and compressor known to share a latent size.
#[derive(Debug, Clone)]
pub struct Remapper {
    pub vae: Vae,
    pub compressor: Compressor,
}

/// A reconstruction and how long it took.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub depth: NlosDepthMap,
    pub latent: Vec<f64>,
    pub elapsed: Duration,
}

impl Remapper {
    pub fn new(vae: Vae, compressor: Compressor) -> Result<Self> {
        if vae.latent_dim != compressor.latent_dim {
            return Err(Error::contract(format!(
                "generator latent size {} differs from compressor output {}",
                vae.latent_dim, compressor.latent_dim
            )));
        }
        Ok(Remapper { vae, compressor })
    }

    /// `decode(compress(y))`, in meters, timed.
    pub fn reconstruct(&self, y: &StackedInput) -> Result<Reconstruction> {
        let start = Instant::now();
        let latent = self.compressor.compress(y)?;
        let x = self.vae.decode(&latent)?;
        let depth = self.vae.to_depth_map(&x);
        Ok(Reconstruction {
            depth,
            latent,
            elapsed: start.elapsed(),
        })
    }
}

/// Mirrored strided-conv encoder/decoder. Each stage halves (encoder) or
/// doubles (decoder) the resolution with 4×4 kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeArch {
    pub height: usize,
    pub width: usize,
    pub channels: Vec<usize>,
    pub latent_dim: usize,
    pub leaky_slope: f64,
    /// Meters mapped to the top of the output range.
    pub depth_scale: f64,
    pub background: f64,
}

impl Default for VaeArch {
    fn default() -> Self {
        VaeArch {
            height: 32,
            width: 32,
            channels: vec![8, 16, 32],
            latent_dim: DEFAULT_LATENT_DIM,
            leaky_slope: 0.1,
            depth_scale: 0.5,
            background: 0.1,
        }
    }
}

fn down(i: usize, o: usize) -> Layer {
    Layer::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: 4,
        stride: 2,
        padding: 1,
    }
}

fn up(i: usize, o: usize) -> Layer {
    Layer::ConvTranspose2d {
        in_channels: i,
        out_channels: o,
        kernel: 4,
        stride: 2,
        padding: 1,
    }
}

impl VaeArch {
    fn bottleneck(&self) -> Result<Shape> {
        let f = 1 << self.channels.len();
        if self.channels.is_empty() || self.height % f != 0 || self.width % f != 0 {
            return Err(Error::contract(format!(
                "{}x{} is not divisible by 2^{}",
                self.height,
                self.width,
                self.channels.len()
            )));
        }
        Ok([*self.channels.last().unwrap(), self.height / f, self.width / f])
    }

    pub fn encoder_spec(&self) -> Result<NetworkSpec> {
        let b = self.bottleneck()?;
        let act = Layer::LeakyRelu { slope: self.leaky_slope };
        let mut layers = Vec::new();
        let mut prev = 1;
        for &c in &self.channels {
            layers.extend([down(prev, c), act]);
            prev = c;
        }
        let flat = b[0] * b[1] * b[2];
        layers.push(Layer::Reshape { shape: vector(flat) });
        layers.push(Layer::Linear {
            inputs: flat,
            outputs: 2 * self.latent_dim,
        });
        Ok(NetworkSpec {
            input_shape: [1, self.height, self.width],
            layers,
        })
    }

    pub fn decoder_spec(&self) -> Result<NetworkSpec> {
        let b = self.bottleneck()?;
        let act = Layer::LeakyRelu { slope: self.leaky_slope };
        let flat = b[0] * b[1] * b[2];
        let mut layers = vec![
            Layer::Linear {
                inputs: self.latent_dim,
                outputs: flat,
            },
            act,
            Layer::Reshape { shape: b },
        ];
        let rev: Vec<usize> = self.channels.iter().rev().copied().collect();
        for (k, &c) in rev.iter().enumerate() {
            let next = rev.get(k + 1).copied().unwrap_or(1);
            layers.push(up(c, next));
            layers.push(if next == 1 { Layer::Sigmoid } else { act });
        }
        Ok(NetworkSpec {
            input_shape: vector(self.latent_dim),
            layers,
        })
    }

    /// Fresh networks with seeded fan-in uniform weights. The output bias
    /// starts at the background level so training does not open by driving
    /// every pixel down at once.
    pub fn build(&self, seed: u64) -> Result<Vae> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoder = Network::new(self.encoder_spec()?)?;
        let mut decoder = Network::new(self.decoder_spec()?)?;
        encoder.init_uniform(&mut rng);
        decoder.init_uniform(&mut rng);
        if self.background > 0.0 {
            let last = decoder.spec().layers.len() - 2;
            let (_, bias) = decoder.layer_params(last);
            decoder.params[bias].fill((self.background / (1.0 - self.background)).ln());
        }
        Vae::new(encoder, decoder, self.depth_scale, self.background)
    }
}

/// Strided-conv stack over the 4-channel reading, then a hidden dense layer
/// and a linear head of the latent size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorArch {
    pub height: usize,
    pub width: usize,
    pub channels: Vec<usize>,
    pub hidden: usize,
    pub latent_dim: usize,
    pub leaky_slope: f64,
}

impl Default for CompressorArch {
    fn default() -> Self {
        CompressorArch {
            height: 64,
            width: 40,
            channels: vec![8, 16, 32],
            hidden: 128,
            latent_dim: DEFAULT_LATENT_DIM,
            leaky_slope: 0.1,
        }
    }
}

impl CompressorArch {
    pub fn spec(&self) -> Result<NetworkSpec> {
        let act = Layer::LeakyRelu { slope: self.leaky_slope };
        let mut layers = Vec::new();
        let mut prev = 4;
        for &c in &self.channels {
            layers.extend([down(prev, c), act]);
            prev = c;
        }
        let probe = Network::new(NetworkSpec {
            input_shape: [4, self.height, self.width],
            layers: layers.clone(),
        })?;
        let flat = probe.output_len();
        layers.push(Layer::Reshape { shape: vector(flat) });
        layers.push(Layer::Linear {
            inputs: flat,
            outputs: self.hidden,
        });
        layers.push(act);
        layers.push(Layer::Linear {
            inputs: self.hidden,
            outputs: self.latent_dim,
        });
        Ok(NetworkSpec {
            input_shape: [4, self.height, self.width],
            layers,
        })
    }

    pub fn build(&self, seed: u64) -> Result<Compressor> {
        let mut net = Network::new(self.spec()?)?;
        net.init_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        Compressor::new(net)
    }
}
