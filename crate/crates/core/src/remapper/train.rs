//! Deterministic mini-batch training for both networks.
//!
//! Per-sample gradients are computed in parallel and summed in batch order,
//! so results do not depend on the thread count. Epoch `e` shuffles with
//! stream `e` of the seed; the VAE noise for sample `i` in epoch `e` comes
//! from its own stream as well.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kl_divergence, reconstruction_loss, reparameterize, Compressor, EncoderOutput, LatentRegistry, Vae};
use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::formats::write_file;
use crate::nn::{Optimizer, OptimizerKind};
use crate::renderer::NlosDepthMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// KL weight; ignored by the compressor.
    pub beta: f64,
    pub optimizer: OptimizerKind,
    /// Decoupled (AdamW-style) decay; 0 disables it.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-3,
            beta: 0.5,
            optimizer: OptimizerKind::ADAM,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// VAE settings for the toy desk benchmark. The reconstruction term is a
    /// per-pixel mean while the KL term sums over latents, so β must be small
    /// or the posterior collapses onto the prior.
    pub fn desk_vae() -> Self {
        TrainConfig {
            epochs: 100,
            beta: 1e-5,
            ..TrainConfig::default()
        }
    }

    pub fn desk_compressor() -> Self {
        TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate", "must be positive and finite"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid("beta", "must be non-negative and finite"));
        }
        if !(self.weight_decay >= 0.0 && self.learning_rate * self.weight_decay < 1.0) {
            return Err(Error::invalid("weight_decay", "must be non-negative with lr * weight_decay < 1"));
        }
        Ok(())
    }
}

/// Mean losses over one epoch. Epoch 0 is the untrained model; later
/// entries average the per-sample losses seen while the epoch ran. For the
/// compressor `reconstruction` is the latent regression error and `kl` is 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "epoch,reconstruction,kl,total")?;
    for r in history {
        writeln!(out, "{},{:e},{:e},{:e}", r.epoch, r.reconstruction, r.kl, r.total)?;
    }
    write_file(path, &out)
}

/// Losses and gradients of one VAE sample.
#[derive(Debug, Clone)]
pub struct VaeGradient {
    pub reconstruction: f64,
    pub kl: f64,
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

impl VaeGradient {
    pub fn total(&self, beta: f64) -> f64 {
        self.reconstruction + beta * self.kl
    }
}

/// `(reconstruction, kl)` for one sample with fixed noise `epsilon`.
pub fn vae_loss(vae: &Vae, x: &[f64], epsilon: &[f64]) -> Result<(f64, f64)> {
    let out = vae.encode(x)?;
    let z = reparameterize(&out, epsilon)?;
    Ok((reconstruction_loss(x, &vae.decode(&z)?)?, kl_divergence(&out)))
}

/// Gradient of `reconstruction + beta·kl` for one sample with fixed noise.
pub fn vae_loss_and_grad(vae: &Vae, x: &[f64], epsilon: &[f64], beta: f64) -> Result<VaeGradient> {
    let d = vae.latent_dim;
    let enc = vae.encoder.forward_trace(x)?;
    let out = EncoderOutput {
        mu: enc.output()[..d].to_vec(),
        log_var: enc.output()[d..].to_vec(),
    };
    let z = reparameterize(&out, epsilon)?;
    let dec = vae.decoder.forward_trace(&z)?;
    let x_prime = dec.output();
    let reconstruction = reconstruction_loss(x, x_prime)?;
    let n = x.len() as f64;
    let g_out: Vec<f64> = x_prime.iter().zip(x).map(|(p, t)| 2.0 * (p - t) / n).collect();
    let mut decoder = vec![0.0; vae.decoder.param_count()];
    let gz = vae.decoder.backward(&dec, &g_out, &mut decoder);
    let mut g_enc = vec![0.0; 2 * d];
    for k in 0..d {
        let (mu, lv) = (out.mu[k], out.log_var[k]);
        let sd = (0.5 * lv).exp();
        g_enc[k] = gz[k] + beta * mu;
        g_enc[d + k] = gz[k] * epsilon[k] * 0.5 * sd + beta * 0.5 * (lv.exp() - 1.0);
    }
    let mut encoder = vec![0.0; vae.encoder.param_count()];
    vae.encoder.backward(&enc, &g_enc, &mut encoder);
    Ok(VaeGradient {
        reconstruction,
        kl: kl_divergence(&out),
        encoder,
        decoder,
    })
}

/// Mean squared error between `compress(y)` and `target`.
pub fn compressor_loss(c: &Compressor, y: &[f64], target: &[f64]) -> Result<f64> {
    reconstruction_loss(target, &c.compress_tensor(y)?)
}

pub fn compressor_loss_and_grad(c: &Compressor, y: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    let trace = c.net.forward_trace(y)?;
    let loss = reconstruction_loss(target, trace.output())?;
    let n = target.len() as f64;
    let g: Vec<f64> = trace.output().iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    let mut grad = vec![0.0; c.net.param_count()];
    c.net.backward(&trace, &g, &mut grad);
    Ok((loss, grad))
}

/// One sample's `(reconstruction, kl, gradient)`.
type Sample = (f64, f64, Vec<f64>);

/// Shared loop over a flat parameter vector. `sample(params, epoch, i)`
/// evaluates sample `i`; `eval_only` skips its gradient.
fn fit<M, S, H>(
    model: &mut M,
    n: usize,
    config: &TrainConfig,
    params_of: fn(&M) -> Vec<f64>,
    set_params: fn(&mut M, &[f64]),
    sample: S,
    mut hook: H,
) -> Result<Vec<LossRecord>>
where
    M: Sync,
    S: Fn(&M, usize, usize) -> Result<Sample> + Sync,
    H: FnMut(usize, &M),
{
    config.validate()?;
    if n == 0 {
        return Err(Error::contract("training set is empty"));
    }
    let mut params = params_of(model);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, params.len()).with_weight_decay(config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs + 1);
    let record = |epoch: usize, r: f64, k: f64| LossRecord {
        epoch,
        reconstruction: r / n as f64,
        kl: k / n as f64,
        total: (r + config.beta * k) / n as f64,
    };

    let initial: Vec<Result<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| sample(model, 0, i).map(|(r, k, _)| (r, k)))
        .collect();
    let (mut r0, mut k0) = (0.0, 0.0);
    for res in initial {
        let (r, k) = res?;
        r0 += r;
        k0 += k;
    }
    if !(r0 + k0).is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            batch: 0,
            detail: "untrained model".into(),
        });
    }
    history.push(record(0, r0, k0));
    hook(0, model);

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let (mut r_sum, mut k_sum) = (0.0, 0.0);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let m: &M = model;
            let results: Vec<Result<Sample>> = batch.par_iter().map(|&i| sample(m, epoch, i)).collect();
            let mut grad = vec![0.0; params.len()];
            let (mut br, mut bk) = (0.0, 0.0);
            for res in results {
                let (r, k, g) = res?;
                br += r;
                bk += k;
                for (a, v) in grad.iter_mut().zip(&g) {
                    *a += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            if !(br + bk).is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("reconstruction {br}, kl {bk}"),
                });
            }
            opt.step(&mut params, &grad);
            set_params(model, &params);
            r_sum += br;
            k_sum += bk;
        }
        let rec = record(epoch, r_sum, k_sum);
        log::debug!("epoch {epoch}: total {:.6}", rec.total);
        history.push(rec);
        hook(epoch, model);
    }
    Ok(history)
}

/// Stream `epoch·n + i` of a generator derived from the seed.
fn sample_noise(seed: u64, epoch: usize, i: usize, n: usize, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream((epoch * n + i) as u64);
    (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn vae_params(v: &Vae) -> Vec<f64> {
    [v.encoder.params.as_slice(), &v.decoder.params].concat()
}

fn set_vae_params(v: &mut Vae, p: &[f64]) {
    let (e, d) = p.split_at(v.encoder.param_count());
    v.encoder.params.copy_from_slice(e);
    v.decoder.params.copy_from_slice(d);
}

/// Trains `vae` in place on depth maps, minimizing
/// `reconstruction + beta·kl`. Parameters are rounded to `f32` at the end.
pub fn train_vae(vae: &mut Vae, train_set: &[NlosDepthMap], config: &TrainConfig) -> Result<Vec<LossRecord>> {
    let xs = train_set
        .iter()
        .map(|m| vae.target_tensor(m))
        .collect::<Result<Vec<_>>>()?;
    let n = xs.len();
    let d = vae.latent_dim;
    let beta = config.beta;
    let seed = config.seed;
    let history = fit(
        vae,
        n,
        config,
        vae_params,
        set_vae_params,
        |v: &Vae, epoch, i| {
            let eps = sample_noise(seed, epoch, i, n, d);
            let g = vae_loss_and_grad(v, &xs[i], &eps, beta)?;
            let grad = [g.encoder, g.decoder].concat();
            Ok((g.reconstruction, g.kl, grad))
        },
        |_, _| {},
    )?;
    vae.encoder.snap_to_f32();
    vae.decoder.snap_to_f32();
    Ok(history)
}

fn compressor_params(c: &Compressor) -> Vec<f64> {
    c.net.params.clone()
}

fn set_compressor_params(c: &mut Compressor, p: &[f64]) {
    c.net.params.copy_from_slice(p);
}

/// Trains `compressor` in place to regress each record's input onto its
/// registered latent.
pub fn train_compressor(
    compressor: &mut Compressor,
    records: &[DatasetRecord],
    registry: &LatentRegistry,
    config: &TrainConfig,
) -> Result<Vec<LossRecord>> {
    train_compressor_with(compressor, records, registry, config, |_, _| {})
}

/// [`train_compressor`] with a callback after every epoch (and before the
/// first, with epoch 0).
pub fn train_compressor_with(
    compressor: &mut Compressor,
    records: &[DatasetRecord],
    registry: &LatentRegistry,
    config: &TrainConfig,
    hook: impl FnMut(usize, &Compressor),
) -> Result<Vec<LossRecord>> {
    if registry.latent_dim != compressor.latent_dim {
        return Err(Error::contract(format!(
            "registry latent size {} differs from compressor output {}",
            registry.latent_dim, compressor.latent_dim
        )));
    }
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let z = registry
            .get(&r.scene_id)
            .ok_or_else(|| Error::MissingLatent(r.scene_id.clone()))?;
        if compressor.input_shape() != [4, r.input.height, r.input.width] {
            return Err(Error::contract(format!(
                "record {} has a 4x{}x{} input, compressor expects {:?}",
                r.scene_id,
                r.input.height,
                r.input.width,
                compressor.input_shape()
            )));
        }
        pairs.push((r.input.to_tensor(), z));
    }
    let history = fit(
        compressor,
        pairs.len(),
        config,
        compressor_params,
        set_compressor_params,
        |c: &Compressor, _, i| {
            let (y, z) = &pairs[i];
            let (loss, grad) = compressor_loss_and_grad(c, y, z)?;
            Ok((loss, 0.0, grad))
        },
        hook,
    )?;
    compressor.net.snap_to_f32();
    Ok(history)
}
