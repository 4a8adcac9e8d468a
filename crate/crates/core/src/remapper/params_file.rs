//! `NLOSNN01` parameter files: magic, `u32` length of a JSON architecture
//! descriptor, the descriptor, a `u64` weight count, then `f32` weights of
//! each network in descriptor order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Compressor, Vae};
use crate::error::{Error, Result};
use crate::formats::{read_file, write_file, ByteReader, ByteWriter};
use crate::nn::{Network, NetworkSpec};

pub const PARAMS_MAGIC: &[u8; 8] = b"NLOSNN01";
const KIND: &str = "network parameter";
const FORMAT_VERSION: u32 = 1;

/// A trained model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Vae(Vae),
    Compressor(Compressor),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkEntry {
    name: String,
    spec: NetworkSpec,
    param_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    format_version: u32,
    kind: String,
    latent_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<f64>,
    networks: Vec<NetworkEntry>,
}

fn entry(name: &str, net: &Network) -> NetworkEntry {
    NetworkEntry {
        name: name.into(),
        spec: net.spec().clone(),
        param_count: net.param_count(),
    }
}

/// Weights are narrowed to `f32`; models fresh from training are already
/// exactly representable, so they reload bit for bit.
pub fn encode_params(model: &ModelFile) -> Result<Vec<u8>> {
    let (descriptor, nets): (Descriptor, Vec<&Network>) = match model {
        ModelFile::Vae(v) => (
            Descriptor {
                format_version: FORMAT_VERSION,
                kind: "vae".into(),
                latent_dim: v.latent_dim,
                depth_scale: Some(v.depth_scale),
                background: Some(v.background),
                networks: vec![entry("encoder", &v.encoder), entry("decoder", &v.decoder)],
            },
            vec![&v.encoder, &v.decoder],
        ),
        ModelFile::Compressor(c) => (
            Descriptor {
                format_version: FORMAT_VERSION,
                kind: "compressor".into(),
                latent_dim: c.latent_dim,
                depth_scale: None,
                background: None,
                networks: vec![entry("compressor", &c.net)],
            },
            vec![&c.net],
        ),
    };
    let json = serde_json::to_vec(&descriptor)?;
    let mut w = ByteWriter::new(PARAMS_MAGIC);
    w.u32(json.len())?;
    w.bytes(&json);
    let total: usize = nets.iter().map(|n| n.param_count()).sum();
    w.u64(total as u64);
    for n in nets {
        if n.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::contract("refusing to save non-finite weights"));
        }
        w.f32s(n.params.iter().copied());
    }
    Ok(w.finish())
}

/// Parses and cross-checks everything before returning a usable model.
pub fn decode_params(data: &[u8]) -> Result<ModelFile> {
    let mut r = ByteReader::new(KIND, data, PARAMS_MAGIC)?;
    let len = r.u32()?;
    let descriptor: Descriptor = serde_json::from_slice(r.take(len)?)
        .map_err(|e| r.error(format!("architecture descriptor: {e}")))?;
    if descriptor.format_version != FORMAT_VERSION {
        return Err(r.error(format!("unsupported format version {}", descriptor.format_version)));
    }
    let total = r.u64()?;
    let declared: usize = descriptor.networks.iter().map(|n| n.param_count).sum();
    if total != declared as u64 {
        return Err(r.error(format!("{total} weights stored, descriptor declares {declared}")));
    }
    let mut nets = Vec::new();
    for e in descriptor.networks {
        let probe = Network::new(e.spec.clone()).map_err(|err| r.error(format!("{}: {err}", e.name)))?;
        if probe.param_count() != e.param_count {
            return Err(r.error(format!(
                "{} declares {} weights, its architecture has {}",
                e.name,
                e.param_count,
                probe.param_count()
            )));
        }
        let params = r.f32s(e.param_count)?;
        if params.iter().any(|p| !p.is_finite()) {
            return Err(r.error(format!("{} holds non-finite weights", e.name)));
        }
        nets.push((e.name, Network::with_params(e.spec, params)?));
    }
    r.finish()?;
    let bad = |reason: String| Error::format(KIND, reason);
    let names: Vec<&str> = nets.iter().map(|(n, _)| n.as_str()).collect();
    let model = match (descriptor.kind.as_str(), names.as_slice()) {
        ("vae", ["encoder", "decoder"]) => {
            let (Some(scale), Some(background)) = (descriptor.depth_scale, descriptor.background) else {
                return Err(bad("vae without depth_scale or background".into()));
            };
            let decoder = nets.pop().unwrap().1;
            let encoder = nets.pop().unwrap().1;
            let vae = Vae::new(encoder, decoder, scale, background).map_err(|e| bad(e.to_string()))?;
            ModelFile::Vae(vae)
        }
        ("compressor", ["compressor"]) => {
            let c = Compressor::new(nets.pop().unwrap().1).map_err(|e| bad(e.to_string()))?;
            ModelFile::Compressor(c)
        }
        (kind, names) => return Err(bad(format!("unexpected {kind} model with networks {names:?}"))),
    };
    let latent = match &model {
        ModelFile::Vae(v) => v.latent_dim,
        ModelFile::Compressor(c) => c.latent_dim,
    };
    if latent != descriptor.latent_dim {
        return Err(bad(format!(
            "descriptor latent size {} but networks use {latent}",
            descriptor.latent_dim
        )));
    }
    Ok(model)
}

pub fn save_params(path: &Path, model: &ModelFile) -> Result<()> {
    write_file(path, &encode_params(model)?)
}

pub fn load_params(path: &Path) -> Result<ModelFile> {
    decode_params(&read_file(path)?)
}

impl ModelFile {
    pub fn into_vae(self) -> Result<Vae> {
        match self {
            ModelFile::Vae(v) => Ok(v),
            ModelFile::Compressor(_) => Err(Error::format(KIND, "expected a vae, found a compressor")),
        }
    }

    pub fn into_compressor(self) -> Result<Compressor> {
        match self {
            ModelFile::Compressor(c) => Ok(c),
            ModelFile::Vae(_) => Err(Error::format(KIND, "expected a compressor, found a vae")),
        }
    }
}
