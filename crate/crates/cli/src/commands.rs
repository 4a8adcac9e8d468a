use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nlos_core::dataset::{
    decode_record, generate_dataset, normalize_channels, read_dataset, split_and_stack, split_train_test,
    write_dataset, StackedInput,
};
use nlos_core::formats::{decode_detection_maps, depth_preview, encode_detection_maps, encode_pgm16, read_file, write_file};
use nlos_core::metrics::evaluate;
use nlos_core::remapper::{
    build_latent_registry, load_params, save_params, train_compressor, train_vae, write_loss_csv, LatentRegistry,
    ModelFile, Remapper,
};
use nlos_core::scene_file::SceneFile;
use serde::Serialize;

use crate::config::RunConfig;

pub const RESOLVED_CONFIG_NAME: &str = "resolved_config.json";

/// Collects outputs in a hidden sibling of the output directory and moves
/// them into place only when the command succeeds, so a failure leaves no
/// partial outputs behind.
pub struct Staging {
    dir: PathBuf,
    out: PathBuf,
    committed: bool,
}

impl Staging {
    pub fn begin(out: &Path) -> Result<Staging> {
        let name = out
            .file_name()
            .with_context(|| format!("output path {} has no final component", out.display()))?;
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent)?;
        let dir = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(Staging {
            dir,
            out: out.to_path_buf(),
            committed: false,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn commit(mut self) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        for entry in std::fs::read_dir(&self.dir)? {
            let entry = entry?;
            let target = self.out.join(entry.file_name());
            if target.is_dir() {
                std::fs::remove_dir_all(&target)?;
            }
            std::fs::rename(entry.path(), &target)?;
        }
        std::fs::remove_dir(&self.dir)?;
        self.committed = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = std::fs::remove_dir_all(&self.dir);
        }
    }
}

#[derive(Serialize)]
struct ResolvedRun<'a> {
    command: &'a str,
    inputs: BTreeMap<&'a str, String>,
    config: &'a RunConfig,
}

fn write_resolved(stage: &Staging, command: &str, inputs: &[(&'static str, &Path)], config: &RunConfig) -> Result<()> {
    let run = ResolvedRun {
        command,
        inputs: inputs.iter().map(|(k, p)| (*k, p.display().to_string())).collect(),
        config,
    };
    log::debug!("resolved configuration: {}", serde_json::to_string(&run)?);
    write_json(stage, RESOLVED_CONFIG_NAME, &run)
}

fn write_json<T: Serialize>(stage: &Staging, name: &str, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(&stage.path(name), &bytes)?;
    Ok(())
}

#[derive(Serialize)]
struct RenderSummary {
    width: usize,
    height: usize,
    artifact_pixels: usize,
    max_depth_m: f64,
}

pub fn render(scene_path: &Path, out: &Path, config: &RunConfig) -> Result<()> {
    let file = SceneFile::load(scene_path)?;
    let base = scene_path.parent().unwrap_or(Path::new("."));
    let mut scene = file.resolve(base)?;
    config.render.apply(&mut scene.render);
    scene.validate()?;

    let stage = Staging::begin(out)?;
    let maps = nlos_core::renderer::render_scene(&scene);
    let (w, h) = (maps.width, maps.height);
    write_file(&stage.path("detection_maps.nlosdm"), &encode_detection_maps(&maps)?)?;
    write_file(&stage.path("depth.pgm"), &depth_preview(w, h, &maps.depth)?)?;
    let max_intensity = maps.intensity.iter().copied().fold(0.0, f64::max);
    write_file(&stage.path("intensity.pgm"), &encode_pgm16(w, h, &maps.intensity, max_intensity)?)?;
    let artifacts: Vec<f64> = maps.artifact.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    write_file(&stage.path("artifacts.pgm"), &encode_pgm16(w, h, &artifacts, 1.0)?)?;
    let summary = RenderSummary {
        width: w,
        height: h,
        artifact_pixels: maps.artifact_count(),
        max_depth_m: maps.depth.iter().copied().fold(0.0, f64::max),
    };
    log::info!("rendered {w}x{h} frame, artifact count {}", summary.artifact_pixels);
    write_json(&stage, "render_summary.json", &summary)?;
    write_resolved(&stage, "render", &[("scene", scene_path)], config)?;
    stage.commit()?;
    println!("artifact pixels: {}", summary.artifact_pixels);
    Ok(())
}

pub fn dataset(out: &Path, config: &RunConfig) -> Result<()> {
    let mut toy = config.dataset.family.build()?;
    config.render.apply(&mut toy.config.base_scene.render);
    let stage = Staging::begin(out)?;
    let generated = generate_dataset(&toy.objects, &toy.placements, &toy.config)?;
    let (train, test) = split_train_test(generated.records, config.dataset.train_fraction, config.seed)?;
    let (manifest, digest) = write_dataset(
        &stage.dir,
        &toy.config,
        config.dataset.train_fraction,
        &train,
        &test,
        &generated.skipped,
    )?;
    write_resolved(&stage, "dataset", &[], config)?;
    stage.commit()?;
    log::info!(
        "{} records ({} train, {} test, {} skipped)",
        manifest.counts.total,
        manifest.counts.train,
        manifest.counts.test,
        manifest.counts.skipped
    );
    println!("manifest sha256: {digest}");
    Ok(())
}

pub fn train_vae_cmd(dataset_dir: &Path, out: &Path, config: &RunConfig) -> Result<()> {
    let data = read_dataset(dataset_dir)?;
    if data.train.is_empty() {
        bail!(nlos_core::Error::Invalid {
            field: "dataset".into(),
            reason: "no training records".into()
        });
    }
    let mut vae = config.vae.arch.build(config.seed)?;
    let targets: Vec<_> = data.train.iter().map(|r| r.target.clone()).collect();
    let stage = Staging::begin(out)?;
    let history = train_vae(&mut vae, &targets, &config.vae.train)?;
    let registry = build_latent_registry(&vae, &data.train)?;
    save_params(&stage.path("vae.nlosnn"), &ModelFile::Vae(vae))?;
    write_loss_csv(&stage.path("vae_loss.csv"), &history)?;
    registry.save(&stage.path("registry.json"))?;
    write_resolved(&stage, "train vae", &[("dataset", dataset_dir)], config)?;
    stage.commit()?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("vae loss {:.6e} -> {:.6e}", first.total, last.total);
    }
    Ok(())
}

pub fn train_compressor_cmd(
    dataset_dir: &Path,
    registry_path: Option<&Path>,
    vae_path: Option<&Path>,
    out: &Path,
    config: &RunConfig,
) -> Result<()> {
    let data = read_dataset(dataset_dir)?;
    let (registry, built) = match (registry_path, vae_path) {
        (Some(p), _) => (LatentRegistry::load(p)?, false),
        (None, Some(v)) => {
            let vae = load_params(v)?.into_vae()?;
            (build_latent_registry(&vae, &data.train)?, true)
        }
        (None, None) => bail!(nlos_core::Error::Invalid {
            field: "registry".into(),
            reason: "compressor training needs --registry or --vae".into()
        }),
    };
    // The registry fixes the latent size; record it as resolved.
    let mut config = config.clone();
    config.compressor.arch.latent_dim = registry.latent_dim;
    let config = &config;
    let mut compressor = config.compressor.arch.build(config.seed)?;
    let stage = Staging::begin(out)?;
    let history = train_compressor(&mut compressor, &data.train, &registry, &config.compressor.train)?;
    save_params(&stage.path("compressor.nlosnn"), &ModelFile::Compressor(compressor))?;
    write_loss_csv(&stage.path("compressor_loss.csv"), &history)?;
    if built {
        registry.save(&stage.path("registry.json"))?;
    }
    let mut inputs = vec![("dataset", dataset_dir)];
    if let Some(p) = registry_path {
        inputs.push(("registry", p));
    }
    if let Some(p) = vae_path {
        inputs.push(("vae", p));
    }
    write_resolved(&stage, "train compressor", &inputs, config)?;
    stage.commit()?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("compressor loss {:.6e} -> {:.6e}", first.total, last.total);
    }
    Ok(())
}

fn load_remapper(vae: &Path, compressor: &Path) -> Result<Remapper> {
    let vae = load_params(vae)?.into_vae()?;
    let compressor = load_params(compressor)?.into_compressor()?;
    Ok(Remapper::new(vae, compressor)?)
}

/// Accepts a rendered frame (`.nlosdm`, normalized here without noise) or
/// a dataset record (`.nlosrc`, already prepared).
fn load_input(path: &Path) -> Result<StackedInput> {
    let bytes = read_file(path)?;
    if bytes.starts_with(nlos_core::formats::DETECTION_MAPS_MAGIC) {
        let maps = decode_detection_maps(&bytes)?;
        Ok(normalize_channels(&split_and_stack(&maps)?).quantized())
    } else {
        Ok(decode_record(&bytes)?.0)
    }
}

#[derive(Serialize)]
struct ReconstructionFile<'a> {
    width: usize,
    height: usize,
    /// Meters, row-major; 0 is empty.
    depth: &'a [f32],
    latent: &'a [f64],
}

pub fn infer(vae: &Path, compressor: &Path, input: &Path, out: &Path, config: &RunConfig) -> Result<()> {
    let remapper = load_remapper(vae, compressor)?;
    let y = load_input(input)?;
    let rec = remapper.reconstruct(&y)?;
    let latency_ms = rec.elapsed.as_secs_f64() * 1000.0;
    let stage = Staging::begin(out)?;
    write_json(
        &stage,
        "reconstruction.json",
        &ReconstructionFile {
            width: rec.depth.width,
            height: rec.depth.height,
            depth: &rec.depth.depth,
            latent: &rec.latent,
        },
    )?;
    write_file(&stage.path("reconstruction.pgm"), &nlos_core::formats::target_preview(&rec.depth)?)?;
    write_json(&stage, "timing.json", &serde_json::json!({ "latency_ms": latency_ms }))?;
    write_resolved(
        &stage,
        "infer",
        &[("vae", vae), ("compressor", compressor), ("input", input)],
        config,
    )?;
    stage.commit()?;
    println!("latency_ms: {latency_ms:.3}");
    Ok(())
}

pub fn eval(vae: &Path, compressor: &Path, dataset_dir: &Path, out: &Path, config: &RunConfig) -> Result<()> {
    let remapper = load_remapper(vae, compressor)?;
    let data = read_dataset(dataset_dir)?;
    let report = evaluate(&data.test, &remapper, &config.eval)?;
    let stage = Staging::begin(out)?;
    report.write(&stage.dir)?;
    write_resolved(
        &stage,
        "eval",
        &[("vae", vae), ("compressor", compressor), ("dataset", dataset_dir)],
        config,
    )?;
    stage.commit()?;
    let s = &report.summary;
    println!(
        "pooled rmse {:.2} mm, accuracy {:.1}%, false positives {}/{}, failed {}",
        s.pooled_rmse_mm, s.pooled_accuracy_percent, s.false_positives, s.empty_scenes, s.failed
    );
    Ok(())
}
