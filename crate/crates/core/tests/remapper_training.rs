use nlos_core::dataset::{ChannelStats, DatasetRecord, StackedInput};
use nlos_core::nn::OptimizerKind;
use nlos_core::remapper::*;
use nlos_core::renderer::NlosDepthMap;
use nlos_core::scene::Placement;
use nlos_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random filled rectangles at varied depths, 16×16.
fn blob_maps(n: usize, seed: u64) -> Vec<NlosDepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut m = NlosDepthMap::zeros(16, 16);
            let (w, h) = (rng.random_range(3..8), rng.random_range(3..8));
            let (x0, y0) = (rng.random_range(0..16 - w), rng.random_range(0..16 - h));
            let d = rng.random_range(0.05f32..0.4);
            for y in y0..y0 + h {
                for x in x0..x0 + w {
                    m.depth[y * 16 + x] = d;
                }
            }
            m
        })
        .collect()
}

fn small_vae_arch() -> VaeArch {
    VaeArch {
        height: 16,
        width: 16,
        channels: vec![8, 16],
        latent_dim: 8,
        ..VaeArch::default()
    }
}

fn small_compressor_arch(latent_dim: usize) -> CompressorArch {
    CompressorArch {
        height: 8,
        width: 4,
        channels: vec![8],
        hidden: 32,
        latent_dim,
        ..CompressorArch::default()
    }
}

fn config(epochs: usize, beta: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: 1e-3,
        beta,
        optimizer: OptimizerKind::ADAM,
        weight_decay: 0.0,
        seed: 5,
    }
}

fn record(index: usize, scene_id: &str, planes: [Vec<f64>; 4], target: NlosDepthMap) -> DatasetRecord {
    DatasetRecord {
        index,
        scene_id: scene_id.into(),
        placement: Placement {
            altitude: 0.0,
            yaw_deg: 0.0,
            distance_to_wall: 0.1,
        },
        input: StackedInput {
            width: 4,
            height: 8,
            planes,
            norm_stats: [ChannelStats::IDENTITY; 4],
        },
        target,
        artifact_pixels: 0,
    }
}

fn random_planes(rng: &mut ChaCha8Rng) -> [Vec<f64>; 4] {
    std::array::from_fn(|_| (0..32).map(|_| rng.random_range(0.0..1.0)).collect())
}

/// Records whose targets are 16×16 blob maps, with random 4×8×4 inputs.
fn toy_records(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    blob_maps(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, t)| record(i, &format!("s{i:03}"), random_planes(&mut rng), t))
        .collect()
}

#[test]
fn vae_overfits_a_single_image() {
    let maps = blob_maps(1, 3);
    let mut vae = small_vae_arch().build(1).unwrap();
    train_vae(&mut vae, &maps, &config(300, 0.0)).unwrap();
    let x = vae.target_tensor(&maps[0]).unwrap();
    let back = vae.decode(&vae.encode(&x).unwrap().mu).unwrap();
    let mse = reconstruction_loss(&x, &back).unwrap();
    assert!(mse < 1e-3, "mse {mse}");
}

#[test]
fn vae_smoke_bound_on_fifty_images() {
    let maps = blob_maps(50, 4);
    let mut vae = small_vae_arch().build(2).unwrap();
    let hist = train_vae(&mut vae, &maps, &config(200, 1e-5)).unwrap();
    assert_eq!(hist.len(), 201);
    let (first, last) = (hist[0].reconstruction, hist[200].reconstruction);
    assert!(last < 0.25 * first, "{first} -> {last}");
}

#[test]
fn beta_zero_reconstructs_at_least_as_well() {
    let maps = blob_maps(30, 6);
    let run = |beta| {
        let mut vae = small_vae_arch().build(3).unwrap();
        train_vae(&mut vae, &maps, &config(60, beta)).unwrap()
    };
    let plain = run(0.0);
    let weighted = run(0.5);
    let (a, b) = (plain.last().unwrap(), weighted.last().unwrap());
    assert!(a.reconstruction <= b.reconstruction, "{a:?} vs {b:?}");
    assert!(a.kl >= b.kl, "{a:?} vs {b:?}");
    assert_eq!(a.total, a.reconstruction);
}

#[test]
fn training_is_deterministic_and_thread_invariant() {
    let maps = blob_maps(12, 7);
    let train = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut vae = small_vae_arch().build(9).unwrap();
            let hist = train_vae(&mut vae, &maps, &config(5, 0.5)).unwrap();
            (vae, hist)
        })
    };
    let (a, ha) = train(1);
    let (b, hb) = train(3);
    assert_eq!(a, b);
    assert_eq!(ha, hb);
    // stored precision
    assert!(a.decoder.params.iter().all(|&p| p == p as f32 as f64));
}

#[test]
fn nan_targets_abort_with_a_diagnostic() {
    let mut maps = blob_maps(4, 8);
    maps[2].depth[5] = f32::NAN;
    let mut vae = small_vae_arch().build(1).unwrap();
    match train_vae(&mut vae, &maps, &config(3, 0.5)) {
        Err(Error::NonFinite { epoch, .. }) => assert_eq!(epoch, 0),
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
    let mut c = small_compressor_arch(2).build(1).unwrap();
    let huge = TrainConfig {
        learning_rate: 1e300,
        ..config(3, 0.0)
    };
    let records = toy_records(4, 1);
    let mut reg = LatentRegistry::new(2);
    for r in &records {
        reg.insert(&r.scene_id, vec![1.0, -1.0]).unwrap();
    }
    assert!(matches!(
        train_compressor(&mut c, &records, &reg, &huge),
        Err(Error::NonFinite { .. })
    ));
}

#[test]
fn registry_holds_posterior_means() {
    let mut records = toy_records(6, 2);
    records[5].target = records[1].target.clone();
    let vae = small_vae_arch().build(4).unwrap();
    let reg = build_latent_registry(&vae, &records).unwrap();
    assert_eq!(reg.len(), records.len());
    assert_eq!(reg, build_latent_registry(&vae, &records).unwrap());
    assert_eq!(reg.get("s001"), reg.get("s005"));
    let mu = vae.encode(&vae.target_tensor(&records[3].target).unwrap()).unwrap().mu;
    assert_eq!(reg.get("s003").unwrap(), &mu);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("registry.json");
    reg.save(&path).unwrap();
    assert_eq!(LatentRegistry::load(&path).unwrap(), reg);
}

#[test]
fn missing_latent_names_the_scene() {
    let records = toy_records(3, 3);
    let vae = small_vae_arch().build(4).unwrap();
    let mut reg = build_latent_registry(&vae, &records[..2]).unwrap();
    let mut c = small_compressor_arch(8).build(1).unwrap();
    match train_compressor(&mut c, &records, &reg, &config(1, 0.0)) {
        Err(Error::MissingLatent(id)) => assert_eq!(id, "s002"),
        other => panic!("{other:?}"),
    }
    reg.latent_dim = 3;
    assert!(matches!(
        train_compressor(&mut c, &records[..2], &reg, &config(1, 0.0)),
        Err(Error::Contract(_))
    ));
}

#[test]
fn compressor_smoke_bound_on_fifty_records() {
    let records = toy_records(50, 11);
    let vae = small_vae_arch().build(6).unwrap();
    let reg = build_latent_registry(&vae, &records).unwrap();
    let mut c = small_compressor_arch(8).build(2).unwrap();
    let hist = train_compressor(&mut c, &records, &reg, &config(200, 0.0)).unwrap();
    let (first, last) = (hist[0].total, hist.last().unwrap().total);
    assert!(last < 0.25 * first, "{first} -> {last}");
    assert!(hist.iter().all(|h| h.kl == 0.0));
}

/// Noisy copies of one reading share a latent. Starting from a compressor
/// fitted to the clean readings, and so sensitive to its input, training on
/// the copies should pull their predictions together.
#[test]
fn noisy_duplicates_converge_to_a_shared_latent() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (groups, copies) = (4, 6);
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut reg = LatentRegistry::new(4);
    for g in 0..groups {
        let base = random_planes(&mut rng);
        let id = format!("g{g}");
        reg.insert(&id, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        clean.push(record(g, &id, base.clone(), NlosDepthMap::zeros(16, 16)));
        for _ in 0..copies {
            let planes = base
                .clone()
                .map(|p| p.iter().map(|v| v + rng.random_range(-0.15..0.15)).collect());
            noisy.push(record(noisy.len(), &id, planes, NlosDepthMap::zeros(16, 16)));
        }
    }
    let mut c = small_compressor_arch(4).build(3).unwrap();
    train_compressor(&mut c, &clean, &reg, &config(300, 0.0)).unwrap();

    let mut spreads = Vec::new();
    let cfg = TrainConfig {
        learning_rate: 3e-4,
        ..config(300, 0.0)
    };
    train_compressor_with(&mut c, &noisy, &reg, &cfg, |epoch, c| {
        if epoch % 20 != 0 {
            return;
        }
        let mut spread = 0.0;
        for g in noisy.chunks(copies) {
            let preds: Vec<Vec<f64>> = g.iter().map(|r| c.compress(&r.input).unwrap()).collect();
            for a in 0..copies {
                for b in a + 1..copies {
                    spread += preds[a].iter().zip(&preds[b]).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                }
            }
        }
        spreads.push(spread);
    })
    .unwrap();
    let shrinking = spreads.windows(2).filter(|w| w[1] < w[0]).count();
    let steps = spreads.len() - 1;
    assert!(shrinking as f64 >= 0.9 * steps as f64, "{spreads:?}");
    assert!(spreads.last().unwrap() < &(0.5 * spreads[0]), "{spreads:?}");
}

#[test]
fn reconstruct_is_exactly_decode_after_compress() {
    let records = toy_records(3, 12);
    let vae = small_vae_arch().build(7).unwrap();
    let c = small_compressor_arch(8).build(8).unwrap();
    let remapper = Remapper::new(vae.clone(), c.clone()).unwrap();
    for r in &records {
        let out = remapper.reconstruct(&r.input).unwrap();
        let manual = vae.to_depth_map(&vae.decode(&c.compress(&r.input).unwrap()).unwrap());
        assert_eq!(out.depth, manual);
        assert_eq!(out.latent, c.compress(&r.input).unwrap());
    }
}

#[test]
fn trained_models_reload_bit_exactly() {
    let maps = blob_maps(4, 13);
    let mut vae = small_vae_arch().build(1).unwrap();
    train_vae(&mut vae, &maps, &config(2, 0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vae.nlosnn");
    save_params(&path, &ModelFile::Vae(vae.clone())).unwrap();
    let back = load_params(&path).unwrap().into_vae().unwrap();
    assert_eq!(back, vae);
    let again = dir.path().join("again.nlosnn");
    save_params(&again, &ModelFile::Vae(back)).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn loss_csv_lists_every_epoch() {
    let maps = blob_maps(4, 14);
    let mut vae = small_vae_arch().build(1).unwrap();
    let hist = train_vae(&mut vae, &maps, &config(3, 0.5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loss.csv");
    write_loss_csv(&path, &hist).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 5);
    for (line, h) in text.lines().skip(1).zip(&hist) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[0] as usize, h.epoch);
        assert!((f[3] - (f[1] + 0.5 * f[2])).abs() <= 1e-12 * f[3].abs().max(1.0));
    }
}
