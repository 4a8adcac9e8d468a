use super::*;
use crate::presets::standard_scene;
use crate::scene::FovGrid;
use crate::shapes::{FlatShape, Outline};

fn maps(width: usize, height: usize, depth: impl Fn(usize, usize) -> f64, intensity: f64) -> DetectionMaps {
    let mut m = DetectionMaps::zeros(width, height);
    for i in 0..height {
        for j in 0..width {
            let k = m.index(i, j);
            m.depth[k] = depth(i, j);
            m.intensity[k] = intensity;
        }
    }
    m
}

#[test]
fn constant_maps_stack_in_channel_order() {
    let s = split_and_stack(&maps(80, 64, |_, _| 1.5, 0.25)).unwrap();
    assert_eq!((s.width, s.height), (40, 64));
    for (plane, v) in s.planes.iter().zip([1.5, 0.25, 1.5, 0.25]) {
        assert!(plane.iter().all(|&x| x == v));
    }
}

#[test]
fn last_column_lands_in_right_depth() {
    let s = split_and_stack(&maps(80, 64, |i, j| if i == 5 && j == 79 { 9.0 } else { 1.0 }, 0.0)).unwrap();
    assert_eq!(s.planes[0][5 * 40 + 39], 9.0);
    assert_eq!(s.planes[0].iter().filter(|&&x| x == 9.0).count(), 1);
    assert!(s.planes[2].iter().all(|&x| x == 1.0));
}

#[test]
fn unstack_restores_the_frame() {
    let m = maps(6, 3, |i, j| (i * 10 + j) as f64, 0.0);
    let mut m2 = m.clone();
    m2.intensity = (0..18).map(|k| k as f64 * 0.5).collect();
    let (d, s) = unstack(&split_and_stack(&m2).unwrap());
    assert_eq!(d, m.depth);
    assert_eq!(s, m2.intensity);
}

#[test]
fn odd_width_is_a_contract_violation() {
    assert!(matches!(split_and_stack(&maps(5, 2, |_, _| 0.0, 0.0)), Err(Error::Contract(_))));
}

fn stacked(planes: [Vec<f64>; 4]) -> StackedInput {
    StackedInput {
        width: planes[0].len(),
        height: 1,
        planes,
        norm_stats: [ChannelStats::IDENTITY; 4],
    }
}

#[test]
fn min_max_normalization() {
    let s = stacked([vec![0.0, 1.0, 2.0], vec![3.0; 3], vec![-1.0, 1.0, 0.0], vec![5.0, 7.0, 6.0]]);
    let n = normalize_channels(&s);
    assert_eq!(n.planes[0], vec![0.0, 0.5, 1.0]);
    assert_eq!(n.planes[1], vec![0.0; 3]);
    assert_eq!(n.norm_stats[1].scale, 0.0);
    assert_eq!(n.planes[2], vec![0.0, 1.0, 0.5]);

    let back = denormalize(&n);
    for (a, b) in back.planes.iter().flatten().zip(s.planes.iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn normalizing_twice_changes_nothing() {
    let s = stacked([vec![0.3, 0.9, 0.1], vec![2.0, 4.0, 3.0], vec![1.0, 1.0, 2.0], vec![0.0, 1e-4, 5e-5]]);
    let once = normalize_channels(&s);
    let twice = normalize_channels(&once);
    for (a, b) in once.planes.iter().flatten().zip(twice.planes.iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
    // stats still map back to the raw values
    for (a, b) in denormalize(&twice).planes.iter().flatten().zip(s.planes.iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
}

fn noisy_base() -> StackedInput {
    let plane = |k: usize| (0..1000).map(|i| 0.3 + 0.4 * ((i * (k + 1)) % 7) as f64 / 7.0).collect();
    normalize_channels(&stacked([plane(0), plane(1), plane(2), plane(3)]))
}

#[test]
fn zero_sigma_is_the_identity() {
    let s = noisy_base();
    assert_eq!(add_left_noise(&s, 0.0, 3).unwrap(), s);
}

#[test]
fn noise_never_touches_the_right_channels() {
    let s = noisy_base();
    for sigma in [0.01, 0.5, 3.0] {
        let n = add_left_noise(&s, sigma, 11).unwrap();
        assert_eq!(n.planes[0], s.planes[0]);
        assert_eq!(n.planes[1], s.planes[1]);
        assert!(n.planes[2..].iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn noise_is_seeded_with_the_requested_spread() {
    // mid-range values so clipping at 0.01 never triggers
    let s = stacked([vec![0.5; 1000], vec![0.5; 1000], vec![0.5; 1000], vec![0.5; 1000]]);
    let a = add_left_noise(&s, 0.01, 42).unwrap();
    assert_eq!(a, add_left_noise(&s, 0.01, 42).unwrap());
    assert_ne!(a.planes[2], add_left_noise(&s, 0.01, 43).unwrap().planes[2]);
    let d: Vec<f64> = a.planes[2].iter().map(|v| v - 0.5).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let std = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    assert!((std - 0.01).abs() < 0.05 * 0.01, "sample std {std}");
}

#[test]
fn negative_sigma_is_rejected() {
    assert!(matches!(add_left_noise(&noisy_base(), -0.1, 0), Err(Error::Contract(_))));
}

#[test]
fn split_counts() {
    let (train, test) = split_train_test((0..10).collect::<Vec<_>>(), 0.8, 1).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
    let mut all: Vec<i32> = train.iter().chain(&test).copied().collect();
    all.sort();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(train_count(30_800, 24_600.0 / 30_800.0), 24_600);
    assert!(split_train_test(vec![1, 2], 1.0, 0).is_err());
}

#[test]
fn split_is_seeded() {
    let a = split_train_test((0..50).collect::<Vec<_>>(), 0.7, 5).unwrap();
    assert_eq!(a, split_train_test((0..50).collect::<Vec<_>>(), 0.7, 5).unwrap());
    assert_ne!(a.0, split_train_test((0..50).collect::<Vec<_>>(), 0.7, 6).unwrap().0);
}

fn small_config() -> DatasetConfig {
    let mut base = standard_scene();
    base.grid = FovGrid {
        width: 16,
        height: 12,
        ..FovGrid::default()
    };
    base.wall.patch_resolution = (12, 6);
    DatasetConfig {
        base_scene: base,
        target: TargetSpec {
            width: 16,
            height: 16,
            window: toy::TOY_WINDOW,
        },
        noise_sigma: DEFAULT_NOISE_SIGMA,
        seed: 9,
    }
}

fn small_objects(config: &DatasetConfig) -> Vec<DatasetObject> {
    let plate = FlatShape {
        outline: Outline::Rectangle {
            width: 0.4,
            height: 0.3,
        },
        center: (0.5, 0.0),
        distance: 0.1,
        spacing: 0.1,
        albedo: 1.0,
    };
    vec![
        DatasetObject {
            name: "plate".into(),
            object: Some(plate.build(&config.base_scene.wall).unwrap()),
        },
        DatasetObject {
            name: "empty".into(),
            object: None,
        },
    ]
}

fn placements() -> Vec<Placement> {
    [(0.0, 0.0, 0.1), (0.2, -10.0, 0.05), (-0.2, 5.0, 0.15)]
        .into_iter()
        .map(|(altitude, yaw_deg, distance_to_wall)| Placement {
            altitude,
            yaw_deg,
            distance_to_wall,
        })
        .collect()
}

#[test]
fn dataset_is_the_object_placement_grid() {
    let config = small_config();
    let ds = generate_dataset(&small_objects(&config), &placements(), &config).unwrap();
    assert_eq!(ds.records.len(), 6);
    assert!(ds.skipped.is_empty());
    for (k, r) in ds.records.iter().enumerate() {
        assert_eq!(r.index, k);
        assert_eq!(r.input.width, 8);
        assert_eq!(r.is_empty_scene(), k >= 3);
    }
    assert_eq!(ds.records[4].scene_id, "empty-p001");
    assert!(ds.records[3].target.depth.iter().all(|&d| d == 0.0));
}

#[test]
fn dataset_digests_repeat() {
    let config = small_config();
    let digests = |c: &DatasetConfig| -> Vec<String> {
        generate_dataset(&small_objects(c), &placements(), c)
            .unwrap()
            .records
            .iter()
            .map(|r| record_digest(r).unwrap())
            .collect()
    };
    let first = digests(&config);
    assert_eq!(first, digests(&config));
    let reseeded = DatasetConfig { seed: 10, ..config };
    assert_ne!(first, digests(&reseeded));
}

#[test]
fn bad_placement_is_skipped_not_dropped() {
    let config = small_config();
    let mut ps = placements();
    ps[1].distance_to_wall = -1.0;
    let ds = generate_dataset(&small_objects(&config), &ps, &config).unwrap();
    assert_eq!(ds.records.len(), 5);
    assert_eq!(ds.skipped.len(), 1);
    assert_eq!(ds.skipped[0].index, 1);
    // the empty scene ignores placement, so its record survives
    assert!(ds.records.iter().any(|r| r.index == 4));
}

#[test]
fn channel_swap_changes_the_digest() {
    let config = small_config();
    let ds = generate_dataset(&small_objects(&config), &placements(), &config).unwrap();
    let r = &ds.records[0];
    let mut swapped = r.clone();
    swapped.input.planes.swap(0, 2);
    swapped.input.norm_stats.swap(0, 2);
    assert_ne!(record_digest(r).unwrap(), record_digest(&swapped).unwrap());
}

#[test]
fn records_round_trip_through_bytes() {
    let config = small_config();
    let ds = generate_dataset(&small_objects(&config), &placements(), &config).unwrap();
    for r in &ds.records {
        let bytes = encode_record(&r.input, &r.target).unwrap();
        assert_eq!(&bytes[..8], b"NLOSRC01");
        let (input, target) = decode_record(&bytes).unwrap();
        assert_eq!(input, r.input);
        assert_eq!(target, r.target);
        assert_eq!(encode_record(&input, &target).unwrap(), bytes);
    }
}

#[test]
fn dataset_directory_round_trip() {
    let config = small_config();
    let ds = generate_dataset(&small_objects(&config), &placements(), &config).unwrap();
    let (train, test) = split_train_test(ds.records.clone(), 0.5, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (manifest, digest) = write_dataset(dir.path(), &config, 0.5, &train, &test, &ds.skipped).unwrap();
    assert_eq!(manifest.counts.total, 6);
    assert_eq!(digest.len(), 64);
    let loaded = read_dataset(dir.path()).unwrap();
    assert_eq!(loaded.manifest, manifest);
    assert_eq!(loaded.train.len() + loaded.test.len(), 6);
    for r in loaded.train.iter().chain(&loaded.test) {
        assert_eq!(r, &ds.records[r.index]);
    }

    // a tampered blob is caught by its digest
    let path = dir.path().join(&manifest.records[0].path);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    std::fs::write(&path, bytes).unwrap();
    assert!(read_dataset(dir.path()).is_err());
}
