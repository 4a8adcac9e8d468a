use std::f64::consts::PI;

use super::transport::{forward_throughput, return_throughput, TICKS_PER_BIN};
use super::*;
use crate::presets::{multipath_scene, random_small_scene, standard_scene, RandomSceneLimits};
use crate::scene::{FovGrid, LidarPose, NlosObject, WallPatch, WallPlane};
use crate::shapes::single_point;

/// Lidar at the origin looking down `+z` at a wall in the plane `z = 2`.
fn facing_scene(albedo: f64, patches: (usize, usize)) -> SceneConfig {
    SceneConfig {
        lidar: LidarPose::looking(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap(),
        wall: WallPlane {
            point: Vec3::new(0.0, 0.0, 2.0),
            normal: -Vec3::Z,
            albedo,
            extent: (2.0, 2.0),
            patch_resolution: patches,
        },
        object: None,
        grid: FovGrid {
            width: 3,
            height: 3,
            ..FovGrid::default()
        },
        render: RenderParams {
            bin_width: 0.3,
            max_path_length: 20.0,
            min_total_intensity: 0.0,
        },
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn direct_center_pixel_is_wall_distance() {
    let d = trace_direct(&facing_scene(0.7, (1, 1)), 1, 1);
    assert!((d.orthogonal_depth - 2.0).abs() < 1e-12);
    assert!(d.hit_point.is_some());
}

#[test]
fn direct_depth_is_orthogonal_not_radial() {
    let mut wide = facing_scene(0.7, (1, 1));
    wide.wall.extent = (10.0, 10.0);
    let d = trace_ray(&wide, Vec3::new(1.0, 0.0, 1.0).normalized());
    assert!((d.hit_point.unwrap() - Vec3::new(2.0, 0.0, 2.0)).norm() < 1e-12);
    assert!((d.orthogonal_depth - 2.0).abs() < 1e-12);
}

#[test]
fn direct_intensity_at_normal_incidence() {
    let d = trace_direct(&facing_scene(1.0, (1, 1)), 1, 1);
    assert!((d.intensity - 1.0 / (4.0 * PI)).abs() < 1e-15);
    assert!((d.intensity - 0.07958).abs() < 1e-5);
}

#[test]
fn direct_misses_give_the_none_marker() {
    let mut scene = facing_scene(0.7, (1, 1));
    assert_eq!(trace_direct(&scene, 3, 0), DirectReturn::NONE);
    scene.wall.normal = Vec3::Z; // back face toward the Lidar
    assert_eq!(trace_direct(&scene, 1, 1), DirectReturn::NONE);
    let mut behind = facing_scene(0.7, (1, 1));
    behind.wall.point = Vec3::new(0.0, 0.0, -2.0);
    behind.wall.normal = Vec3::Z;
    assert_eq!(trace_direct(&behind, 1, 1), DirectReturn::NONE);
}

/// One object point, one wall patch coinciding with the lit spot: every
/// factor of the only path is written out by hand.
#[test]
fn single_path_lands_in_the_hand_computed_bin() {
    let mut scene = facing_scene(0.8, (1, 1));
    let area_p = 0.01;
    scene.object = Some(single_point(Vec3::new(0.3, 0.0, 1.6), Vec3::Z, 0.6, area_p));
    let w = Vec3::new(0.0, 0.0, 2.0);
    let hist = three_bounce_histogram(&scene, w, &scene.render);

    // |Lw| = 2, |wp| = |pw'| = 0.5, |w'L| = 2; both cosines at w and p are 0.8.
    let fwd = 0.8 * 0.8 * 0.8 * area_p / (PI * 0.25);
    let to_patch = 0.6 * 0.8 * 0.8 * 4.0 / (PI * 0.25);
    let to_lidar = 0.8 * 1.0 * 1.0 * 1.0 / (PI * 4.0);
    let expected = fwd * to_patch * to_lidar;
    let bin = (5.0_f64 / 0.3).floor() as usize;

    let nonzero: Vec<usize> = (0..hist.totals.len()).filter(|&k| hist.totals[k] != 0.0).collect();
    assert_eq!(nonzero, vec![bin]);
    assert!(rel_close(hist.totals[bin], expected, 1e-12), "{} vs {expected}", hist.totals[bin]);
    assert!((hist.bin_center(bin) / 2.0 - 2.475).abs() < 1e-12);
}

#[test]
fn mirrored_paths_share_one_bin() {
    let mut scene = facing_scene(0.8, (1, 1));
    let w = Vec3::new(0.0, 0.0, 2.0);
    scene.object = Some(single_point(Vec3::new(0.3, 0.0, 1.6), Vec3::Z, 0.6, 0.01));
    let one = three_bounce_histogram(&scene, w, &scene.render);
    scene.object = Some(NlosObject {
        points: vec![Vec3::new(0.3, 0.0, 1.6), Vec3::new(-0.3, 0.0, 1.6)],
        normals: vec![Vec3::Z; 2],
        albedos: vec![0.6; 2],
        patch_area: 0.01,
    });
    let two = three_bounce_histogram(&scene, w, &scene.render);
    let bin = one.max_bin().unwrap().0;
    assert_eq!(two.max_bin().unwrap().0, bin);
    assert!(rel_close(two.totals[bin], 2.0 * one.totals[bin], 1e-12));
    assert_eq!(two.totals.iter().filter(|&&t| t != 0.0).count(), 1);
}

#[test]
fn no_object_means_empty_histogram() {
    let scene = facing_scene(0.8, (4, 4));
    let hist = three_bounce_histogram(&scene, Vec3::new(0.0, 0.0, 2.0), &scene.render);
    assert!(hist.totals.iter().all(|&t| t == 0.0));
    assert_eq!(hist.max_bin(), None);
}

#[test]
fn histogram_edges_are_uniform() {
    let hist = PathHistogram::new(&RenderParams::default());
    let edges = hist.bin_edges();
    assert_eq!(edges.len(), hist.totals.len() + 1);
    for pair in edges.windows(2) {
        assert!(pair[1] > pair[0]);
        assert!((pair[1] - pair[0] - hist.bin_width).abs() < 1e-12);
    }
}

fn hist_with(bins: &[(usize, f64)]) -> PathHistogram {
    let params = RenderParams {
        bin_width: 0.5,
        max_path_length: 10.0,
        min_total_intensity: 0.0,
    };
    let mut hist = PathHistogram::new(&params);
    for &(k, t) in bins {
        hist.totals[k] = t;
    }
    hist
}

#[test]
fn resolve_keeps_direct_on_empty_histogram() {
    let direct = DirectReturn {
        orthogonal_depth: 1.2,
        intensity: 0.01,
        hit_point: Some(Vec3::ZERO),
    };
    let r = resolve_pixel(&direct, &hist_with(&[]), &RenderParams::default());
    assert_eq!((r.depth, r.intensity, r.artifact), (1.2, 0.01, false));
}

#[test]
fn resolve_exact_tie_with_direct_keeps_direct() {
    let direct = DirectReturn {
        orthogonal_depth: 1.2,
        intensity: 0.25,
        hit_point: Some(Vec3::ZERO),
    };
    let r = resolve_pixel(&direct, &hist_with(&[(5, 0.25)]), &RenderParams::default());
    assert!(!r.artifact);
    assert_eq!(r.depth, 1.2);
}

#[test]
fn resolve_reports_half_the_bin_center() {
    // bin 7 of width 0.4 is [2.8, 3.2), centered at 3.0
    let params = RenderParams {
        bin_width: 0.4,
        max_path_length: 10.0,
        min_total_intensity: 0.0,
    };
    let mut hist = PathHistogram::new(&params);
    hist.totals[7] = 0.3;
    let direct = DirectReturn {
        orthogonal_depth: 1.2,
        intensity: 0.1,
        hit_point: Some(Vec3::ZERO),
    };
    let r = resolve_pixel(&direct, &hist, &params);
    assert!(r.artifact);
    assert!((r.depth - 1.5).abs() < 1e-12);
    assert_eq!(r.intensity, 0.3);
}

#[test]
fn resolve_prefers_the_shorter_of_tied_bins() {
    let hist = hist_with(&[(9, 0.4), (4, 0.4), (6, 0.1)]);
    assert_eq!(hist.max_bin(), Some((4, 0.4)));
}

#[test]
fn resolve_respects_the_intensity_floor() {
    let params = RenderParams {
        bin_width: 0.5,
        max_path_length: 10.0,
        min_total_intensity: 0.5,
    };
    let direct = DirectReturn {
        orthogonal_depth: 1.0,
        intensity: 0.1,
        hit_point: Some(Vec3::ZERO),
    };
    assert!(!resolve_pixel(&direct, &hist_with(&[(3, 0.4)]), &params).artifact);
    assert!(resolve_pixel(&direct, &hist_with(&[(3, 0.5)]), &params).artifact);
}

#[test]
fn empty_scene_reports_analytic_wall_depths() {
    let scene = standard_scene();
    let maps = render_scene(&scene);
    let d = scene.wall.point.z;
    let yaw = 55f64.to_radians();
    let mut hits = 0;
    for i in 0..scene.grid.height {
        for j in 0..scene.grid.width {
            let idx = maps.index(i, j);
            assert!(!maps.artifact[idx]);
            // closed form: the beam at azimuth a (relative to forward) and
            // elevation e crosses z = d after r = d / (cos e · cos(yaw + a)),
            // and its forward component is r · cos e · cos a.
            let a = ((j as f64 + 0.5) / 80.0 - 0.5) * 70f64.to_radians();
            let e = (0.5 - (i as f64 + 0.5) / 64.0) * 55f64.to_radians();
            let r = d / (e.cos() * (yaw + a).cos());
            let x = r * e.cos() * (yaw + a).sin();
            let y = r * e.sin();
            let inside = (yaw + a).cos() > 0.0 && (-1.0..=5.0).contains(&x) && y.abs() <= 1.5;
            if inside {
                hits += 1;
                let expected = r * e.cos() * a.cos();
                assert!((maps.depth[idx] - expected).abs() < 1e-9, "({i},{j})");
            } else {
                assert_eq!(maps.depth[idx], 0.0);
                assert_eq!(maps.intensity[idx], 0.0);
            }
        }
    }
    assert!(hits > 1000);
}

#[test]
fn swapping_forward_and_return_patches_is_reciprocal() {
    let mut scene = facing_scene(0.75, (2, 1));
    let object = single_point(Vec3::new(0.2, 0.1, 1.7), Vec3::new(0.1, -0.2, 1.0).normalized(), 0.9, 0.02);
    scene.object = Some(object.clone());
    let patches = sample_wall_patches(&scene.wall);
    let (w, w2) = (patches[0], patches[1]);
    assert!((w.center.norm() - w2.center.norm()).abs() < 1e-12);
    assert_eq!(w.area, w2.area);

    let path = |a: &WallPatch, b: &WallPatch| {
        forward_throughput(&scene, a.center, &object, 0) * return_throughput(&scene, &object, 0, b)
    };
    let length = |a: &WallPatch, b: &WallPatch| {
        let p = object.points[0];
        a.center.norm() + a.center.distance(p) + p.distance(b.center) + b.center.norm()
    };
    assert!(rel_close(path(&w, &w2), path(&w2, &w), 1e-12));
    assert!((length(&w, &w2) - length(&w2, &w)).abs() < 1e-12);
}

#[test]
fn scaling_distances_attenuates_by_the_sixth_power() {
    let path = |k: f64| {
        let mut scene = facing_scene(0.75, (1, 1));
        scene.wall.point = scene.wall.point * k;
        let object = single_point(Vec3::new(0.2, 0.1, 1.7) * k, Vec3::Z, 0.9, 0.02);
        scene.object = Some(object.clone());
        let w = Vec3::new(0.1, -0.3, 2.0) * k;
        let w2 = WallPatch {
            center: Vec3::new(-0.4, 0.2, 2.0) * k,
            area: 0.05,
        };
        forward_throughput(&scene, w, &object, 0) * return_throughput(&scene, &object, 0, &w2)
    };
    for k in [1.5, 2.0, 7.0] {
        assert!(rel_close(path(k), path(1.0) * k.powi(-6), 1e-12), "k = {k}");
    }
}

#[test]
fn back_facing_surfels_contribute_nothing() {
    let mut scene = facing_scene(0.8, (3, 3));
    scene.object = Some(single_point(Vec3::new(0.3, 0.0, 1.6), -Vec3::Z, 0.6, 0.01));
    let hist = three_bounce_histogram(&scene, Vec3::new(0.0, 0.0, 2.0), &scene.render);
    assert_eq!(hist.total(), 0.0);
}

#[test]
fn artifact_mask_matches_logged_histograms() {
    for seed in 0..30 {
        let scene = random_small_scene(seed, RandomSceneLimits::default());
        let maps = render_scene(&scene);
        for i in 0..scene.grid.height {
            for j in 0..scene.grid.width {
                let idx = maps.index(i, j);
                let direct = trace_direct(&scene, i, j);
                let expected = pixel_histogram(&scene, i, j)
                    .and_then(|h| h.max_bin())
                    .is_some_and(|(_, t)| {
                        t > direct.intensity && t >= scene.render.min_total_intensity
                    });
                assert_eq!(maps.artifact[idx], expected, "seed {seed} ({i},{j})");
                if maps.artifact[idx] {
                    assert_ne!(maps.depth[idx], direct.orthogonal_depth);
                }
            }
        }
    }
}

#[test]
fn factored_histograms_match_the_naive_loop() {
    for seed in 100..130 {
        let scene = random_small_scene(seed, RandomSceneLimits::default());
        let transport = FactoredTransport::new(&scene);
        for i in 0..scene.grid.height {
            for j in 0..scene.grid.width {
                let Some(hit) = trace_direct(&scene, i, j).hit_point else {
                    continue;
                };
                let fast = transport.histogram(&scene, hit);
                let slow = three_bounce_histogram(&scene, hit, &scene.render);
                for (a, b) in fast.totals.iter().zip(&slow.totals) {
                    assert_eq!(*a == 0.0, *b == 0.0, "seed {seed}");
                    assert!(rel_close(*a, *b, 1e-9), "seed {seed}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn fast_render_equals_bruteforce_on_small_scenes() {
    for seed in 200..220 {
        let scene = random_small_scene(seed, RandomSceneLimits::default());
        let fast = render_scene(&scene);
        let slow = render_scene_bruteforce(&scene);
        assert_eq!(fast.depth, slow.depth, "seed {seed}");
        assert_eq!(fast.artifact, slow.artifact, "seed {seed}");
        for (a, b) in fast.intensity.iter().zip(&slow.intensity) {
            assert!(rel_close(*a, *b, 1e-9));
        }
    }
}

#[test]
fn render_is_thread_count_invariant() {
    let mut scene = multipath_scene(0.1);
    scene.wall.patch_resolution = (60, 30);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| render_scene(&scene))
    };
    let one = run(1);
    assert!(one.artifact_count() > 0);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn ticks_divide_bins_evenly() {
    assert!(TICKS_PER_BIN > 1);
    assert_eq!(transport::bin_of_ticks(TICKS_PER_BIN - 1, 0), 0);
    assert_eq!(transport::bin_of_ticks(TICKS_PER_BIN, 0), 1);
    assert_eq!(transport::bin_of_ticks(7, TICKS_PER_BIN - 7), 1);
}

fn target_scene(points: &[(f64, f64, f64)]) -> SceneConfig {
    let mut scene = facing_scene(0.7, (1, 1));
    scene.wall.extent = (200.0, 200.0);
    if !points.is_empty() {
        scene.object = Some(NlosObject {
            points: points.iter().map(|&(u, v, h)| scene.wall.from_local(u, v, h)).collect(),
            normals: vec![-scene.wall.normal; points.len()],
            albedos: vec![0.5; points.len()],
            patch_area: 1e-3,
        });
    }
    scene
}

const UNIT_WINDOW: TargetWindow = TargetWindow {
    u_min: 0.0,
    u_max: 64.0,
    v_min: 0.0,
    v_max: 64.0,
};

#[test]
fn target_without_object_is_blank() {
    let map = render_target_depth(&target_scene(&[]), 64, 64, &UNIT_WINDOW).unwrap();
    assert_eq!(map.depth, vec![0.0; 64 * 64]);
}

#[test]
fn target_single_point_fills_one_pixel() {
    // row 10 spans v ∈ [53, 54), column 20 spans u ∈ [20, 21)
    let map = render_target_depth(&target_scene(&[(20.5, 53.5, 0.4)]), 64, 64, &UNIT_WINDOW).unwrap();
    assert_eq!(map.depth[10 * 64 + 20], 0.4f32);
    assert_eq!(map.foreground_count(), 1);
}

#[test]
fn target_keeps_the_nearest_point() {
    let pts = [(20.2, 53.5, 0.5), (20.7, 53.2, 0.3)];
    let map = render_target_depth(&target_scene(&pts), 64, 64, &UNIT_WINDOW).unwrap();
    assert_eq!(map.depth[10 * 64 + 20], 0.3f32);
    assert_eq!(map.foreground_count(), 1);
}

#[test]
fn target_rejects_a_degenerate_window() {
    let window = TargetWindow {
        u_max: 0.0,
        ..UNIT_WINDOW
    };
    assert!(matches!(
        render_target_depth(&target_scene(&[]), 64, 64, &window),
        Err(crate::Error::Contract(_))
    ));
}
