use std::f64::consts::{FRAC_PI_2, PI};

use omniview::geometry::{
    angles_to_pixel, cartesian_to_spherical, continuous_pixel_to_angles, reproject, spherical_to_cartesian,
    ImageDims, Pose, RayGrid, SphericalCoord, Transfer, Vec3,
};
use omniview::metrics::{ms_ssim, psnr, ssim};
use omniview::panorama::{k_nearest, read_depth_pfm, write_depth_pfm, DepthPanorama, RgbPanorama, MISSING};
use omniview::refine::{forward_project, raymarch_correct, DepthView};
use omniview::synthesis::{blend, weight_angle, weight_camera, weight_depth, BlendSample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(5.0), -PI..PI, -1.5f64..1.5, -PI..PI)
        .prop_map(|(p, y, pi, r)| Pose::from_yaw_pitch_roll(p, y, pi, r).unwrap())
}

fn coord() -> impl Strategy<Value = SphericalCoord> {
    (-PI..PI, -FRAC_PI_2 + 1e-6..FRAC_PI_2 - 1e-6, 0.05f64..50.0)
        .prop_map(|(t, p, d)| SphericalCoord::new(t, p, d).unwrap())
}

fn assert_same_coord(a: &SphericalCoord, b: &SphericalCoord, tol: f64) {
    assert!(angle_gap(a.theta, b.theta) < tol, "theta {} vs {}", a.theta, b.theta);
    assert!((a.phi - b.phi).abs() < tol, "phi {} vs {}", a.phi, b.phi);
    assert!((a.d - b.d).abs() < tol * a.d.max(1.0), "d {} vs {}", a.d, b.d);
}

fn small_dims() -> ImageDims {
    ImageDims::new(24, 12).unwrap()
}

fn depth_map(seed: u64, dims: ImageDims, missing: f64) -> DepthPanorama {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let depths = (0..dims.pixel_count())
        .map(|_| if rng.gen_bool(missing) { MISSING } else { rng.gen_range(0.3f32..6.0) })
        .collect();
    DepthPanorama::new(dims, depths).unwrap()
}

fn image(seed: u64, dims: ImageDims, lo: f32, hi: f32) -> RgbPanorama {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    RgbPanorama::from_fn(dims, |_, _| [rng.gen_range(lo..hi), rng.gen_range(lo..hi), rng.gen_range(lo..hi)])
}

fn samples() -> impl Strategy<Value = Vec<BlendSample>> {
    prop::collection::vec(
        ([0.0f32..1.0, 0.0f32..1.0, 0.0f32..1.0], 0.0f64..10.0, any::<bool>()),
        1..8,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(frame, (color, w, suitable))| BlendSample {
                color,
                w_d: 1.0,
                w_cam: 1.0,
                w_ang: 1.0,
                w,
                frame,
                suitable,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn spherical_round_trip(s in coord()) {
        let v = spherical_to_cartesian(&s);
        prop_assert!((v.norm() - s.d).abs() <= 1e-12 * s.d);
        assert_same_coord(&s, &cartesian_to_spherical(&v).unwrap(), 1e-9);
    }

    #[test]
    fn reproject_is_an_involution(s in coord(), a in pose(), b in pose()) {
        let there = reproject(&s, &a, &b);
        prop_assume!(there.as_ref().is_ok_and(|t| t.d > 1e-3));
        let back = reproject(&there.unwrap(), &b, &a).unwrap();
        assert_same_coord(&s, &back, 1e-9);
        assert_same_coord(&s, &reproject(&s, &a, &a).unwrap(), 1e-9);
    }

    #[test]
    fn reprojected_distance_is_rotation_invariant(
        s in coord(), a in pose(), b in pose(), yaw in -PI..PI, pitch in -1.5f64..1.5, t in vec3(3.0),
    ) {
        let g = *Pose::from_yaw_pitch_roll(Vec3::zeros(), yaw, pitch, 0.3).unwrap().rotation();
        let (ga, gb) = (a.transformed(&g, &t).unwrap(), b.transformed(&g, &t).unwrap());
        let (Ok(x), Ok(y)) = (reproject(&s, &a, &b), reproject(&s, &ga, &gb)) else {
            return Err(TestCaseError::reject("degenerate"));
        };
        prop_assert!((x.d - y.d).abs() <= 1e-9 * x.d.max(1.0));
    }

    #[test]
    fn pixel_and_angle_maps_are_inverse(x in 0.0f64..511.999, y in -0.5f64..255.5) {
        let dims = ImageDims::new(512, 256).unwrap();
        let (theta, phi) = continuous_pixel_to_angles(x, y, dims);
        let (x2, y2) = angles_to_pixel(theta, phi, dims).unwrap();
        prop_assert!((x - x2).abs() < 1e-9 || (x - x2).abs() > 511.0, "{x} vs {x2}");
        prop_assert!((y - y2).abs() < 1e-9);
    }

    #[test]
    fn k_nearest_is_sorted(points in prop::collection::vec(vec3(10.0), 1..30), target in vec3(10.0), k in 1usize..40) {
        let out = k_nearest(&points, &target, k);
        prop_assert_eq!(out.len(), k.min(points.len()));
        prop_assert!(out.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn blend_stays_in_the_convex_hull(s in samples()) {
        let any = s.iter().any(|x| x.suitable);
        let used: Vec<&BlendSample> = s.iter().filter(|x| x.suitable || !any).collect();
        match blend(&s) {
            None => prop_assert!(used.iter().all(|x| x.w == 0.0)),
            Some(c) => {
                let used: Vec<_> = used.into_iter().filter(|x| x.w > 0.0).collect();
                for ch in 0..3 {
                    let lo = used.iter().map(|x| x.color[ch]).fold(f32::INFINITY, f32::min);
                    let hi = used.iter().map(|x| x.color[ch]).fold(f32::NEG_INFINITY, f32::max);
                    prop_assert!(c[ch] >= lo - 1e-6 && c[ch] <= hi + 1e-6, "{} not in [{lo}, {hi}]", c[ch]);
                }
            }
        }
    }

    #[test]
    fn blend_ignores_uniform_weight_scale(s in samples(), scale in 1e-3f64..1e3) {
        let scaled: Vec<BlendSample> = s.iter().map(|x| BlendSample { w: x.w * scale, ..*x }).collect();
        match (blend(&s), blend(&scaled)) {
            (None, None) => {}
            (Some(a), Some(b)) => {
                for ch in 0..3 {
                    prop_assert!((a[ch] - b[ch]).abs() <= 1e-5, "{a:?} vs {b:?}");
                }
            }
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn weight_ranges(d_rep in 0.01f64..100.0, d in 0.01f64..100.0, t in vec3(10.0), v in vec3(10.0), s in 0.1f64..100.0) {
        let w_d = weight_depth(d_rep, d);
        prop_assert!(w_d > 0.0 && w_d <= 1.0);
        prop_assert!(weight_depth(d, d) == 1.0);
        let w_ang = weight_angle(&t, &v);
        prop_assert!((0.0..=PI).contains(&w_ang));
        let w_cam = weight_camera(&t, s);
        prop_assert!(w_cam > 0.0 && w_cam.is_finite());
    }

    #[test]
    fn pfm_round_trip_is_bitwise(seed in any::<u64>(), missing in 0.0f64..0.5) {
        let dims = small_dims();
        let d = depth_map(seed, dims, missing);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        write_depth_pfm(&d, &path).unwrap();
        let back = read_depth_pfm(&path).unwrap();
        prop_assert_eq!(back.dims(), dims);
        for (a, b) in d.depths().iter().zip(back.depths()) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raymarch_never_decreases_depth(seeds in prop::array::uniform4(any::<u64>()), poses in prop::array::uniform4(vec3(1.0))) {
        let dims = small_dims();
        let maps: Vec<DepthPanorama> = seeds.iter().map(|s| depth_map(*s, dims, 0.1)).collect();
        let poses: Vec<Pose> = poses.iter().map(|p| Pose::at(*p)).collect();
        let views: Vec<DepthView> = (1..4).map(|k| DepthView { depth: &maps[k], pose: &poses[k] }).collect();
        let out = raymarch_correct(&maps[0], &poses[0], &views, 3, 0.05, 200);
        for (after, before) in out.depth.depths().iter().zip(maps[0].depths()) {
            prop_assert!(before.is_nan() && after.is_nan() || after >= before, "{before} -> {after}");
        }
    }

    #[test]
    fn forward_projection_keeps_the_nearest_splat(seeds in prop::array::uniform3(any::<u64>()), poses in prop::array::uniform3(vec3(1.0)), target in pose()) {
        let dims = small_dims();
        let maps: Vec<DepthPanorama> = seeds.iter().map(|s| depth_map(*s, dims, 0.2)).collect();
        let poses: Vec<Pose> = poses.iter().map(|p| Pose::at(*p)).collect();
        let views: Vec<DepthView> = (0..3).map(|k| DepthView { depth: &maps[k], pose: &poses[k] }).collect();
        let out = forward_project(&target, dims, &views, 3);
        let grid = RayGrid::new(dims);
        let mut hit = vec![false; dims.pixel_count()];
        for v in &views {
            let transfer = Transfer::between(v.pose, &target);
            for j in 0..dims.height() {
                for i in 0..dims.width() {
                    let Some(d) = v.depth.get(i, j) else { continue };
                    let Some(p) = transfer.project(&grid.direction(i, j), d as f64, dims) else { continue };
                    let (ti, tj) = dims.nearest_pixel(p.x, p.y);
                    let k = dims.index(ti, tj);
                    hit[k] = true;
                    let written = out.depths()[k];
                    prop_assert!(written <= p.depth as f32 * (1.0 + 1e-6), "{written} > {}", p.depth);
                }
            }
        }
        for (k, h) in hit.iter().enumerate() {
            prop_assert_eq!(*h, out.depths()[k].is_finite());
        }
    }

    #[test]
    fn ssim_is_symmetric_and_one_only_on_identity(a in any::<u64>(), b in any::<u64>(), amp in 0.05f32..0.5) {
        let dims = ImageDims::new(32, 16).unwrap();
        let x = image(a, dims, 0.0, 1.0);
        let noise = image(b, dims, -amp, amp);
        let y = RgbPanorama::from_fn(dims, |i, j| {
            let (p, n) = (x.get(i, j), noise.get(i, j));
            [0, 1, 2].map(|c| (p[c] + n[c]).clamp(0.0, 1.0))
        });
        let s_xy = ssim(&x, &y, None).unwrap();
        prop_assert!((s_xy - ssim(&y, &x, None).unwrap()).abs() <= 1e-12);
        prop_assert!(s_xy < 1.0 && s_xy >= -1.0);
        prop_assert!((ssim(&x, &x, None).unwrap() - 1.0).abs() <= 1e-12);
        let big = ImageDims::new(64, 32).unwrap();
        let (u, v) = (image(a, big, 0.0, 1.0), image(b, big, 0.0, 1.0));
        let m = ms_ssim(&u, &v, None).unwrap().value;
        prop_assert!((m - ms_ssim(&v, &u, None).unwrap().value).abs() <= 1e-12);
        prop_assert!((0.0..1.0).contains(&m));
        prop_assert!((ms_ssim(&u, &u, None).unwrap().value - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let dims = ImageDims::new(64, 32).unwrap();
    let base = image(1, dims, 0.3, 0.7);
    let noise = image(2, dims, -1.0, 1.0);
    let mut last = f64::INFINITY;
    assert_eq!(psnr(&base, &base, None).unwrap(), f64::INFINITY);
    for level in 1..=10 {
        let amp = 0.025 * level as f32;
        let noisy = RgbPanorama::from_fn(dims, |i, j| {
            let (p, n) = (base.get(i, j), noise.get(i, j));
            [0, 1, 2].map(|c| p[c] + amp * n[c])
        });
        let value = psnr(&noisy, &base, None).unwrap();
        assert!(value < last, "level {level}: {value} after {last}");
        last = value;
    }
}
