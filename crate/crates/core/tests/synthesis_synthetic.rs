use omniview::geometry::{ImageDims, Pose, Vec3};
use omniview::metrics::{psnr, ssim};
use omniview::panorama::{DepthPanorama, PixelMask, RgbPanorama};
use omniview::scene::{covisibility_mask, render_rgbd, room_scene, GridSpec};
use omniview::synthesis::{
    gather_samples, synthesize_target_depth, synthesize_view, SynthesisConfig, SynthesisFrame,
    WeightingMode,
};

struct Fixture {
    frames: Vec<SynthesisFrame>,
    truth_rgb: RgbPanorama,
    truth_depth: DepthPanorama,
    target: Pose,
    eyes: Vec<Vec3>,
}

/// 3x3 room grid with the center frame held out; inputs carry exact depth.
fn held_out_fixture(dims: ImageDims) -> Fixture {
    let spec = room_scene();
    let grid = GridSpec::new(dims);
    let center = grid.center_index().unwrap();
    let mut frames = Vec::new();
    let mut eyes = Vec::new();
    let mut truth = None;
    for (k, p) in grid.positions().into_iter().enumerate() {
        let pose = Pose::at(p);
        let (rgb, depth) = render_rgbd(&spec, &pose, dims);
        if k == center {
            truth = Some((rgb, depth, pose));
        } else {
            eyes.push(p);
            frames.push(SynthesisFrame { rgb, depth, pose });
        }
    }
    let (truth_rgb, truth_depth, target) = truth.unwrap();
    Fixture {
        frames,
        truth_rgb,
        truth_depth,
        target,
        eyes,
    }
}

fn eval_mask(fx: &Fixture, holes: &PixelMask) -> PixelMask {
    let dims = fx.truth_rgb.dims();
    covisibility_mask(&room_scene(), &fx.target, &fx.truth_depth, &fx.eyes)
        .and(&holes.not())
        .and(&PixelMask::latitude_band(dims, 60f64.to_radians()))
}

#[test]
fn self_pose_reprojection_is_near_exact() {
    let dims = ImageDims::new(512, 256).unwrap();
    let spec = room_scene();
    let frames: Vec<SynthesisFrame> = GridSpec::new(dims)
        .positions()
        .into_iter()
        .map(|p| {
            let pose = Pose::at(p);
            let (rgb, depth) = render_rgbd(&spec, &pose, dims);
            SynthesisFrame { rgb, depth, pose }
        })
        .collect();
    let target = frames[0].pose;
    let out = synthesize_view(&target, dims, &frames, 1.0, &SynthesisConfig::default()).unwrap();
    let value = psnr(&out.rgb, &frames[0].rgb, Some(&out.holes.not())).unwrap();
    eprintln!("self-pose PSNR {value:.2} dB, holes {:.4}", out.hole_fraction());
    assert!(value >= 40.0, "{value}");
}

#[test]
fn midway_target_depth_tracks_ground_truth() {
    let dims = ImageDims::new(512, 256).unwrap();
    let fx = held_out_fixture(dims);
    let td = synthesize_target_depth(&fx.target, dims, &fx.frames, &SynthesisConfig::default()).unwrap();
    let mask = covisibility_mask(&room_scene(), &fx.target, &fx.truth_depth, &fx.eyes);
    let mut rel: Vec<f32> = td
        .depth
        .depths()
        .iter()
        .zip(fx.truth_depth.depths())
        .zip(mask.bits())
        .filter(|(_, m)| **m)
        .map(|((a, b), _)| (a / b - 1.0).abs())
        .collect();
    rel.sort_by(f32::total_cmp);
    let median = rel[rel.len() / 2];
    eprintln!("target depth median relative error {median:.5}, filled {}", td.filled.count());
    assert!(median <= 0.03, "{median}");
}

#[test]
fn held_out_view_quality_and_weighting_ablation() {
    let dims = ImageDims::new(512, 256).unwrap();
    let fx = held_out_fixture(dims);
    let mut results = Vec::new();
    for mode in [
        WeightingMode::Uniform,
        WeightingMode::DepthOnly,
        WeightingMode::DepthCamera,
        WeightingMode::Full,
    ] {
        let cfg = SynthesisConfig {
            weighting: mode,
            ..Default::default()
        };
        let out = synthesize_view(&fx.target, dims, &fx.frames, 1.0, &cfg).unwrap();
        let mask = eval_mask(&fx, &out.holes);
        let p = psnr(&out.rgb, &fx.truth_rgb, Some(&mask)).unwrap();
        let s = ssim(&out.rgb, &fx.truth_rgb, Some(&mask)).unwrap();
        eprintln!(
            "{mode:?}: PSNR {p:.3} dB, SSIM {s:.4}, holes {:.4}, exhausted {}",
            out.hole_fraction(),
            out.exhausted
        );
        results.push((p, s));
    }
    let (full_p, full_s) = results[3];
    assert!(full_p >= 28.0, "{full_p}");
    assert!(full_s >= 0.90, "{full_s}");
}

/// Two captures on a line with a sphere between the first one and the wall
/// point: the nearest capture sees the sphere, the second sees the wall.
#[test]
fn occluded_nearest_capture_is_unsuitable() {
    let dims = ImageDims::new(256, 128).unwrap();
    let spec = room_scene();
    let target = Pose::at(Vec3::zeros());
    let (_, truth) = render_rgbd(&spec, &target, dims);
    let grid = omniview::geometry::RayGrid::new(dims);
    let eye_a = Vec3::new(0.4, 0.0, 0.0);
    let eye_b = Vec3::new(-0.6, 0.0, 0.0);
    let mut checked = 0;
    for j in (0..dims.height()).step_by(3) {
        for i in (0..dims.width()).step_by(3) {
            let d = truth.get(i, j).unwrap() as f64;
            let p = grid.direction(i, j) * d;
            if spec.is_visible(&p, &eye_a, 1e-4) || !spec.is_visible(&p, &eye_b, 1e-4) {
                continue;
            }
            let frames: Vec<SynthesisFrame> = [eye_a, eye_b]
                .into_iter()
                .map(|e| {
                    let pose = Pose::at(e);
                    let (rgb, depth) = render_rgbd(&spec, &pose, dims);
                    SynthesisFrame { rgb, depth, pose }
                })
                .collect();
            let cfg = SynthesisConfig {
                k: 1,
                ..Default::default()
            };
            let g = gather_samples((i, j), d, &target, dims, &frames, 1.0, &cfg);
            assert_eq!(g.samples.len(), 2);
            assert_eq!(g.samples[0].frame, 0);
            assert!(!g.samples[0].suitable);
            assert!(g.samples[1].suitable);
            assert!(!g.exhausted);
            checked += 1;
            if checked == 3 {
                return;
            }
        }
    }
    panic!("no occluded test point found");
}
