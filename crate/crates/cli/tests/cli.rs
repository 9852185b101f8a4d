mod common;

use std::path::Path;

use common::{fixture, omniview, pose_arg};
use omniview::metrics::psnr;
use omniview::panorama::{load_manifest, read_rgb_png};

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_manifest_exits_with_code_two() {
    let missing = Path::new(env!("CARGO_TARGET_TMPDIR")).join("nowhere/manifest.json");
    for cmd in ["refine", "estimate-depth"] {
        let out = omniview(&[cmd, "--manifest", path_str(&missing)]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(path_str(&missing)), "{stderr}");
    }
}

#[test]
fn unknown_flag_is_rejected() {
    let out = omniview(&["refine", "--bogus"]);
    assert!(!out.status.success());
    let out = omniview(&["frobnicate"]);
    assert!(!out.status.success());
}

#[test]
fn malformed_pose_is_reported() {
    let manifest = fixture("cli-pose", 64);
    let out = omniview(&["synthesize", "--manifest", path_str(&manifest), "--pose", "1,2", "--out", "x.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("3 or 6"));
}

#[test]
fn offline_pipeline_end_to_end() {
    let manifest = fixture("cli-pipeline", 256);
    let dir = manifest.parent().unwrap();
    let m = path_str(&manifest);

    let out = omniview(&["estimate-depth", "--manifest", m, "--hypotheses", "24"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = omniview(&["refine", "--manifest", m]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let loaded = load_manifest(&manifest).unwrap();
    for f in loaded.frames.iter().filter(|f| !f.held_out) {
        assert!(dir.join(f.dense_depth_path.as_ref().unwrap()).exists());
        assert!(dir.join(format!("dense/{}.json", f.id)).exists());
        assert!(dir.join(f.refined_depth_path.as_ref().unwrap()).exists());
    }
    assert!(loaded.frames.iter().filter(|f| f.held_out).all(|f| f.refined_depth_path.is_none()));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("refined/report.json")).unwrap()).unwrap();
    assert_eq!(report["iterations"].as_array().unwrap().len(), 3);

    // self-reprojection at a capture position with exact depth
    let f0 = &loaded.frames[0];
    let p = f0.pose.position();
    let png = dir.join("self.png");
    let out = omniview(&[
        "synthesize", "--manifest", m, "--pose", &pose_arg([p.x, p.y, p.z]), "--out", path_str(&png),
        "--depth-source", "truth", "--mask-out", path_str(&dir.join("self-mask.png")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value = psnr(&read_rgb_png(&png).unwrap(), &read_rgb_png(dir.join(&f0.rgb_path)).unwrap(), None).unwrap();
    assert!(value >= 40.0, "{value}");

    // held-out center from refined depth, then evaluate
    let center = loaded.frames.iter().find(|f| f.held_out).unwrap();
    let novel = dir.join("novel.png");
    let depth = dir.join("novel.pfm");
    let mask = dir.join("novel-mask.png");
    let out = omniview(&[
        "synthesize", "--manifest", m, "--pose", "0,0,0,0,0,0", "--out", path_str(&novel),
        "--depth-out", path_str(&depth), "--mask-out", path_str(&mask),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(depth.exists());
    let out = omniview(&[
        "evaluate", "--pred", path_str(&novel), "--truth", path_str(&dir.join(&center.rgb_path)),
        "--mask", path_str(&mask),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    assert_eq!(line.lines().count(), 1);
    let report: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert!(report["psnr"].as_f64().unwrap() > 20.0, "{report}");
    assert!(report["ssim"].as_f64().unwrap() > 0.5, "{report}");
    assert!(report["lpips"].is_null());
}

#[test]
fn evaluate_identical_images_reports_infinite_psnr() {
    let manifest = fixture("cli-evaluate", 64);
    let img = manifest.parent().unwrap().join("rgb/f00.png");
    let out = omniview(&["evaluate", "--pred", path_str(&img), "--truth", path_str(&img), "--max-latitude", "90"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["psnr"], "inf");
    assert_eq!(report["ssim"], 1.0);
    let out = omniview(&["evaluate", "--pred", "missing.png", "--truth", path_str(&img)]);
    assert_eq!(out.status.code(), Some(2));
}
