#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Mutex;

static LOCK: Mutex<()> = Mutex::new(());

/// Synthetic room fixture under the cargo test scratch directory, rendered
/// once per test binary and name.
pub fn fixture(name: &str, width: usize) -> PathBuf {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let manifest = dir.join("manifest.json");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    omniview_cli::commands::make_fixture("room", &dir, width, 1, true).unwrap();
    manifest
}

pub fn omniview(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omniview"))
        .args(args)
        .output()
        .expect("running the omniview binary")
}

pub fn pose_arg(p: [f64; 3]) -> String {
    format!("{},{},{}", p[0], p[1], p[2])
}
