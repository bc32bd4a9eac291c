#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tagalign::report::{TagEntry, TagReport};
use tagalign_core::CloudLabel;

pub const BIN: &str = env!("CARGO_BIN_EXE_tagalign");

pub fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("TAGALIGN_LOG")
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a scene config and runs `synth`, returning the scene directory.
pub fn synth(root: &Path, name: &str, toml: &str) -> PathBuf {
    let cfg = root.join(format!("{name}.toml"));
    std::fs::write(&cfg, toml).unwrap();
    let dir = root.join(name);
    let out = run(&["synth", "--config", s(&cfg), "--out", s(&dir)]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    dir
}

pub fn small_scene(root: &Path, name: &str, seed: u64) -> PathBuf {
    synth(root, name, &format!("seed = {seed}\nn_background_points = 2000\n"))
}

pub fn tag_report(cloud: CloudLabel, tags: &[(&str, [f64; 3])]) -> TagReport {
    TagReport {
        cloud,
        epsilon: 0.01,
        min_support: 4,
        tags: tags
            .iter()
            .map(|(id, c)| TagEntry {
                tag_id: id.to_string(),
                cloud,
                coordinate: *c,
                support: 4,
            })
            .collect(),
        misses: vec![],
        coincident: vec![],
        join: None,
    }
}

/// Recursively lists files with their contents, relative to `dir`.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push((p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}
