use std::path::Path;
use std::process::{Command, Output};

fn smvslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smvslab"))
        .args(args)
        .env_remove("SMVSLAB_SEED")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn scene_then_smvs_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let out = smvslab(&["scene", "--scene", "open-wall", "--length", "4", "--seed", "3", "--out", p(&ds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ds.join("000000.xyz").exists() && ds.join("groundtruth.txt").exists());

    let before = tree(&ds);
    let prof = dir.path().join("prof");
    let out = smvslab(&["smvs", "--dataset", p(&ds), "--out", p(&prof), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(tree(&ds), before, "input dataset was modified");
    let csv = std::fs::read_to_string(prof.join("smvs.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#') && !l.starts_with("frame_id")).count(), 9);
    let manifest = std::fs::read_to_string(prof.join("manifest.txt")).unwrap();
    assert!(manifest.contains("n-regions=72") && manifest.contains("d-th=8") && manifest.contains("seed=3"));
}

#[test]
fn place_rejects_single_frame_profile() {
    let dir = tempfile::tempdir().unwrap();
    let prof = dir.path().join("one.csv");
    std::fs::write(&prof, "# n_regions=72 d_th=8\nframe_id,timestamp,smvs,k_center,tx,ty,tz,qx,qy,qz,qw\n0,0,-100,3,0,0,1.8,0,0,0,1\n").unwrap();
    let out = smvslab(&["place", "--profile", p(&prof), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("need ≥ 2 frames"));
}

#[test]
fn usage_errors_exit_two() {
    let out = smvslab(&["smvs", "--out", "/nonexistent", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let out = smvslab(&["odom", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "missing --dataset is a usage error");
    let out = smvslab(&["attack", "--dataset", p(dir.path()), "--out", p(dir.path()), "--spoofer-x", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = smvslab(&["odom", "--dataset", p(&dir.path().join("nope")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn manifest_replays_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let out = smvslab(&["scene", "--scene", "mixed", "--length", "3", "--range-noise", "0.05", "--seed", "11", "--out", p(&a)]);
    assert!(out.status.success());
    let b = dir.path().join("b");
    let out = smvslab(&["scene", "--config", p(&a.join("manifest.txt")), "--out", p(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn seed_env_is_a_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, env: Option<&str>, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_smvslab"));
        cmd.args(["scene", "--length", "2", "--out", p(&out_dir)]).args(extra).env_remove("SMVSLAB_SEED");
        if let Some(v) = env {
            cmd.env("SMVSLAB_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
        tree(&out_dir)
    };
    let flag = run("flag", None, &["--seed", "5"]);
    let env = run("env", Some("5"), &[]);
    let both = run("both", Some("6"), &["--seed", "5"]);
    assert_eq!(flag, env);
    assert_eq!(flag, both);
    assert_ne!(flag, run("other", Some("6"), &[]));
}

#[test]
fn pipeline_is_deterministic_and_attack_raises_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = smvslab(&["pipeline", "--length", "12", "--seed", "7", "--threads", threads, "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(tree(&a), tree(&b));
    for f in ["dataset/manifest.txt", "smvs/smvs.csv", "placement/placement.txt", "attacked/manifest.txt", "eval/attacked/metrics.txt", "report/buckets.csv"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
}
