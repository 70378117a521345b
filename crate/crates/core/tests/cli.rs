use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use thermopatch::eval::EvalReport;
use thermopatch::imaging::load_pgm;
use thermopatch::patchgen::{validate_theta, BoundaryKind, PatchTheta};

const SMALL: &str = r#"{"swarm": {"pop": 6, "iters": 2, "seed": 11}, "eot": {"draws_per_eval": 1}}"#;

fn thermopatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermopatch")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(f.path("config.json"), SMALL).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, count: usize) -> PathBuf {
        let out = self.path(name);
        let o = thermopatch(&["synth", "--out", s(&out), "--count", &count.to_string(), "--seed", "7"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    }

    fn theta(&self, name: &str, theta: &PatchTheta) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, theta.to_json()).unwrap();
        p
    }
}

fn full() -> PatchTheta {
    PatchTheta::regular(6, 0.25, 0.0, BoundaryKind::Bezier)
}

/// Files under `dir`, recursively, as sorted `(relative path, bytes)`.
fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                v.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    v.sort();
    v
}

#[test]
fn synth_writes_images_and_manifest_reproducibly() {
    let f = Fixture::new();
    let a = f.synth("a", 30);
    let b = f.synth("b", 30);
    let files = dir_bytes(&a);
    assert_eq!(files.iter().filter(|(n, _)| n.ends_with(".pgm")).count(), 30);
    assert!(files.iter().any(|(n, _)| n == "annotations.json"));
    assert_eq!(files, dir_bytes(&b));
}

#[test]
fn synth_into_unwritable_location_fails_with_usage_code() {
    let f = Fixture::new();
    let blocker = f.path("file");
    fs::write(&blocker, "x").unwrap();
    let o = thermopatch(&["synth", "--out", s(&blocker.join("sub")), "--count", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());
}

#[test]
fn optimize_writes_feasible_theta_and_history() {
    let f = Fixture::new();
    let data = f.synth("data", 3);
    let out = f.path("theta.json");
    let cfg = f.path("config.json");
    let run = || {
        let o = thermopatch(&["optimize", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(&out).unwrap()
    };
    let first = run();
    let theta = PatchTheta::from_json(std::str::from_utf8(&first).unwrap()).unwrap();
    assert!(validate_theta(&theta).is_empty());
    let history: serde_json::Value = serde_json::from_slice(&fs::read(f.path("history.json")).unwrap()).unwrap();
    assert_eq!(history["history"].as_array().unwrap().len(), 2);
    assert_eq!(run(), first);
}

#[test]
fn optimize_on_empty_dataset_exits_one() {
    let f = Fixture::new();
    let empty = f.path("empty");
    fs::create_dir(&empty).unwrap();
    let o = thermopatch(&["optimize", "--dataset", s(&empty), "--out", s(&f.path("t.json"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_writes_both_reports() {
    let f = Fixture::new();
    let data = f.synth("data", 3);
    let theta = f.theta("theta.json", &full());
    let report = f.path("report.json");
    let o = thermopatch(&["eval", "--dataset", s(&data), "--theta", s(&theta), "--report", s(&report), "--eot"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: EvalReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let csv = fs::read_to_string(f.path("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), r.n_targets + 1);
}

#[test]
fn empty_mask_gives_zero_asr() {
    let f = Fixture::new();
    let data = f.synth("data", 3);
    let mut t = full();
    t.mask = vec![vec![0; 6]; 6];
    let theta = f.theta("theta.json", &t);
    let report = f.path("report.json");
    let o = thermopatch(&["eval", "--dataset", s(&data), "--theta", s(&theta), "--report", s(&report)]);
    assert!(o.status.success());
    let r: EvalReport = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.asr, Some(0.0));
}

#[test]
fn eval_with_missing_theta_exits_one() {
    let f = Fixture::new();
    let data = f.synth("data", 2);
    let o = thermopatch(&[
        "eval",
        "--dataset",
        s(&data),
        "--theta",
        s(&f.path("nope.json")),
        "--report",
        s(&f.path("r.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn render_full_patch_and_determinism() {
    let f = Fixture::new();
    let theta = f.theta("theta.json", &full());
    let out = f.path("patch.pgm");
    assert!(thermopatch(&["render", "--theta", s(&theta), "--size", "240", "--out", s(&out)]).status.success());
    let first = fs::read(&out).unwrap();
    let img = load_pgm(&out).unwrap();
    assert_eq!((img.width(), img.height()), (240, 240));
    assert!(img.pixels().iter().all(|&p| p == 0.0));
    assert!(thermopatch(&["render", "--theta", s(&theta), "--size", "240", "--out", s(&out)]).status.success());
    assert_eq!(fs::read(&out).unwrap(), first);

    let o = thermopatch(&["render", "--theta", s(&theta), "--size", "5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn preview_counts_and_box_parsing() {
    let f = Fixture::new();
    let data = f.synth("data", 1);
    let image = data.join("images/scene_0000.pgm");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(data.join("annotations.json")).unwrap()).unwrap();
    let b = &manifest["samples"][0]["boxes"][0];
    let spec = format!("{},{},{},{}", b[0], b[1], b[2], b[3]);
    let theta = f.theta("theta.json", &full());
    for (draws, expect) in [("0", 1), ("4", 4)] {
        let out = f.path(&format!("preview{draws}"));
        let o = thermopatch(&[
            "preview",
            "--image",
            s(&image),
            "--box",
            &spec,
            "--theta",
            s(&theta),
            "--draws",
            draws,
            "--seed",
            "3",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let pgms = dir_bytes(&out).iter().filter(|(n, _)| n.ends_with(".pgm")).count();
        assert_eq!(pgms, expect);
    }
    let o = thermopatch(&[
        "preview",
        "--image",
        s(&image),
        "--box",
        "1,2,three",
        "--theta",
        s(&theta),
        "--out",
        s(&f.path("bad")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--box"));
}
