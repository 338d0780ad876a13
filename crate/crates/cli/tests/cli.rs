use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn p6d(args: &[&str], cwd: &Path) -> Output {
    p6d_env(args, cwd, None)
}

fn p6d_env(args: &[&str], cwd: &Path, seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_p6d"));
    cmd.args(args).current_dir(cwd).env_remove("P6D_SEED");
    if let Some(s) = seed {
        cmd.env("P6D_SEED", s);
    }
    cmd.output().expect("run p6d")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = p6d(args, cwd);
    assert!(out.status.success(), "p6d {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Fixture scene with its index built; the tempdir must outlive the test body.
fn scene() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixtures", "scene", "--out", ".", "--views", "120"], dir.path());
    ok(&["--config", "config.json", "build-index"], dir.path());
    dir
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(p6d(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(p6d(&["align", "--help"], dir.path()).status.code(), Some(0));
    assert_eq!(p6d(&["--bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(p6d(&["align"], dir.path()).status.code(), Some(2));
    assert_eq!(p6d(&["--jobs", "0", "fixtures", "scene", "--out", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(p6d(&["--set", "noequals", "fixtures", "scene", "--out", "x"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(p6d(&["eval", "--gt", "nope.json"], dir.path()).status.code(), Some(2));
    let out = p6d(&["eval", "--gt", "nope.json", "--poses", "poses.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.json"));
}

#[test]
fn build_index_summarizes_and_is_deterministic() {
    let dir = scene();
    let d = dir.path();
    let first = fs::read(d.join("index.p6dx")).unwrap();
    let out = ok(&["--config", "config.json", "build-index", "--out", "again.p6dx"], d);
    assert_eq!(fs::read(d.join("again.p6dx")).unwrap(), first);
    let summary = stdout_json(&out);
    assert_eq!(summary["rows"], 3);
    assert_eq!(summary["config"]["views"], 120);
}

#[test]
fn corrupt_tensor_names_the_file() {
    let dir = scene();
    let d = dir.path();
    let views = d.join("bundles/box/views.tnsr");
    let mut bytes = fs::read(&views).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&views, bytes).unwrap();
    let out = p6d(&["--config", "config.json", "build-index", "--out", "x.p6dx"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("views.tnsr"));
}

#[test]
fn retrieve_ranks_the_source_object_first() {
    let dir = scene();
    let d = dir.path();
    for id in ["can", "box", "ball"] {
        let grid = format!("proposals/{id}_grid.tnsr");
        let fg = format!("proposals/{id}_fg.tnsr");
        let hits = stdout_json(&ok(&["--config", "config.json", "retrieve", "--query", &grid, "--fg", &fg, "-k", "3"], d));
        let hits = hits["hits"].as_array().unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0]["object_id"], id);
    }
}

#[test]
fn align_is_deterministic_and_recovers_identity() {
    let dir = scene();
    let d = dir.path();
    ok(&["--config", "config.json", "align", "--proposals", "proposals.json", "--out", "a.json"], d);
    ok(&["--config", "config.json", "--jobs", "1", "align", "--proposals", "proposals.json", "--out", "b.json"], d);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(d.join("b.json")).unwrap());
    let poses = read(d.join("a.json"));
    for r in poses["results"].as_array().unwrap() {
        let id = r["object_id"].as_str().unwrap();
        assert!(r["proposal"].as_str().unwrap().starts_with(id));
        assert!(r["scale"]["s"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn empty_proposals_give_empty_output() {
    let dir = scene();
    let d = dir.path();
    let mut props = read(d.join("proposals.json"));
    props["proposals"] = json!([]);
    fs::write(d.join("empty.json"), serde_json::to_vec(&props).unwrap()).unwrap();
    let out = ok(&["--config", "config.json", "align", "--proposals", "empty.json"], d);
    assert_eq!(stdout_json(&out)["results"], json!([]));
}

#[test]
fn scale_without_depth_falls_back_to_constant() {
    let dir = scene();
    let d = dir.path();
    let mut props = read(d.join("proposals.json"));
    for p in props["proposals"].as_array_mut().unwrap() {
        p.as_object_mut().unwrap().remove("depth");
    }
    fs::write(d.join("nodepth.json"), serde_json::to_vec(&props).unwrap()).unwrap();
    let out = stdout_json(&ok(&["--config", "config.json", "scale", "--proposals", "nodepth.json"], d));
    for r in out["results"].as_array().unwrap() {
        assert_eq!(r["scale"]["s"].as_f64().unwrap(), 0.10);
        assert!(r["flags"].as_array().unwrap().iter().any(|f| f == "constant_scale"));
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.json"), r#"{"seed": 5}"#).unwrap();
    let seed_of = |out: Output| {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        read(d.join("s/scene.json"))["seed"].as_u64().unwrap_or_else(|| panic!("{:?}", out))
    };
    assert_eq!(seed_of(p6d_env(&["--config", "c.json", "fixtures", "scene", "--out", "s", "--views", "60"], d, None)), 5);
    assert_eq!(seed_of(p6d_env(&["--config", "c.json", "fixtures", "scene", "--out", "s", "--views", "60"], d, Some("9"))), 9);
    assert_eq!(
        seed_of(p6d_env(&["--config", "c.json", "--seed", "11", "fixtures", "scene", "--out", "s", "--views", "60"], d, Some("9"))),
        11
    );
    assert_eq!(
        p6d_env(&["fixtures", "scene", "--out", "s", "--views", "60"], d, Some("abc")).status.code(),
        Some(2)
    );
}

#[test]
fn track_retarget_and_eval_chain() {
    let dir = scene();
    let d = dir.path();
    ok(&["--config", "config.json", "align", "--proposals", "proposals.json", "--out", "poses.json"], d);
    ok(&["--config", "config.json", "track", "--poses", "poses.json", "--object", "can", "--emit-seeds", "seeds.json"], d);
    ok(
        &["--config", "config.json", "fixtures", "tracks", "--gt", "gt.json", "--seeds", "seeds.json", "--occlusion", "0.2", "--out", "tracks.json"],
        d,
    );
    ok(&["--config", "config.json", "track", "--seeds", "seeds.json", "--tracks", "tracks.json", "--out", "traj.json"], d);
    let traj = read(d.join("traj.json"));
    let frames = traj["frames"].as_array().unwrap();
    assert_eq!(frames.len(), 60);
    assert!(frames.iter().all(|f| f["status"] == "solved"));

    let short = {
        let mut t = traj.clone();
        t["frames"] = json!(frames[..10].to_vec());
        t
    };
    fs::write(d.join("short.json"), serde_json::to_vec(&short).unwrap()).unwrap();
    ok(&["--config", "config.json", "retarget", "--trajectory", "short.json", "--out", "joints.json"], d);
    let joints = read(d.join("joints.json"));
    assert_eq!(joints["trajectory"]["steps"].as_array().unwrap().len(), 10);
    assert_eq!(joints["flags"], json!([]));
    assert!(joints["start_residual"].as_f64().unwrap() < 1e-9);
    assert!(joints["trajectory"]["steps"].as_array().unwrap().iter().all(|s| s["residual"].as_f64().unwrap() < 0.05));

    let out = stdout_json(&ok(
        &["--config", "config.json", "eval", "--gt", "gt.json", "--poses", "poses.json", "--trajectory", "traj.json"],
        d,
    ));
    assert_eq!(out["instances"].as_array().unwrap().len(), 3);
    assert!(out["tracking"]["relative_rotation_deg"].as_f64().unwrap() < 0.5);
}
