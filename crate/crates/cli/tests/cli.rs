use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qmorse"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(kind: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(kind)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn archive(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("archive.json")).unwrap()).unwrap()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn load(name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(config(name)).unwrap()).unwrap()
}

#[test]
fn check_on_a2_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("check", &config("a2_check.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let a = archive(dir.path());
    assert_eq!(a["status"], "ok");
    assert_eq!(a["outputs"]["pass"], true);
    assert!(dir.path().join("run_meta.json").exists());
}

#[test]
fn retract_on_slit_quotient_counts_components() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("retract", &config("slit_quotient.json"), dir.path(), &["--threads", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let a = archive(dir.path());
    let counts: Vec<u64> =
        a["outputs"]["censuses"].as_array().unwrap().iter().map(|c| c["components"].as_u64().unwrap()).collect();
    assert_eq!(counts, vec![2, 1]);
    assert_eq!(a["outputs"]["condition4"]["holds"], false);
    assert!(a["outputs"]["condition4"]["witness"].is_object());
}

#[test]
fn negative_dimension_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("a2_check.json");
    c["dims"] = serde_json::json!([1, -1]);
    let path = dir.path().join("bad.json");
    write_json(&path, &c);
    let o = run("check", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dims[1]"));
    assert!(!dir.path().join("out").join("archive.json").exists());
}

#[test]
fn syntax_errors_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"schema_version\": 1,\n  \"seed\": oops\n}").unwrap();
    let o = run("check", &path, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn subcommand_must_match_kind() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("flow", &config("a2_check.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment.kind"));
}

#[test]
fn check_violation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("a2_check.json");
    c["integrator"] = serde_json::json!({"rel_tol": 1e-2, "abs_tol": 1e-2, "max_step": 2.0});
    let path = dir.path().join("loose.json");
    write_json(&path, &c);
    let o = run("check", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
    let a = archive(&dir.path().join("out"));
    assert_eq!(a["status"], "violations");
    assert!(!a["violations"].as_array().unwrap().is_empty());
}

#[test]
fn runtime_failure_writes_partial_archive() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("broken_product.json");
    c["experiment"]["levels"] = serde_json::json!([5.0]);
    c["experiment"]["limits"] = serde_json::json!([]);
    let path = dir.path().join("bad.json");
    write_json(&path, &c);
    let o = run("broken", &path, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let a = archive(&dir.path().join("out"));
    assert_eq!(a["status"], "failed");
    assert!(a["error"].as_str().unwrap().contains("level 5"));
}

#[test]
fn strict_turns_warnings_into_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("slit_quotient.json");
    c["experiment"]["grid"] = serde_json::json!(20);
    c["points"] = serde_json::json!({"random": {"count": 1}});
    let path = dir.path().join("warn.json");
    write_json(&path, &c);
    let o = run("retract", &path, &dir.path().join("a"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let o = run("retract", &path, &dir.path().join("b"), &["--strict"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_override_changes_random_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("a2_flow.json");
    run("flow", &cfg, &dir.path().join("a"), &[]);
    run("flow", &cfg, &dir.path().join("b"), &["--seed-override", "99"]);
    let (a, b) = (archive(&dir.path().join("a")), archive(&dir.path().join("b")));
    assert_eq!(b["config"]["seed"], 99);
    assert_eq!(a["outputs"]["traces"][0], b["outputs"]["traces"][0]);
    assert_ne!(a["outputs"]["traces"][1], b["outputs"]["traces"][1]);
}

#[test]
fn archives_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a2_flow.json", "broken_product.json", "cycle_variety.json"] {
        let kind = load(name)["experiment"]["kind"].as_str().unwrap().to_string();
        let a = dir.path().join(format!("{name}.1"));
        let b = dir.path().join(format!("{name}.2"));
        assert_eq!(run(&kind, &config(name), &a, &["--threads", "1"]).status.code(), Some(0));
        assert_eq!(run(&kind, &config(name), &b, &["--threads", "4"]).status.code(), Some(0));
        assert_eq!(fs::read(a.join("archive.json")).unwrap(), fs::read(b.join("archive.json")).unwrap(), "{name}");
    }
}

#[test]
fn trace_export_columns_and_reexport() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("run");
    assert_eq!(run("check", &config("jordan2_check.json"), &run_dir, &[]).status.code(), Some(0));
    let c = load("jordan2_check.json");
    let mut c2 = c.clone();
    c2["experiment"] = serde_json::json!({"kind": "flow"});
    c2["points"] = serde_json::json!({"explicit": [c["points"]["explicit"][0]]});
    let path = dir.path().join("flow.json");
    write_json(&path, &c2);
    assert_eq!(run("flow", &path, &run_dir, &[]).status.code(), Some(0));
    let export = |out: &Path| {
        let o = bin()
            .args(["export", "--what", "trace", "--archive"])
            .arg(&run_dir)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        fs::read(out.join("trace_0.csv")).unwrap()
    };
    let first = export(&dir.path().join("e1"));
    let second = export(&dir.path().join("e2"));
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "t,f,gradnorm,tr_x_re,tr_x_im,tr_xy_re,tr_xy_im,tr_xxy_re,tr_xxy_im,res_comm");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 10);
    assert!(row[1].contains('e') && row[1].split('e').next().unwrap().replace(['-', '.'], "").len() == 17);
}

#[test]
fn census_and_checkpoint_exports() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = load("slit_quotient.json");
    c["experiment"]["grid"] = serde_json::json!(8);
    let path = dir.path().join("small.json");
    write_json(&path, &c);
    let r = dir.path().join("r");
    assert_eq!(run("retract", &path, &r, &[]).status.code(), Some(0));
    let o = bin().args(["export", "--what", "census", "--archive"]).arg(&r).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("census_0.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "rho,theta,in_set,component_id");
    assert_eq!(text.lines().count(), 1 + 8 * 8);

    let b = dir.path().join("b");
    assert_eq!(run("broken", &config("broken_product.json"), &b, &[]).status.code(), Some(0));
    let o = bin().args(["export", "--what", "checkpoints", "--archive"]).arg(&b).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("checkpoints.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "member,s,level_index,level,to_final,x_0,x_1,x_2,x_3");
    assert_eq!(text.lines().count(), 1 + 8 * 2);

    let o = bin().args(["export", "--what", "slice", "--archive"]).arg(&b).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("slice"));
}

#[test]
fn slice_export_lists_basis_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("r");
    assert_eq!(run("slice", &config("a2_slice.json"), &r, &[]).status.code(), Some(0));
    let o = bin().args(["export", "--what", "slice", "--archive"]).arg(&r).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("slice.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "point,basis_index,f_crit,c_0,c_1");
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn every_bundled_config_runs_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let c: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let kind = c["experiment"]["kind"].as_str().unwrap();
        let out = dir.path().join(path.file_stem().unwrap());
        let o = run(kind, &path, &out, &["--strict"]);
        assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
    }
}
