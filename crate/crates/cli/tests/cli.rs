use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn drtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drtr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SPEC: &str = r#"{"blocks": 2, "nodes_per_block": 25, "p_in": 0.2, "p_out": 0.02,
  "noise_fraction": 0.2, "feature_dim": 4, "feature_noise_sigma": 0.5, "seed": 3}"#;
const SMALL_CONFIG: &str = r#"{"epochs": 4, "hidden_dim": 8, "lr0": 0.05, "seed": 1}"#;

/// Temp dir holding a generated graph, a spec and a config.
fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.json"), SMALL_SPEC).unwrap();
    fs::write(dir.path().join("config.json"), SMALL_CONFIG).unwrap();
    let graph = dir.path().join("graph");
    let out = drtr(&["gen-sbm", "--spec", p(&dir.path().join("spec.json")), "--out", p(&graph)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir
}

#[test]
fn gen_sbm_writes_a_graph_directory() {
    let dir = setup();
    let g = dir.path().join("graph");
    for f in ["edges.tsv", "features.bin", "labels.tsv", "noisy_edges.tsv", "sbm.json"] {
        assert!(g.join(f).exists(), "{f} missing");
    }
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(g.join("sbm.json")).unwrap()).unwrap();
    assert_eq!(meta["nodes"], 50);
}

#[test]
fn train_writes_checkpoint_metrics_and_summary() {
    let dir = setup();
    let out_dir = dir.path().join("run");
    let out = drtr(&[
        "train",
        "--graph",
        p(&dir.path().join("graph")),
        "--config",
        p(&dir.path().join("config.json")),
        "--mode",
        "gkhddra",
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_total,loss_cls,loss_dr,loss_tr,loss_reg,grad_norm,val_acc,test_acc,d_eff,edges_added,edges_pruned"
    );
    assert_eq!(lines.count(), 4);
    let params = fs::read(out_dir.join("params.bin")).unwrap();
    assert_eq!(&params[..8], b"DRTRPARM");
    let log = fs::read_to_string(out_dir.join("refinement.jsonl")).unwrap();
    assert!(log.lines().count() > 0);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["action"] == "prune" || v["action"] == "add");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "gkhddra");
    assert!(out_dir.join("graph/edges.tsv").exists());

    let again = dir.path().join("run2");
    let out = drtr(&[
        "train",
        "--graph",
        p(&dir.path().join("graph")),
        "--config",
        p(&dir.path().join("config.json")),
        "--mode",
        "gkhddra",
        "--out",
        p(&again),
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read(again.join("metrics.csv")).unwrap(), csv.as_bytes());
    assert_eq!(fs::read(again.join("params.bin")).unwrap(), params);
}

#[test]
fn refine_reports_degrees() {
    let dir = setup();
    let out_dir = dir.path().join("refined");
    let out = drtr(&["refine", "--graph", p(&dir.path().join("graph")), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert!(s["effective_degree"].as_f64().unwrap() < s["original_degree"].as_f64().unwrap());
    assert!(out_dir.join("edges.tsv").exists());
}

#[test]
fn stability_prints_json() {
    let dir = setup();
    let out = drtr(&[
        "stability",
        "--graph",
        p(&dir.path().join("graph")),
        "--deltas",
        "0,1,2",
        "--seeds",
        "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["name"], "stability");
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn ablate_and_linkpred_write_results() {
    let dir = setup();
    let res = dir.path().join("results");
    let out = drtr(&[
        "ablate",
        "--spec",
        p(&dir.path().join("spec.json")),
        "--config",
        p(&dir.path().join("config.json")),
        "--seeds",
        "2",
        "--out",
        p(&res),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(res.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 8);
    assert!(fs::read_to_string(res.join("ablation_rows.csv")).unwrap().starts_with("seed,group,metric,value"));

    let out = drtr(&[
        "linkpred",
        "--graph",
        p(&dir.path().join("graph")),
        "--config",
        p(&dir.path().join("config.json")),
        "--modes",
        "baseline,gdra",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn exit_code_2_on_bad_input() {
    let dir = setup();
    let graph = dir.path().join("graph");
    let missing = drtr(&["train", "--graph", p(&dir.path().join("nope")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(missing.status.code(), Some(2));

    fs::write(dir.path().join("bad.json"), r#"{"epochs": 3, "not_a_key": 1}"#).unwrap();
    let unknown = drtr(&["train", "--graph", p(&graph), "--config", p(&dir.path().join("bad.json")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("not_a_key"));

    fs::write(dir.path().join("bad.json"), r#"{"loss_weights": [0.5, 0.5, 0.5]}"#).unwrap();
    let invalid = drtr(&["train", "--graph", p(&graph), "--config", p(&dir.path().join("bad.json")), "--out", p(&dir.path().join("x"))]);
    assert_eq!(invalid.status.code(), Some(2));

    fs::write(graph.join("edges.tsv"), "0\tzebra\n").unwrap();
    let malformed = drtr(&["refine", "--graph", p(&graph), "--out", p(&dir.path().join("y"))]);
    assert_eq!(malformed.status.code(), Some(2));
}

#[test]
fn exit_code_3_on_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path();
    fs::write(g.join("edges.tsv"), "0\t1\n1\t2\n2\t3\n3\t0\n").unwrap();
    fs::write(g.join("features.csv"), "1e300,1e300\n-1e300,1e300\n1e300,-1e300\n-1e300,-1e300\n").unwrap();
    fs::write(g.join("labels.tsv"), "0\t0\n1\t1\n2\t0\n3\t1\n").unwrap();
    let out = drtr(&["train", "--graph", p(g), "--out", p(&g.join("run"))]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
