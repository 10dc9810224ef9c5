use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const UNKNOT_THRESHOLD: f64 = 6.0 * std::f64::consts::PI + 4.0;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knot-energy"))
        .args(args)
        .current_dir(dir)
        .env_remove("KNOT_ENERGY_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(|r| r.unwrap()).collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn energy_of_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(dir.path(), &["energy", "--builtin", "circle", "--n", "512"])).unwrap();
    assert!((v["report"]["energy"].as_f64().unwrap() - 4.0).abs() < 1e-4);
    assert_eq!(v["unknot_certified"], Value::Bool(true));

    ok(dir.path(), &["energy", "--builtin", "trefoil", "--n", "512", "--out", "t.json"]);
    let v = json(&dir.path().join("t.json"));
    assert!(v["report"]["energy"].as_f64().unwrap() > UNKNOT_THRESHOLD);
    assert_eq!(v["unknot_certified"], Value::Bool(false));
    assert_eq!(v["manifest"], "t.json.manifest.json");
    let m = json(&dir.path().join("t.json.manifest.json"));
    assert_eq!(m["subcommand"], "energy");
    assert_eq!(m["config"]["n"], 512);
}

#[test]
fn input_errors_exit_2_and_geometry_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{not json").unwrap();
    assert_eq!(run(dir.path(), &["energy", "--curve", "bad.json"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["energy", "--builtin", "nope"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["energy"]).status.code(), Some(2));

    // Bow-tie: a planar figure-eight that crosses itself at the origin.
    let bow: Vec<Vec<f64>> = (0..64)
        .map(|k| {
            let t = k as f64 * std::f64::consts::TAU / 64.0;
            vec![t.sin(), (2.0 * t).sin() / 2.0, 0.0]
        })
        .collect();
    let doc = serde_json::json!({"kind": "samples", "closed": true, "points": bow});
    std::fs::write(dir.path().join("bow.json"), doc.to_string()).unwrap();
    let out = run(dir.path(), &["energy", "--curve", "bow.json"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invariance_audit() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(
        dir.path(),
        &["invariance", "--builtin", "circle", "--n", "1024", "--trials", "20", "--seed", "1"],
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 22);
    assert_eq!(&rows[0][1], "identity");
    // The identity still recomputes speeds on the image, so only rounding is left.
    assert!(num(&rows[0][4]) <= 1e-10);
    let max = rows.last().unwrap();
    assert_eq!(&max[0], "max");
    assert!(num(&max[4]) <= 5e-3, "max relative error {}", &max[4]);
    for r in &rows[1..21] {
        assert!((num(&r[3]) - 4.0).abs() < 1e-3);
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["invariance", "--builtin", "trefoil", "--n", "256", "--trials", "4", "--seed", "9"];
    let a = ok(dir.path(), &args);
    let b = ok(dir.path(), &args);
    assert_eq!(a, b);
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    assert_eq!(a, ok(dir.path(), &one));
}

#[test]
fn minimize_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["minimize", "--builtin", "circle", "--out", "c.csv"]);
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("c.csv")).unwrap());
    assert!(rows.len() <= 3, "circle should stop at once, got {} rows", rows.len());
    assert!(dir.path().join("c.final.json").exists());
    let m = json(&dir.path().join("c.csv.manifest.json"));
    assert_eq!(m["subcommand"], "minimize");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);

    ok(dir.path(), &["minimize", "--builtin", "ellipse", "--out", "e.csv"]);
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("e.csv")).unwrap());
    let last = num(&rows.last().unwrap()[1]);
    assert!((last - 4.0).abs() < 1e-2, "ellipse ends at {last}");
}

#[test]
fn minimized_trefoil_keeps_its_crossings() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["minimize", "--builtin", "trefoil", "--out", "t.csv", "--final-curve", "tf.json"]);
    let rows = csv_rows(&std::fs::read_to_string(dir.path().join("t.csv")).unwrap());
    let energies: Vec<f64> = rows.iter().map(|r| num(&r[1])).collect();
    for w in energies.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    let last = *energies.last().unwrap();
    assert!((70.0..78.0).contains(&last), "trefoil ends at {last}");

    let v: Value = serde_json::from_str(&ok(dir.path(), &["crossings", "--curve", "tf.json"])).unwrap();
    assert_eq!(v["bound"]["min_count"], 3);
    assert_eq!(v["bound"]["bound_holds"], Value::Bool(true));
    assert!((v["energy"].as_f64().unwrap() - last).abs() < 1e-6);
}

#[test]
fn crossings_of_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(dir.path(), &["crossings", "--builtin", "circle"])).unwrap();
    assert_eq!(v["bound"]["min_count"], 0);
    assert_eq!(v["bound"]["unknot_certified"], Value::Bool(true));
    let v: Value = serde_json::from_str(&ok(
        dir.path(),
        &["crossings", "--builtin", "trefoil", "--n", "301", "--sampler", "random", "--seed", "5"],
    ))
    .unwrap();
    assert_eq!(v["bound"]["min_count"], 3);
    assert_eq!(v["bound"]["bound_holds"], Value::Bool(true));
}

#[test]
fn convergence_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(
        dir.path(),
        &["convergence", "--builtin", "circle", "--n-list", "64,128,256,512", "--epsilon-list", "0.5", "--n", "1024"],
    );
    let rows = csv_rows(&text);
    let n_rows: Vec<_> = rows.iter().filter(|r| &r[0] == "n").collect();
    let errs: Vec<f64> = n_rows.iter().map(|r| (num(&r[3]) - 4.0).abs()).collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0] / 3.0, "errors {errs:?}");
    }
    let eps = rows.iter().find(|r| &r[0] == "epsilon").unwrap();
    assert!((num(&eps[5]) - num(&eps[6])).abs() < 1e-3);

    let text = ok(
        dir.path(),
        &["convergence", "--builtin", "trefoil", "--n-list", "128,256,512", "--epsilon-list", "0.5"],
    );
    let diffs: Vec<f64> = csv_rows(&text)
        .iter()
        .filter(|r| &r[0] == "n" && !r[4].is_empty())
        .map(|r| num(&r[4]))
        .collect();
    assert_eq!(diffs.len(), 2);
    assert!(diffs[1] < diffs[0]);
}

#[test]
fn bounds_table() {
    let dir = tempfile::tempdir().unwrap();
    let rows = csv_rows(&ok(dir.path(), &["bounds", "--m-list", "74", "--k-list", "3"]));
    let get = |kind: &str| rows.iter().find(|r| &r[0] == kind).unwrap().clone();
    assert!((num(&get("base")[2]) - 1.658).abs() < 1e-3);
    assert!((num(&get("prefactor")[2]) - 0.264).abs() < 1e-3);
    assert!((num(&get("unknot_threshold")[2]) - UNKNOT_THRESHOLD).abs() < 1e-12);
    let k = get("crossing_number");
    assert_eq!(num(&k[3]), 8.0);
    assert_eq!(num(&k[4]), 27648.0);
}

#[test]
fn flags_override_config_and_manifests_replay() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"builtin": "circle", "n": 128, "trials": 3, "seed": 4}"#,
    )
    .unwrap();
    ok(dir.path(), &["invariance", "--config", "cfg.json", "--n", "64", "--out", "a.csv"]);
    let m = json(&dir.path().join("a.csv.manifest.json"));
    assert_eq!(m["config"]["n"], 64);
    assert_eq!(m["config"]["trials"], 3);
    assert_eq!(m["seed"], 4);

    ok(dir.path(), &["invariance", "--config", "a.csv.manifest.json", "--out", "b.csv"]);
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);

    std::fs::write(dir.path().join("typo.json"), r#"{"tirals": 3}"#).unwrap();
    assert_eq!(
        run(dir.path(), &["invariance", "--builtin", "circle", "--config", "typo.json"]).status.code(),
        Some(2)
    );
}

#[test]
fn thread_count_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--threads", "2", "energy", "--builtin", "circle", "--n", "64", "--out", "e.json"]);
    assert_eq!(json(&dir.path().join("e.json.manifest.json"))["threads"], 2);
    let out = Command::new(env!("CARGO_BIN_EXE_knot-energy"))
        .args(["energy", "--builtin", "circle", "--n", "64", "--out", "f.json"])
        .current_dir(dir.path())
        .env("KNOT_ENERGY_THREADS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(&dir.path().join("f.json.manifest.json"))["threads"], 3);
    assert_eq!(run(dir.path(), &["--threads", "0", "bounds"]).status.code(), Some(2));
}
