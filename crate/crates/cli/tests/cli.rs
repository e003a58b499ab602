use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use shadow_mpo::serialize::{read_dataset, read_state, StateFile};
use shadow_mpo::shadows::estimate_observable;
use shadow_mpo::PauliString;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shadow-mpo"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn shadow-mpo")
}

fn ok(args: &[&str], dir: &Path) {
    ok_threads(args, dir, None);
}

fn ok_threads(args: &[&str], dir: &Path, threads: Option<&str>) {
    let mut cmd = bin();
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("SHADOW_MPO_THREADS", t);
    }
    let out = cmd.output().expect("spawn shadow-mpo");
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn output_hashes(manifest: &Path) -> Vec<String> {
    json(manifest)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["sha256"].as_str().unwrap().to_string())
        .collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn default_learn_reports_twenty_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &["learn", "--data", p(&data("gibbs6.ldjson")), "--seed", "1", "--output", "s.json", "--report", "r.json", "--csv", "r.csv"],
        d,
    );
    let report = json(&d.join("r.json"));
    assert_eq!(report["sweep_trace"].as_array().unwrap().len(), 20);
    assert_eq!(report["config"]["ell"], 2);
    assert_eq!(report["config"]["chi_max"], 4);
    assert!(report.get("wall_time_s").is_none());
    let csv = fs::read_to_string(d.join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
    let m = json(&d.join("s.json.manifest.json"));
    assert_eq!(m["subcommand"], "learn");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
    match read_state(d.join("s.json")).unwrap() {
        StateFile::Mpo(op) => assert!(op.max_bond() <= 4),
        StateFile::Mps(_) => panic!("learn wrote an MPS"),
    }
}

#[test]
fn one_site_rejects_bond_above_four_pow_ell() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "learn", "--data", p(&data("gibbs6.ldjson")), "--mode", "one-site", "--ell", "1", "--chi", "5",
            "--seed", "1", "--output", "s.json", "--report", "r.json",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("chi_max"));
    assert!(!dir.path().join("s.json").exists());
}

#[test]
fn invalid_spec_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"state": "gibbs", "beta": 2, "gee": 1.0, "h": 0.0, "n": 4}"#).unwrap();
    let out = run(&["simulate-state", "--spec", "bad.json", "--output", "x.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gee"));

    fs::write(dir.path().join("bad2.json"), r#"{"state": "kicked_ising", "n": 4, "depth": 1, "depolarizing": 1.5}"#).unwrap();
    let out = run(&["simulate-state", "--spec", "bad2.json", "--output", "x.json"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("depolarizing"));
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["qpca", "--sigma", "does-not-exist.json", "--seed", "1", "--output", "a", "--report", "b"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.json"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate-state", "--spec", p(&data("gibbs6.spec.json")), "--output", "x.json"])
        .env("SHADOW_MPO_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SHADOW_MPO_THREADS"));
}

#[test]
fn depth_zero_kicked_ising_is_a_product_mps() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ki.json"), r#"{"state": "kicked_ising", "n": 5, "depth": 0}"#).unwrap();
    ok(&["simulate-state", "--spec", "ki.json", "--output", "ki.mps.json"], dir.path());
    match read_state(dir.path().join("ki.mps.json")).unwrap() {
        StateFile::Mps(psi) => assert_eq!(psi.max_bond(), 1),
        StateFile::Mpo(_) => panic!("expected an MPS"),
    }
    let m = json(&dir.path().join("ki.mps.json.manifest.json"));
    assert_eq!(m["summary"]["max_bond"], 1);
}

#[test]
fn minimal_dataset() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["sample", "--state", p(&data("gibbs6.mpo.json")), "--bases", "1", "--shots", "1", "--seed", "0", "--output", "d.ldjson"],
        dir.path(),
    );
    let ds = read_dataset(dir.path().join("d.ldjson")).unwrap();
    assert_eq!((ds.num_bases(), ds.shots_per_basis, ds.learning_bases), (1, 1, 1));
}

#[test]
fn observables_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = data("gibbs6.ldjson");
    ok(
        &["estimate", "--data", p(&path), "--what", "observable", "--pauli", "Z0 Z1", "--pauli", "XIIIIX", "--output", "o.json"],
        dir.path(),
    );
    let report = json(&dir.path().join("o.json"));
    let ds = read_dataset(&path).unwrap();
    for (row, spec) in report["result"]["observables"].as_array().unwrap().iter().zip(["Z0 Z1", "XIIIIX"]) {
        let want = estimate_observable(&ds.records, &spec.parse::<PauliString>().unwrap(), None).unwrap();
        let got = row["value"].as_f64().unwrap();
        assert!((got - want).abs() <= 1e-15 * want.abs().max(1.0), "{spec}: {got} vs {want}");
    }

    ok(&["estimate", "--data", p(&path), "--what", "observable", "--output", "zz.json"], dir.path());
    let zz = json(&dir.path().join("zz.json"));
    assert_eq!(zz["result"]["observables"].as_array().unwrap().len(), 5);
}

#[test]
fn purity_series_per_prefix() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["estimate", "--data", p(&data("gibbs6.ldjson")), "--what", "purity", "--k", "2", "--output", "p.json", "--csv", "p.csv"],
        dir.path(),
    );
    let report = json(&dir.path().join("p.json"));
    let series = report["result"]["series"].as_array().unwrap();
    let ns: Vec<u64> = series.iter().map(|r| r["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, vec![4, 5, 6]);
    for r in series {
        let (pur, s2) = (r["purity"].as_f64().unwrap(), r["s2"].as_f64().unwrap());
        assert!((s2 + pur.log2()).abs() < 1e-12);
    }
    let csv = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(csv.starts_with("n,purity,s2,s2_per_qubit\n"));
}

#[test]
fn fidelity_with_the_sampled_state_is_near_one() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "estimate", "--data", p(&data("gibbs6.ldjson")), "--what", "fidelity", "--sigma", p(&data("gibbs6.mpo.json")),
            "--k", "2", "--output", "f.json",
        ],
        dir.path(),
    );
    let r = json(&dir.path().join("f.json"));
    let f = r["result"]["f_gm"].as_f64().unwrap();
    assert!((f - 1.0).abs() < 0.2, "f_gm = {f}");
}

#[test]
fn qpca_of_a_pure_state_recovers_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("ki.json"), r#"{"state": "kicked_ising", "n": 6, "depth": 2}"#).unwrap();
    ok(&["simulate-state", "--spec", "ki.json", "--output", "psi.json"], d);
    ok(
        &["qpca", "--sigma", "psi.json", "--target", "psi.json", "--seed", "3", "--output", "pc.json", "--report", "q.json", "--csv", "q.csv"],
        d,
    );
    let r = json(&d.join("q.json"));
    assert!((r["target_fidelity"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((r["eigenvalue"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(r["observables"].as_array().unwrap().len(), 18);
    assert_eq!(r["entanglement"].as_array().unwrap().len(), 5);
}

fn pipeline(dir: &Path, threads: &str) -> Vec<String> {
    let ok = |args: &[&str], dir: &Path| ok_threads(args, dir, Some(threads));
    fs::write(dir.join("spec.json"), r#"{"state": "kicked_ising", "n": 6, "depth": 1, "depolarizing": 0.1}"#).unwrap();
    ok(&["simulate-state", "--spec", "spec.json", "--output", "rho.json"], dir);
    ok(&["sample", "--state", "rho.json", "--bases", "30", "--shots", "64", "--split", "20", "--seed", "5", "--output", "d.ldjson"], dir);
    ok(&["learn", "--data", "d.ldjson", "--ell", "1", "--sweeps", "3", "--seed", "2", "--output", "s.json", "--report", "r.json"], dir);
    ok(&["estimate", "--data", "d.ldjson", "--what", "fidelity", "--sigma", "s.json", "--k", "2", "--split", "testing", "--output", "e.json"], dir);
    ok(&["qpca", "--sigma", "s.json", "--seed", "4", "--output", "pc.json", "--report", "q.json"], dir);
    ["rho.json", "d.ldjson", "s.json", "e.json", "pc.json"]
        .iter()
        .flat_map(|o| output_hashes(&dir.join(format!("{o}.manifest.json"))))
        .collect()
}

#[test]
fn pipeline_is_deterministic_by_hash() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ha = pipeline(a.path(), "1");
    let hb = pipeline(b.path(), "3");
    assert_eq!(ha.len(), 7);
    assert_eq!(ha, hb);
}
