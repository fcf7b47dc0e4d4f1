use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn hyperdyn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperdyn")).arg("--out").arg(out).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn meta(out: &Path, stem: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(format!("{stem}.meta.json"))).unwrap()).unwrap()
}

#[test]
fn golden_mean_entropy() {
    let out = tempfile::tempdir().unwrap();
    let g = data("golden.edges");
    let o = hyperdyn(out.path(), &["shift", "entropy", "--graph", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let h = v["result"]["value"].as_f64().unwrap();
    assert!((h - 0.4812118250).abs() < 1e-9, "{h}");
    assert!(v["result"]["error_bound"].as_f64().unwrap() < 1e-12);
    assert!(out.path().join("shift-entropy.graph.dot").exists());
}

#[test]
fn cat_map_has_one_fixed_saddle() {
    let out = tempfile::tempdir().unwrap();
    let sys = data("catmap.sys");
    let o = hyperdyn(out.path(), &["--system", sys.to_str().unwrap(), "orbits", "--period", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["count"], 1);
    assert_eq!(v["result"]["saddles"], 1);
    let p = &v["result"]["orbits"][0]["points"][0];
    let (x, y) = (p[0].as_f64().unwrap(), p[1].as_f64().unwrap());
    assert!(x.min(1.0 - x).abs() < 1e-12 && y.min(1.0 - y).abs() < 1e-12);
    assert_eq!(v["result"]["orbits"][0]["type"], "saddle");
}

#[test]
fn bad_flag_is_a_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = hyperdyn(out.path(), &["orbits", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    let o = hyperdyn(out.path(), &["orbits", "--period", "1"]);
    assert_eq!(o.status.code(), Some(1), "missing --system");
}

#[test]
fn domain_errors_carry_their_type() {
    let out = tempfile::tempdir().unwrap();
    let sys = data("catmap.sys");
    let o = hyperdyn(out.path(), &["--system", sys.to_str().unwrap(), "orbits", "--period", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "InvalidParams");

    let bad = out.path().join("bad.sys");
    fs::write(&bad, "family = henon\nparams = 1.4, 0\n").unwrap();
    let o = hyperdyn(out.path(), &["--system", bad.to_str().unwrap(), "orbits", "--period", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "NonInvertibleParams");

    let g = out.path().join("dag.edges");
    fs::write(&g, "a b\nb c\n").unwrap();
    let o = hyperdyn(out.path(), &["shift", "parry", "--graph", g.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "Reducible");
}

#[test]
fn cache_hits_misses_and_recovers_from_corruption() {
    let out = tempfile::tempdir().unwrap();
    let sys = data("catmap.sys");
    let args = ["--system", sys.to_str().unwrap(), "entropy", "top", "--samples", "2000", "--n-max", "6"];
    let first = hyperdyn(out.path(), &args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "miss");

    let second = hyperdyn(out.path(), &args);
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "hit");
    assert_eq!(first.stdout, second.stdout);

    let mut reseeded = vec!["--seed", "7"];
    reseeded.extend_from_slice(&args);
    hyperdyn(out.path(), &reseeded);
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "miss");

    let key = meta(out.path(), "entropy-top")["key"].as_str().unwrap().to_string();
    let entry = out.path().join("cache").join(&key[..2]).join(&key).join("entry.json");
    let body = fs::read(&entry).unwrap();
    fs::write(&entry, &body[..body.len() / 3]).unwrap();
    let o = hyperdyn(out.path(), &reseeded);
    assert_eq!(o.status.code(), Some(0));
    let warning: Value = serde_json::from_slice(o.stderr.split(|&b| b == b'\n').next().unwrap()).unwrap();
    assert_eq!(warning["warning"], "CorruptCache");
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "recomputed");
    hyperdyn(out.path(), &reseeded);
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "hit");

    let mut bypass = vec!["--no-cache"];
    bypass.extend_from_slice(&reseeded);
    hyperdyn(out.path(), &bypass);
    assert_eq!(meta(out.path(), "entropy-top")["cache"], "bypass");
}

#[test]
fn reports_are_byte_identical_across_runs_and_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sys = data("catmap.sys");
    let s = sys.to_str().unwrap();
    let args = |w| vec!["--no-cache", "--workers", w, "--system", s, "horseshoe", "--samples", "50"];
    let x = hyperdyn(a.path(), &args("1"));
    let y = hyperdyn(b.path(), &args("3"));
    assert_eq!(x.status.code(), Some(0), "{}", String::from_utf8_lossy(&x.stderr));
    assert_eq!(x.stdout, y.stdout);
    for f in ["horseshoe.json", "horseshoe.samples.csv", "horseshoe.transition.dot", "horseshoe.certificate.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let v = stdout_json(&x);
    assert_eq!(v["result"]["horseshoe"]["irreducible"], true);
    assert!(v["result"]["horseshoe"]["max_residual"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["config"]["seed"], 0);
}

#[test]
fn census_and_equilibrium_on_labelled_graphs() {
    let out = tempfile::tempdir().unwrap();
    let g = out.path().join("two.edges");
    // two full 2-shifts joined by a one-way bridge
    fs::write(&g, "a a\na b\nb a\nb b\nb c\nc c\nc d\nd c\nd d\n").unwrap();
    let o = hyperdyn(out.path(), &["shift", "census", "--graph", g.to_str().unwrap()]);
    let v = stdout_json(&o);
    assert_eq!(v["result"]["tie"], true);
    assert_eq!(v["result"]["maximizers"].as_array().unwrap().len(), 2);

    let golden = data("golden.edges");
    let phi = data("golden.potential");
    let o = hyperdyn(
        out.path(),
        &["shift", "equilibrium", "--graph", golden.to_str().unwrap(), "--potential", phi.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert!(v["result"]["variational_defect"].as_f64().unwrap() < 1e-10);
}

#[test]
fn affine_lamination_commands() {
    let out = tempfile::tempdir().unwrap();
    let sys = data("horseshoe.sys");
    let s = sys.to_str().unwrap();
    let o = hyperdyn(out.path(), &["--system", s, "lamination", "holonomy", "--samples", "100", "--sample-len", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!((v["result"]["lipschitz"].as_f64().unwrap() - 1.0).abs() < 1e-6);

    let o = hyperdyn(out.path(), &["lamination", "sard", "--r", "3", "--cantor", "512", "--uniform", "128"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["report"]["pass"], true);
    let o = hyperdyn(out.path(), &["lamination", "sard", "--r", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}
