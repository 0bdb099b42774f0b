use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn rollwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rollwave")).args(args).env_remove("ROLLWAVE_THREADS").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Shared {
    _dir: TempDir,
    profile: PathBuf,
}

/// Profile at F = 2.4495, nu = 0.1, q = 1.5745, X = 17.15, solved once.
fn shared() -> &'static Shared {
    static CELL: OnceLock<Shared> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let profile = dir.path().join("prof.json");
        let o = rollwave(&["profile", "--F", "2.4495", "--nu", "0.1", "--q", "1.5745", "--X", "17.15", "--n", "256", "--out", s(&profile)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        Shared { _dir: dir, profile }
    })
}

#[test]
fn profile_example_writes_json_and_manifest() {
    let sh = shared();
    let text = std::fs::read_to_string(&sh.profile).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let tau: Vec<f64> = v["tau"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let amp = tau.iter().cloned().fold(f64::MIN, f64::max) - tau.iter().cloned().fold(f64::MAX, f64::min);
    assert!(amp > 1e-2, "amplitude {amp}");
    assert!(v["residual"].as_f64().unwrap() <= 1e-8);
    let manifest = std::fs::read_to_string(format!("{}.manifest", s(&sh.profile))).unwrap();
    assert!(manifest.starts_with("command = profile\n"));
    assert!(manifest.contains("F = 2.4495\n") && manifest.contains("n = 256\n") && manifest.contains("threads = 1\n"));
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.csv");
    let o = rollwave(&["profile", "--F", "3", "--nu", "0.1", "--q", "1.7", "--X", "12", "--n", "128", "--format", "csv", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&out).unwrap();
    let manifest = dir.path().join("p.csv.manifest");
    let saved = dir.path().join("saved.manifest");
    std::fs::copy(&manifest, &saved).unwrap();
    std::fs::remove_file(&out).unwrap();
    let o = rollwave(&["--config", s(&saved)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert_eq!(std::fs::read(&manifest).unwrap(), std::fs::read(&saved).unwrap());
}

#[test]
fn spectrum_row_count() {
    let sh = shared();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("spec.csv");
    let o = rollwave(&["spectrum", "--in", s(&sh.profile), "--modes", "101", "--xi-points", "21", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("xi,re,im"));
    let mut per_xi = std::collections::BTreeMap::<String, usize>::new();
    for l in lines {
        *per_xi.entry(l.split(',').next().unwrap().to_string()).or_default() += 1;
    }
    assert_eq!(per_xi.len(), 21);
    assert!(per_xi.values().all(|&n| n == 2 * (2 * 101 + 1)), "{per_xi:?}");
}

#[test]
fn verdict_on_a_stable_profile() {
    let dir = TempDir::new().unwrap();
    let prof = dir.path().join("p.json");
    let o = rollwave(&["profile", "--F", "6", "--nu", "0.1", "--q", "2.4", "--X", "8.78", "--n", "256", "--out", s(&prof)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("v.json");
    let o = rollwave(&["verdict", "--in", s(&prof), "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["overall"]["class"], "stable", "{v}");
    assert_eq!(v["d2"], true);
}

#[test]
fn evans_value_and_contour() {
    let sh = shared();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d.json");
    let o = rollwave(&["evans", "--in", s(&sh.profile), "--lambda", "0.3+0.2i", "--xi", "0,0.05", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["values"].as_array().unwrap().len(), 2);
    assert_eq!(v["trusted"], true);

    let csv = dir.path().join("w.csv");
    let o = rollwave(&["evans", "--in", s(&sh.profile), "--contour", "circle:c=1,r=0.5", "--xi", "0", "--format", "csv", "--out", s(&csv)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert_eq!(row.split(',').nth(1), Some("0"), "{text}");

    let o = rollwave(&["evans", "--in", s(&sh.profile), "--lambda", "1", "--contour", "circle:c=1,r=0.5", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn fit_recovers_an_exact_power_law() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("b.csv");
    let mut text = String::from("alpha,F,nu,q,X_lower,X_upper\n");
    for (f, q) in [(3.0f64, 1.0f64), (4.0, 2.0), (6.0, 1.5), (8.0, 3.0), (10.0, 2.5)] {
        let x = (0.3 + 2.83 * f.ln() - 0.5 * q.ln()).exp();
        text.push_str(&format!("-2,{f},0.1,{q},{x},\n"));
    }
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("fit.json");
    let o = rollwave(&["fit", "--in", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["b1"].as_f64().unwrap() - 2.83).abs() < 1e-10);
    assert!((v["b2"].as_f64().unwrap() + 0.5).abs() < 1e-10);
    assert!((v["b3"].as_f64().unwrap() - 0.3).abs() < 1e-10);
    let o = rollwave(&["fit", "--in", s(&input), "--which", "upper", "--out", s(&out)]);
    assert_eq!(code(&o), 1, "no upper points");
}

#[test]
fn kdv_and_limit_subcommands() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("k.json");
    let o = rollwave(&["kdv", "--X", "7", "--modes", "40", "--xi-points", "21", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["stable"], false);
    assert!((v["X"].as_f64().unwrap() - 7.0).abs() < 1e-12);

    let out = dir.path().join("h.json");
    let o = rollwave(&["limit-inf", "--mode", "hamiltonian", "--h-minus", "0.5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["max_re"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_map_resumes_from_its_store() {
    let dir = TempDir::new().unwrap();
    let store = dir.path().join("store.jsonl");
    let out = dir.path().join("map.csv");
    let args = ["sweep", "--F", "6", "--q-rule", "power:coef=0.4,exponent=1", "--X", "7.83,8.78", "--store", s(&store), "--out", s(&out)];
    let o = rollwave(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first_store = std::fs::read(&store).unwrap();
    let first_out = std::fs::read_to_string(&out).unwrap();
    assert_eq!(first_out.lines().count(), 3);
    assert!(first_out.lines().nth(1).unwrap().contains(",unstable,"));
    assert!(first_out.lines().nth(2).unwrap().contains(",stable,"));
    let t = std::time::Instant::now();
    let o = rollwave(&args);
    assert_eq!(code(&o), 0);
    assert!(t.elapsed().as_secs_f64() < 2.0, "resume recomputed records");
    assert_eq!(std::fs::read(&store).unwrap(), first_store);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first_out);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.json");
    assert_eq!(code(&rollwave(&["profile", "--Froude", "3", "--out", s(&out)])), 1);
    let cfg = dir.path().join("c.kv");
    std::fs::write(&cfg, "F = 3\nFroude = 3\n").unwrap();
    assert_eq!(code(&rollwave(&["profile", "--config", s(&cfg), "--out", s(&out)])), 1);
    assert_eq!(code(&rollwave(&["profile", "--F", "x", "--nu", "0.1", "--q", "1", "--X", "10", "--out", s(&out)])), 1);
    // no roll waves below F = 2
    assert_eq!(code(&rollwave(&["profile", "--F", "1.5", "--nu", "0.1", "--q", "1", "--X", "10", "--out", s(&out)])), 1);
    // Newton starved of iterations
    let o = rollwave(&["profile", "--F", "2.4495", "--nu", "0.1", "--q", "1.5745", "--X", "17.15", "--max-iter", "1", "--tol", "1e-14", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists(), "failed run left an output file");
    assert_eq!(code(&rollwave(&["--help"])), 0);
    assert_eq!(code(&rollwave(&[])), 1);
}

#[test]
fn threads_come_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("b.csv");
    std::fs::write(&input, "alpha,F,nu,q,X_lower,X_upper\n-2,3,0.1,1,5,\n-2,4,0.1,1,7,\n-2,6,0.1,1,11,\n-2,8,0.1,1,15,\n").unwrap();
    let out = dir.path().join("fit.json");
    let run = |threads: &str| Command::new(env!("CARGO_BIN_EXE_rollwave")).args(["fit", "--in", s(&input), "--model", "froude_only", "--out", s(&out)]).env("ROLLWAVE_THREADS", threads).output().unwrap();
    assert_eq!(code(&run("3")), 0);
    let m = std::fs::read_to_string(dir.path().join("fit.json.manifest")).unwrap();
    assert!(m.contains("threads = 3\n"), "{m}");
    assert_eq!(code(&run("zero")), 1);
}
