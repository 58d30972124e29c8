//! End-to-end runs of the `zrp` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const FIG2_MODEL: &str = r#"
[model]
family = "stretched-rates"
lambda = 0.6
b = 2.0
"#;

fn write_config(dir: &Path, job: &str, body: &str) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        "version = 1\njob = \"{job}\"\n{body}\n{FIG2_MODEL}\n[output]\ndir = \"{}\"\n",
        out.display()
    );
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn zrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrp")).args(args).output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn compute_reports_fig2_constants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "compute", "[ensemble]\nL = 1024\nN = 1360\n");
    let out = zrp(&["compute", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("out/compute.json"));
    assert!((v["rho_c"].as_f64().unwrap() - 0.842).abs() < 0.005);
    assert!((v["sigma2"].as_f64().unwrap() - 2.55).abs() < 0.02);
    assert!((v["c_lambda"].as_f64().unwrap() - 4.09).abs() < 0.01);
    assert!((v["N_crit"].as_i64().unwrap() - 1356).abs() <= 1);
    assert_eq!(v["regime_report"]["case"], "SE-c");

    let meta = json(&dir.path().join("out/metadata.json"));
    assert_eq!(meta["ensemble"]["N_resolved"]["n"], 1360);
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["versions"]["zrp-core"], env!("CARGO_PKG_VERSION"));
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn sampling_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body = "seed = 42\nreplicas = 300\n[ensemble]\nL = 64\nN = { rule = \"subl\", gamma = 0.0 }\n";
    let cfg = write_config(dir.path(), "sample-exact", body);
    let cfg = cfg.to_str().unwrap();
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();

    let run = |out: &str, extra: &[&str]| {
        let o = dir.path().join(out);
        let mut args = vec!["sample-exact", "--config", cfg, "--out", o.to_str().unwrap()];
        args.extend_from_slice(extra);
        let r = zrp(&args);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    };
    run("a", &[]);
    run("b", &["--sequential", "--jobs", "1"]);
    run("c", &["--seed", "43"]);
    for f in ["samples.csv", "stats.csv", "summary.json"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs between identical runs");
    }
    assert_ne!(read("a", "samples.csv"), read("c", "samples.csv"));

    let samples = String::from_utf8(read("a", "samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "replica_id,seed,L,N,M_L,second_max");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 300);
    assert!(rows.iter().all(|r| r.split(',').nth(1) == Some("42")));
}

#[test]
fn every_artifact_carries_hash_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body = "seed = 9\nreplicas = 4\n[ensemble]\nL = 8\nN = 12\n[dynamics]\nt_end = 20.0\nburn_in = 5.0\nsnapshot_every = 1.0\n";
    let cfg = write_config(dir.path(), "dynamics", body);
    let out = zrp(&["dynamics", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = json(&dir.path().join("out/metadata.json"));
    let hash = meta["config_hash"].as_str().unwrap().to_string();
    let stamp = format!("# config_hash={hash} seed=9");
    for entry in fs::read_dir(dir.path().join("out")).unwrap() {
        let p = entry.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => assert_eq!(text.lines().next().unwrap(), stamp, "{}", p.display()),
            Some("json") => {
                let v: Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["config_hash"], hash.as_str());
                assert_eq!(v["seed"], 9);
            }
            _ => panic!("unexpected artifact {}", p.display()),
        }
    }
    let traj = fs::read_to_string(dir.path().join("out/trajectory.csv")).unwrap();
    assert!(traj.lines().skip(2).all(|r| r.split(',').nth(4) == Some("12")));
}

#[test]
fn mcmc_and_oracle_jobs_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = "seed = 3\nreplicas = 50\n[ensemble]\nL = 16\nN = 20\n[mcmc]\nchains = 2\nburn_in = 5000\nthin = 64\n";
    let cfg = write_config(dir.path(), "sample-mcmc", body);
    let out = zrp(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!(s["replicas"], 50);
    assert_eq!(s["chains"], 2);

    let cfg = write_config(dir.path(), "oracle", "[ensemble]\nL = 16\nN = 20\n");
    let out = zrp(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = json(&dir.path().join("out/oracle.json"));
    assert!((o["total_mass"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let cdf = fs::read_to_string(dir.path().join("out/max_cdf.csv")).unwrap();
    let last = cdf.lines().last().unwrap();
    assert!(last.starts_with("20,"), "{last}");
}

#[test]
fn verify_reports_and_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("v");
    let out = zrp(&["verify", "--criterion", "1", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("[PASS] 1 "), "{stdout}");
    let v = json(&out_dir.join("verify.json"));
    assert_eq!(v["pass"], true);
    assert_eq!(v["criteria"][0]["id"], 1);
}

#[test]
fn validation_errors_name_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sample-exact", "[ensemble]\nL = 16\nN = 20\n");
    let out = zrp(&["sample-exact", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed:"));

    let out = zrp(&["oracle", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("job:"));

    let out = zrp(&["compute"]);
    assert_eq!(out.status.code(), Some(2));
}
