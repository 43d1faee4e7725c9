use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, cmd: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{cmd}.json"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{cmd}-{}", extra.join("_").replace(['-', '/'], "")));
    let output = Command::new(env!("CARGO_BIN_EXE_opdyn"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .output()
        .unwrap();
    (output, out)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

/// Data rows of a CSV, skipping the stamp comment and the header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const CIRCLE: &str = r#"{
  "schema_version": 1,
  "seed": 42,
  "system": { "kind": "rotation", "alpha": [1.0], "x0": [1.0] },
  "koopman": { "t": [0.0, 1.0] },
  "qcirc": { "q": [2, 3, 4, 5, 6], "t": [0.0, 2.0], "shots": 500 }
}"#;

const ORBIT: &str = r#"{
  "schema_version": 1,
  "seed": 42,
  "system": { "kind": "orbit", "m": 8, "x0": 3 },
  "qmda": { "l": 5, "steps": 20 }
}"#;

#[test]
fn every_command_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    for (cmd, cfg) in [("rotate", CIRCLE), ("koopman", CIRCLE), ("qcirc", CIRCLE), ("filter", ORBIT)] {
        let (a, da) = run(tmp.path(), cmd, cfg, &[]);
        let (b, db) = run(tmp.path(), cmd, cfg, &["--threads", "2"]);
        assert!(a.status.success() && b.status.success(), "{cmd}: {}", String::from_utf8_lossy(&a.stderr));
        let mut names: Vec<_> = std::fs::read_dir(&da).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(!names.is_empty());
        for n in names {
            assert_eq!(std::fs::read(da.join(&n)).unwrap(), std::fs::read(db.join(&n)).unwrap(), "{cmd}: {n:?}");
        }
    }
}

#[test]
fn outputs_carry_a_stamp() {
    let tmp = TempDir::new().unwrap();
    let (o, dir) = run(tmp.path(), "rotate", CIRCLE, &[]);
    assert!(o.status.success());
    let first = read(&dir, "trajectory.csv").lines().next().unwrap().to_string();
    assert!(first.starts_with("# opdyn-cli="));
    assert!(first.contains("config_sha256="));
    // seed override changes the hash
    let (_, other) = run(tmp.path(), "rotate", CIRCLE, &["--seed", "9"]);
    assert_ne!(first, read(&other, "trajectory.csv").lines().next().unwrap());
}

#[test]
fn single_sample_trajectory() {
    let tmp = TempDir::new().unwrap();
    let cfg = CIRCLE.replace("\"seed\": 42,", "\"seed\": 42, \"rotate\": { \"dt\": 0.1, \"samples\": 1 },");
    let (o, dir) = run(tmp.path(), "rotate", &cfg, &[]);
    assert!(o.status.success());
    let r = rows(&read(&dir, "trajectory.csv"));
    assert_eq!(r.len(), 1);
}

#[test]
fn validation_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let bad_len = CIRCLE.replace("\"x0\": [1.0]", "\"x0\": [1.0, 2.0]");
    let (o, _) = run(tmp.path(), "rotate", &bad_len, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.x0"));

    let unknown = CIRCLE.replace("\"seed\": 42,", "\"seed\": 42, \"sead\": 1,");
    let (o, _) = run(tmp.path(), "rotate", &unknown, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sead"));

    let nested = CIRCLE.replace("\"koopman\": {", "\"koopman\": { \"tt\": 1,");
    let (o, _) = run(tmp.path(), "koopman", &nested, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("koopman"));

    let version = CIRCLE.replace("\"schema_version\": 1", "\"schema_version\": 2");
    let (o, _) = run(tmp.path(), "rotate", &version, &[]);
    assert_eq!(o.status.code(), Some(2));

    let (o, _) = run(tmp.path(), "filter", CIRCLE, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exact_filter_is_consistent_on_the_orbit() {
    let tmp = TempDir::new().unwrap();
    let (o, dir) = run(tmp.path(), "filter", ORBIT, &[]);
    assert!(o.status.success());
    let r = rows(&read(&dir, "filter.csv"));
    let quantum: Vec<_> = r.iter().filter(|row| row[1] == "quantum").collect();
    assert_eq!(quantum.len(), 20);
    for row in quantum {
        assert!(row[3].parse::<f64>().unwrap() <= 1e-12);
    }
}

#[test]
fn uninformative_observations_leave_the_prior_flat() {
    let tmp = TempDir::new().unwrap();
    let cfg = ORBIT.replace("\"l\": 5,", "\"l\": 5, \"likelihood\": { \"kind\": \"uninformative\" },");
    let (o, dir) = run(tmp.path(), "filter", &cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for row in rows(&read(&dir, "filter.csv")) {
        assert!((row[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-12, "{row:?}");
    }
}

#[test]
fn zero_evidence_exits_with_three_and_names_the_step() {
    let tmp = TempDir::new().unwrap();
    let cfg = ORBIT.replace("\"l\": 5,", "\"l\": 5, \"noise\": 0.5, \"likelihood\": { \"kind\": \"event\", \"delta\": 1e-9 },");
    let (o, _) = run(tmp.path(), "filter", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"));
}

#[test]
fn observation_file_is_ingested() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("obs.csv");
    let mut text = String::from("t,y_0,y_1\n");
    for n in 1..=4 {
        let th = std::f64::consts::TAU * ((3 + n) % 8) as f64 / 8.0;
        text.push_str(&format!("{n},{},{}\n", th.cos(), th.sin()));
    }
    std::fs::write(&path, text).unwrap();
    let cfg = ORBIT
        .replace("\"steps\": 20", &format!("\"steps\": 4, \"observations\": {:?}", path.display().to_string()));
    let (o, dir) = run(tmp.path(), "filter", &cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&read(&dir, "filter.csv"));
    assert_eq!(r.len(), 12);
    assert!(r.iter().filter(|row| row[1] == "classical").all(|row| row[4].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn koopman_outputs() {
    let tmp = TempDir::new().unwrap();
    let (o, dir) = run(tmp.path(), "koopman", CIRCLE, &[]);
    assert!(o.status.success());
    for row in rows(&read(&dir, "evolution.csv")) {
        assert!(row[4].parse::<f64>().unwrap() <= 1e-12);
    }
    let sq = rows(&read(&dir, "forecast_sq.csv"));
    let at_one: Vec<f64> = sq.iter().filter(|r| r[0].parse::<f64>().unwrap() == 1.0).map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(at_one.len(), 3);
    assert!(at_one[0] > at_one[1] && at_one[1] > at_one[2]);

    let constant = CIRCLE.replace("\"koopman\": {", "\"koopman\": { \"observable\": { \"kind\": \"constant\", \"value\": 2.0 },");
    let (o, dir) = run(tmp.path(), "koopman", &constant, &[]);
    assert!(o.status.success());
    for file in ["evolution.csv", "forecast_sq.csv", "forecast_tn.csv"] {
        for row in rows(&read(&dir, file)) {
            let col = if file == "evolution.csv" { 3 } else { 4 };
            assert!(row[col].parse::<f64>().unwrap() < 1e-14, "{file}: {row:?}");
        }
    }
}

#[test]
fn qcirc_outputs() {
    let tmp = TempDir::new().unwrap();
    let (o, dir) = run(tmp.path(), "qcirc", CIRCLE, &[]);
    assert!(o.status.success());
    let r = rows(&read(&dir, "qcirc.csv"));
    for t in ["0.0000000000000000e0", "2.0000000000000000e0"] {
        let errs: Vec<f64> = r.iter().filter(|row| row[1] == t).map(|row| row[4].parse().unwrap()).collect();
        assert_eq!(errs.len(), 5);
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }
    let circuit = read(&dir, "circuit.txt");
    assert_eq!(circuit.lines().filter(|l| l.starts_with("rz(")).count(), 7);
    assert_eq!(rows(&read(&dir, "qcirc_shots.csv")).len(), 10);
}

#[test]
fn commensurate_frequencies_warn() {
    let tmp = TempDir::new().unwrap();
    let cfg = CIRCLE.replace("\"alpha\": [1.0]", "\"alpha\": [1.0, 0.5]").replace("\"x0\": [1.0]", "\"x0\": [0.5, 0.1]");
    let (o, _) = run(tmp.path(), "rotate", &cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: alpha["));
}

#[test]
fn kernel_bandwidth_accepts_the_short_key() {
    let (ta, tb) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let long = CIRCLE.replace("\"seed\": 42,", "\"seed\": 42, \"kernel\": { \"tau\": 0.25, \"p\": 0.5, \"bandwidth\": 4 },");
    let short = CIRCLE.replace("\"seed\": 42,", "\"seed\": 42, \"kernel\": { \"tau\": 0.25, \"p\": 0.5, \"J\": 4 },");
    let (a, da) = run(ta.path(), "koopman", &long, &[]);
    let (b, db) = run(tb.path(), "koopman", &short, &[]);
    assert!(a.status.success() && b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(rows(&read(&da, "eigenfrequencies.csv")), rows(&read(&db, "eigenfrequencies.csv")));
    assert_eq!(rows(&read(&da, "eigenfrequencies.csv")).len(), 9);
}
