use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn ecgauth(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgauth"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A generated corpus plus its enrolled database.
fn corpus(spec: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("spec.txt"), spec).unwrap();
    let o = ecgauth(dir.path(), &["--seed", "5", "synth", "--spec", "spec.txt", "--out", "c"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = ecgauth(dir.path(), &["enroll", "--manifest", "c/enroll.csv", "--db", "db.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir
}

#[test]
fn synth_writes_records_and_manifests_deterministically() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("spec.txt"), "n_subjects=10\nn_unknown=2\nn_tests=1\ntrain_s=20\ntest_s=5\n").unwrap();
    for out in ["a", "b"] {
        let o = ecgauth(dir.path(), &["--seed", "9", "--quiet", "synth", "--spec", "spec.txt", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let train = fs::read_dir(dir.path().join("a/train")).unwrap().count();
    assert_eq!(train, 10);
    assert!(dir.path().join("a/trials.csv").exists());
    for rel in ["enroll.csv", "trials.csv", "train/s04.csv", "test/s10_1.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(rel)).unwrap(), fs::read(dir.path().join("b").join(rel)).unwrap(), "{rel}");
    }
    let record = fs::read_to_string(dir.path().join("a/train/s01.csv")).unwrap();
    assert!(record.lines().any(|l| l.starts_with("# rpeak=")));
}

#[test]
fn synth_without_a_spec_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let o = ecgauth(dir.path(), &["synth", "--spec", "missing.txt", "--out", "c"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.txt"));
}

#[test]
fn enroll_skips_duplicates_and_reports_short_records() {
    let dir = corpus("n_subjects=3\nn_unknown=1\nn_tests=1\n");
    let p = dir.path();
    fs::write(p.join("short.txt"), "n_subjects=1\nn_unknown=0\ntrain_s=10\ntest_s=5\n").unwrap();
    assert_eq!(code(&ecgauth(p, &["synth", "--spec", "short.txt", "--out", "s"])), 0);
    fs::write(
        p.join("m.csv"),
        "path,id\nc/train/s01.csv,a\nc/train/s02.csv,a\nc/train/s03.csv,b\ns/train/s01.csv,tiny\n",
    )
    .unwrap();
    let o = ecgauth(p, &["enroll", "--manifest", "m.csv", "--db", "new.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("duplicate id `a`"), "{err}");
    assert!(err.contains("`tiny`") && err.contains("insufficient data"), "{err}");
    let db = fs::read_to_string(p.join("new.txt")).unwrap();
    let ids: Vec<&str> = db.lines().filter_map(|l| l.strip_prefix("ENTITY ")).collect();
    assert_eq!(ids, ["a", "b"]);

    fs::write(p.join("bad.csv"), "path,id\ns/train/s01.csv,tiny\n").unwrap();
    let o = ecgauth(p, &["enroll", "--manifest", "bad.csv", "--db", "none.txt"]);
    assert_eq!(code(&o), 1);
    assert!(!p.join("none.txt").exists());
}

#[test]
fn auth_exit_codes_follow_the_outcome() {
    let dir = corpus("n_subjects=4\nn_unknown=1\nn_tests=1\n");
    let p = dir.path();
    let enrolled = fs::read_to_string(p.join("c/enroll.csv")).unwrap();
    let id = enrolled.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    let o = ecgauth(p, &["auth", "--db", "db.txt", "--record", &format!("c/test/{id}_1.csv")]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("outcome,best_id,best_mse,gate_mse"));
    assert!(out.lines().nth(1).unwrap().starts_with(&format!("known,{id},")));

    let mut noise = String::from("fs=250,subject=noise,lead=x\n");
    let mut state = 12345u64;
    for _ in 0..5000 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let u = (state >> 11) as f64 / (1u64 << 53) as f64;
        noise.push_str(&format!("{}\n", 20.0 * (u - 0.5)));
    }
    fs::write(p.join("noise.csv"), noise).unwrap();
    let o = ecgauth(p, &["auth", "--db", "db.txt", "--record", "noise.csv"]);
    assert_eq!(code(&o), 4, "{}", stdout(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("rejected,"));

    let o = ecgauth(p, &["auth", "--db", "absent.txt", "--record", "noise.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_replays_a_decision_log() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let mut manifest = String::from("path,actual\n");
    let mut log = String::from("trial_id,outcome,best_id,best_mse,gate_mse\n");
    let rows = [(84, "known:e1", "known,e1"), (2, "unknown", "known,e1"), (30, "known:e1", "unknown,e1"), (6, "unknown", "unknown,e1")];
    let mut n = 0;
    for (count, actual, outcome) in rows {
        for _ in 0..count {
            manifest.push_str(&format!("t{n}.csv,{actual}\n"));
            log.push_str(&format!("t{n},{outcome},0.1,0.1\n"));
            n += 1;
        }
    }
    for k in 0..28 {
        manifest.push_str(&format!("r{k}.csv,known:e1\n"));
        log.push_str(&format!("r{k},rejected,,nan,9\n"));
    }
    fs::write(p.join("trials.csv"), manifest).unwrap();
    fs::write(p.join("log.csv"), log).unwrap();
    let o = ecgauth(p, &["eval", "--trials", "trials.csv", "--replay", "log.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("known,84,2\nunknown,30,6\n"), "{out}");
    assert!(out.contains("accuracy=0.737705 recall_unknown=0.75"), "{out}");
    assert!(out.contains("n_trials=150 rejected=28"), "{out}");

    fs::write(p.join("empty.csv"), "path,actual\n").unwrap();
    let o = ecgauth(p, &["eval", "--trials", "empty.csv", "--replay", "log.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_on_an_all_known_corpus_and_under_a_strict_gate() {
    let dir = corpus("n_subjects=4\nn_unknown=0\nn_tests=1\n");
    let p = dir.path();
    let args = ["--seed", "2", "eval", "--db", "db.txt", "--trials", "c/trials.csv", "--decisions", "d1.csv"];
    let o = ecgauth(p, &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("accuracy=1 "), "{}", stdout(&o));

    let again = ecgauth(p, &["--seed", "2", "eval", "--db", "db.txt", "--trials", "c/trials.csv", "--decisions", "d2.csv"]);
    assert_eq!(stdout(&o), stdout(&again));
    assert_eq!(fs::read(p.join("d1.csv")).unwrap(), fs::read(p.join("d2.csv")).unwrap());

    let o = ecgauth(p, &["eval", "--db", "db.txt", "--trials", "c/trials.csv", "--strict-gate", "0.000001"]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("rejected=4"), "{}", stdout(&o));
}

#[test]
fn sweep_prints_curve_and_argmax() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    let corpus = "repeats=1\nn_subjects=4\nn_unknown=1\nn_tests=1\n";
    fs::write(p.join("one.txt"), format!("variable=window_s\ngrid=0.6\n{corpus}")).unwrap();
    let o = ecgauth(p, &["sweep", "--plan", "one.txt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 3, "{out}");
    assert_eq!(lines[0], "value_s,accuracy_mean,accuracy_std,rejected_mean");
    assert_eq!(lines[2], "argmax=0.6s");

    fs::write(p.join("far.txt"), format!("variable=train_period_s\ngrid=30,200\n{corpus}")).unwrap();
    let o = ecgauth(p, &["sweep", "--plan", "far.txt", "--out", "curve.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"));
    let curve = fs::read_to_string(p.join("curve.csv")).unwrap();
    assert!(curve.lines().nth(2).unwrap().starts_with("200,nan"), "{curve}");
    assert_eq!(stdout(&o).trim(), "argmax=30s");

    fs::write(p.join("bad.txt"), "grid=0.4\n").unwrap();
    assert_eq!(code(&ecgauth(p, &["sweep", "--plan", "bad.txt"])), 2);
}

#[test]
fn unknown_keys_and_bad_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let p = dir.path();
    fs::write(p.join("cfg.txt"), "window_s=0.5\nnot_a_key=1\n").unwrap();
    fs::write(p.join("spec.txt"), "n_subjects=2\n").unwrap();
    let o = ecgauth(p, &["--config", "cfg.txt", "synth", "--spec", "spec.txt", "--out", "c"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("not_a_key"));
    assert_eq!(code(&ecgauth(p, &["--set", "window_s", "synth", "--spec", "spec.txt", "--out", "c"])), 2);
    assert_eq!(code(&ecgauth(p, &["frobnicate"])), 2);
}
