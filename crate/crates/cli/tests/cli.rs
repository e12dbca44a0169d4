use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cassist"))
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn toa_reports_airtime() {
    let out = ok(bin()
        .args(["toa", "--payload", "64", "--sf", "7", "--ptx", "17"])
        .output()
        .unwrap());
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let toa = v["time_on_air_s"].as_f64().unwrap();
    assert!((toa - (8.0 * 64.0 + 96.0) / 5469.0).abs() < 1e-12);
}

#[test]
fn oversized_payload_fails() {
    let out = bin().args(["toa", "--payload", "200", "--sf", "10"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("51"));
}

#[test]
fn schedule_and_adr() {
    let v: serde_json::Value = serde_json::from_str(&ok(bin().args(["schedule"]).output().unwrap())).unwrap();
    assert_eq!(v["decision"]["chosen_r_a"], 8);
    let cfg = repo("scenarios/scenario2.toml");
    let v: serde_json::Value =
        serde_json::from_str(&ok(bin().arg("--config").arg(&cfg).arg("schedule").output().unwrap())).unwrap();
    assert_eq!(v["decision"]["chosen_r_a"], 0);
    let v: serde_json::Value =
        serde_json::from_str(&ok(bin().args(["adr", "--snr", "5,6,7"]).output().unwrap())).unwrap();
    assert_eq!(v["sf"], 7);
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let out = bin().arg("--config").arg(&cfg).arg("schedule").output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn weights_file_reproduces_seeded_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = repo("scenarios/synthetic_trace_s1.csv");
    ok(bin()
        .args(["init-weights", "--seed", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap());
    let run = |extra: &[&str], out: &Path| {
        ok(bin()
            .args(["simulate", "--seed", "5", "--synthetic", "2"])
            .arg("--trace")
            .arg(&trace)
            .args(extra)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap());
        std::fs::read_to_string(out.join("report.csv")).unwrap()
    };
    let weights = dir.path().join("weights.owt");
    let a = run(&[], &dir.path().join("a"));
    let b = run(&["--weights", weights.to_str().unwrap()], &dir.path().join("b"));
    assert_eq!(a, b);
}

struct Server(std::process::Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn networked_run_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let trace = repo("scenarios/synthetic_trace_s1.csv");
    let mut child = bin()
        .args(["serve", "--bind", "127.0.0.1:0", "--seed", "3"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let _server = Server(child);
    let addr = loop {
        let mut line = String::new();
        assert!(stderr.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(a) = line.trim().strip_prefix("listening on ") {
            break a.to_string();
        }
    };

    let edge = dir.path().join("edge");
    let local = dir.path().join("local");
    ok(bin()
        .args(["edge", "--seed", "3", "--synthetic", "4", "--server", &addr])
        .arg("--trace")
        .arg(&trace)
        .arg("--out")
        .arg(&edge)
        .output()
        .unwrap());
    ok(bin()
        .args(["simulate", "--seed", "3", "--synthetic", "4"])
        .arg("--trace")
        .arg(&trace)
        .arg("--out")
        .arg(&local)
        .output()
        .unwrap());
    for f in ["report.csv", "summary.json"] {
        let a = std::fs::read(edge.join(f)).unwrap();
        let b = std::fs::read(local.join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn wpt_and_assist_on_a_wav() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone.wav");
    let samples: Vec<f32> = (0..16_384).map(|i| (i as f32 * 0.3).sin() * 0.5).collect();
    std::fs::write(&wav, cassist_core::wavelet::encode_wav(&samples, 16_000)).unwrap();
    let csv = ok(bin().args(["wpt", "--depth", "4"]).arg(&wav).output().unwrap());
    assert_eq!(csv.lines().count(), 16);
    let out = dir.path().join("assist");
    ok(bin().arg("assist").arg(&wav).arg("--out").arg(&out).output().unwrap());
    let mask = std::fs::read_to_string(out.join("mask.txt")).unwrap();
    assert_eq!(mask.trim().chars().filter(|&c| c == '1').count(), 2);
    assert_eq!(
        std::fs::read_to_string(out.join("importance.csv"))
            .unwrap()
            .lines()
            .count(),
        8
    );
}
