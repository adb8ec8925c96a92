use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nvspin::cli::RunManifest;
use nvspin::estimation::FitResult;

fn nvspin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nvspin")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(rows: &[Vec<String>], k: usize) -> Vec<f64> {
    rows.iter().map(|r| r[k].parse().unwrap()).collect()
}

fn trace_frequency(path: &Path) -> f64 {
    let rows = read_rows(path);
    nvspin::oscillation::fit_cosine(&column(&rows, 0), &column(&rows, 1)).unwrap().frequency
}

const SWEEP_CONFIG: &str = "b_z = 509.0\n[readout]\nrepetitions = 60000\n[sweep]\nb1_max = 10.0\n";

#[test]
fn enhancement_at_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvspin(dir.path(), &["enhancement", "--out", "e.csv", "--b-field-min", "0", "--b-field-max", "0", "--b-field-steps", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bz_gauss,alpha_p1,alpha_0,alpha_m1,method");
    let row = &read_rows(&dir.path().join("e.csv"))[0];
    let alpha: Vec<f64> = row[1..4].iter().map(|v| v.parse().unwrap()).collect();
    assert!((alpha[1].abs() / 16.0 - 1.0).abs() < 0.05);
    assert!((alpha[0].abs() / 9.0 - 1.0).abs() < 0.05 && (alpha[2].abs() / 9.0 - 1.0).abs() < 0.05);
    assert_eq!(row[4], "exact");
    assert!(dir.path().join("e.csv.manifest.json").exists());
}

#[test]
fn both_methods_agree_below_600_gauss() {
    let dir = tempfile::tempdir().unwrap();
    let out = nvspin(dir.path(), &["enhancement", "--out", "e.csv", "--b-field-max", "590", "--b-field-steps", "60", "--method", "both"]);
    assert_eq!(code(&out), 0);
    let rows = read_rows(&dir.path().join("e.csv"));
    assert_eq!(rows.len(), 120);
    for pair in rows.chunks(2) {
        assert_eq!((pair[0][4].as_str(), pair[1][4].as_str()), ("first-order", "exact"));
        assert_eq!(pair[0][0], pair[1][0]);
        for k in 1..4 {
            let (a, b): (f64, f64) = (pair[0][k].parse().unwrap(), pair[1][k].parse().unwrap());
            assert!(((a - b) / b).abs() < 1e-3);
        }
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&nvspin(p, &["enhancement", "--out", "e.csv", "--b-field-steps", "0"])), 2);
    assert_eq!(code(&nvspin(p, &["enhancement", "--out", "e.csv", "--b-field-min", "10", "--b-field-max", "5"])), 2);
    assert_eq!(code(&nvspin(p, &["rabi", "--out", "r.csv", "--manifold", "0", "--points", "7"])), 2);
    assert_eq!(code(&nvspin(p, &["rabi", "--out", "r.csv", "--manifold", "2"])), 2);
    assert_eq!(code(&nvspin(p, &["--threads", "0", "enhancement", "--out", "e.csv"])), 2);
    assert_eq!(code(&nvspin(p, &["fit", "--data", "missing.csv", "--report", "r.json"])), 2);
    fs::write(p.join("bad.toml"), "delta = 2870.0\nwobble = 1\n").unwrap();
    assert_eq!(code(&nvspin(p, &["enhancement", "--config", "bad.toml", "--out", "e.csv"])), 2);
    assert_eq!(code(&nvspin(p, &["frobnicate"])), 2);
}

#[test]
fn three_manifolds_give_distinct_frequencies() {
    let dir = tempfile::tempdir().unwrap();
    let mut freqs = Vec::new();
    for m in ["+1", "0", "-1"] {
        let out = nvspin(dir.path(), &["rabi", "--out", "r.csv", "--manifold", m, "--b-field", "450"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        freqs.push(trace_frequency(&dir.path().join("r.csv")));
    }
    for i in 0..3 {
        for j in 0..i {
            assert!((freqs[i] / freqs[j] - 1.0).abs() > 0.1, "{freqs:?}");
        }
    }
}

#[test]
fn rwa_and_lab_frames_agree() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "b1 = 30.0\n").unwrap();
    let mut freqs = Vec::new();
    for frame in ["rwa", "lab-trotter"] {
        let out = nvspin(
            dir.path(),
            &["rabi", "--config", "c.toml", "--out", "r.csv", "--manifold", "+1", "--b-field", "450", "--frame", frame, "--points", "40", "--tmax", "20.0"],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        freqs.push(trace_frequency(&dir.path().join("r.csv")));
    }
    assert!((freqs[1] / freqs[0] - 1.0).abs() < 1e-2, "{freqs:?}");
}

#[test]
fn synth_fit_round_trip_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SWEEP_CONFIG).unwrap();
    assert_eq!(code(&nvspin(p, &["synth", "--config", "c.toml", "--out", "d.csv", "--seed", "3"])), 0);
    let out = nvspin(p, &["fit", "--config", "c.toml", "--data", "d.csv", "--report", "r.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit: FitResult = serde_json::from_str(&fs::read_to_string(p.join("r.json")).unwrap()).unwrap();
    assert!((fit.a_perp + 2.62).abs() < 3.0 * fit.a_perp_std_error, "{} +- {}", fit.a_perp, fit.a_perp_std_error);
    assert!(fit.a_perp_std_error > 0.0 && fit.a_perp_std_error < 0.2);

    let m: RunManifest = serde_json::from_str(&fs::read_to_string(p.join("d.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "synth");
    assert_eq!(m.seed, Some(3));
    assert_eq!(m.config["system"]["b_z"], 509.0);
    assert_eq!(m.config["readout"]["repetitions"], 60000);
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(p.join("r.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "fit");
    assert_eq!(m.tool_version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn single_manifold_fit_is_rank_deficient() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SWEEP_CONFIG).unwrap();
    assert_eq!(code(&nvspin(p, &["synth", "--config", "c.toml", "--out", "d.csv"])), 0);
    let text = fs::read_to_string(p.join("d.csv")).unwrap();
    let single: Vec<&str> = text.lines().filter(|l| l.starts_with("manifold") || l.starts_with("0,")).collect();
    fs::write(p.join("single.csv"), single.join("\n")).unwrap();
    let out = nvspin(p, &["fit", "--config", "c.toml", "--data", "single.csv", "--report", "r.json"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank-deficient"));
    assert!(!p.join("r.json").exists());
}

#[test]
fn outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("c.toml"), SWEEP_CONFIG).unwrap();
    fs::write(p.join("s.csv"), "repetitions,amplitudes,points,periods\n30000,5,60,3\n120000,5,60,3\n60000,4,40,2.5\n").unwrap();
    for (threads, suffix) in [("1", "a"), ("4", "b")] {
        assert_eq!(code(&nvspin(p, &["--threads", threads, "synth", "--config", "c.toml", "--out", &format!("d_{suffix}.csv"), "--seed", "9"])), 0);
        let out = nvspin(
            p,
            &["--threads", threads, "precision", "--config", "c.toml", "--strategies", "s.csv", "--mc-seeds", "12", "--seed", "4", "--out", &format!("p_{suffix}.csv")],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(fs::read(p.join("d_a.csv")).unwrap(), fs::read(p.join("d_b.csv")).unwrap());
    assert_eq!(fs::read(p.join("p_a.csv")).unwrap(), fs::read(p.join("p_b.csv")).unwrap());
    let rows = read_rows(&p.join("p_a.csv"));
    assert_eq!(rows.len(), 3);
    let sigma = column(&rows, 5);
    assert!(sigma[1] < sigma[0]);
    assert!(p.join("p_a.csv.manifest.json").exists());
}
