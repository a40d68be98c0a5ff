use std::path::Path;
use std::process::{Command, Output};

use collision_core::scenario::{list_presets, preset, ScenarioConfig};

fn collide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collide"))
        .args(args)
        .env_remove("COLLISION_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn list_shows_the_catalog() {
    let o = collide(&["list"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 11);
    for name in [
        "exact-unitary-qubit",
        "weak-potential",
        "zeno-qubit",
        "finite-decoherence-gaussian",
        "two-substep-feedback",
        "milburn-caves",
        "newton-pair",
        "joint-measurement-entangler",
        "magnus-symmetric-switch",
        "filtering-ensemble",
        "filtering-feedback",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn export_reparses_to_the_same_cycle() {
    for name in list_presets() {
        let o = collide(&["export", name]);
        assert!(o.status.success());
        let back = ScenarioConfig::from_json(&stdout(&o), name).unwrap();
        let orig = preset(name).unwrap();
        assert_eq!(back, orig);
        assert_eq!(back.cycle().unwrap(), orig.cycle().unwrap(), "{name}");
    }
}

#[test]
fn newton_pair_operator_assignments() {
    let o = collide(&["export", "newton-pair"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let steps = v["substeps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    let pick = |k: usize, t: usize| {
        let term = &steps[k][t];
        (term["m"]["kind"].as_str().unwrap().to_string(), term["ancilla"].as_u64().unwrap())
    };
    // M₁ = p on meter 1, M₂ = p on meter 2, M₃ = x on meter 2, M₄ = x on meter 1
    assert_eq!(pick(0, 0), ("momentum".into(), 0));
    assert_eq!(pick(0, 1), ("momentum".into(), 1));
    assert_eq!(pick(1, 0), ("position".into(), 1));
    assert_eq!(pick(1, 1), ("position".into(), 0));
}

#[test]
fn invalid_config_exits_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"name\": \"x\",\n  \"system\": [2],\n  \"s0\": {\"op\": \"pauli_q\"}\n}").unwrap();
    for cmd in ["run", "validate"] {
        let o = collide(&[cmd, bad.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("s0.op"), "{err}");
        assert!(err.contains("line 4"), "{err}");
    }
    let o = collide(&["run", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(collide(&["preset", "no-such-preset"]).status.code(), Some(2));

    // structurally valid JSON, semantically invalid sweep
    let mut c = preset("zeno-qubit").unwrap();
    c.sweep.taus.clear();
    let path = dir.path().join("sweep.json");
    std::fs::write(&path, c.to_json()).unwrap();
    assert_eq!(collide(&["validate", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = preset("finite-decoherence-gaussian").unwrap();
    c.checks = vec![collision_core::scenario::CheckConfig::PurityPreserved { tol: 1e-9 }];
    let path = dir.path().join("c.json");
    std::fs::write(&path, c.to_json()).unwrap();
    let out = dir.path().join("out");
    let o = collide(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["passed"], false);
}

#[test]
fn zeno_csv_follows_the_per_collision_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = collide(&["preset", "zeno-qubit", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("coherence_n20.csv"));
    assert_eq!(header, ["t", "abs_rho01"]);
    // σ² = 0.09, Δs = 2, τ′ḡ = 1: each collision multiplies |ρ₀₁| by exp(−σ²Δs²/2)
    let chi = (-0.09f64 * 4.0 / 2.0).exp();
    for (k, r) in rows.iter().enumerate() {
        let want = 0.5 * chi.powi(k as i32);
        assert!((r[1] - want).abs() <= 1e-9 * want, "step {k}");
    }
    // the continuum column is exp[−(t/τ)(1 − |χ|)] on the same grid
    let (header, rows) = read_csv(&dir.path().join("zeno.csv"));
    let c = header.iter().position(|h| h == "continuum_curve").unwrap();
    for r in &rows {
        let want = 0.5 * (-(r[0] / 0.05) * (1.0 - chi)).exp();
        assert!((r[c] - want).abs() <= 1e-9 * want);
    }
}

#[test]
fn milburn_caves_convergence_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = collide(&["preset", "milburn-caves", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("convergence.csv"));
    assert_eq!(header, ["tau", "n", "trace_distance"]);
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        assert!(w[1][0] < w[0][0]);
        let ratio = w[0][2] / w[1][2];
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let run = |d: &Path, seed: &str| {
        let o = collide(&[
            "preset",
            "filtering-ensemble",
            "--ntraj",
            "64",
            "--seed",
            seed,
            "--out",
            d.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(a.path(), "11");
    run(b.path(), "11");
    run(c.path(), "12");
    for f in ["record_0.csv", "ensemble_rho01.csv", "manifest.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    assert_ne!(
        std::fs::read(a.path().join("record_0.csv")).unwrap(),
        std::fs::read(c.path().join("record_0.csv")).unwrap()
    );
    let (header, rows) = read_csv(&a.path().join("record_0.csv"));
    assert!(["seed", "stream", "outcome", "dw_re", "current"].iter().all(|h| header.iter().any(|x| x == h)));
    assert_eq!(rows[0][2], 11.0);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 11);
    assert_eq!(m["n_traj"], 64);
}

#[test]
fn output_directory_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_collide"))
        .args(["preset", "exact-unitary-qubit"])
        .env("COLLISION_OUT_DIR", root.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.path().join("exact-unitary-qubit").join("manifest.json").exists());
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = collide(&[
        "preset",
        "weak-potential",
        "--tau-points",
        "2",
        "--hbar",
        "2.0",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.code().is_some());
    let cfg = ScenarioConfig::from_json(&std::fs::read_to_string(dir.path().join("config.json")).unwrap(), "c").unwrap();
    assert_eq!(cfg.sweep.ns, vec![1024, 2048]);
    assert_eq!(cfg.hbar, 2.0);
}
