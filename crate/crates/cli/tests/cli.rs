use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn selfrep(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfrep"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn summary(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("summary.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn validate_params_exit_statuses() {
    let out = tempfile::tempdir().unwrap();
    let ok = selfrep(
        &["validate-params", "--config", &config("identity.toml")],
        out.path(),
    );
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("verdict: Valid"));

    let bad = selfrep(
        &["validate-params", "--config", &config("invalid.toml")],
        out.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stdout(&bad).contains("[FAIL] p>d(d−1)"));
    assert!(stdout(&bad).contains("lhs = 2, rhs = 2"));

    let missing = selfrep(&["validate-params"], out.path());
    assert_eq!(missing.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[model]\np = 4.0\nvariant = \"bulk\"\n").unwrap();
    let o = selfrep(
        &["validate-params", "--config", broken.to_str().unwrap()],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field `r`"));
}

#[test]
fn evaluate_identity_total_is_five() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(
        &[
            "evaluate",
            "--config",
            &config("identity.toml"),
            "--tag",
            "id",
        ],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let dir = out.path().join("identity/id");
    let s = summary(&dir);
    assert!((s["energy"]["total"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(s["admissible"], Value::Bool(true));
    assert!(dir.join("config-echo.toml").exists());
    assert!(dir.join("evaluate.csv").exists());
    let echo = std::fs::read_to_string(dir.join("config-echo.toml")).unwrap();
    assert!(echo.contains("p = 4.0") && echo.contains("command = \"evaluate\""));
}

#[test]
fn evaluate_fold_reports_inadmissibility_and_defect() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(
        &[
            "evaluate",
            "--config",
            &config("identity.toml"),
            "--scenario",
            "fold",
            "--tag",
            "f",
            "--pgm",
        ],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("inadmissible"));
    let dir = out.path().join("fold/f");
    let s = summary(&dir);
    assert_eq!(s["admissible"], Value::Bool(false));
    let bad = &s["inadmissible"];
    assert_eq!(
        bad["nonpositive_elements"].as_u64().unwrap() * 2,
        bad["elements"].as_u64().unwrap()
    );
    assert!(s["energy"].is_null());
    assert!((s["cnc"]["defect"].as_f64().unwrap() - 1.0).abs() < 0.02);
    assert!(dir.join("multiplicity.pgm").exists());
}

#[test]
fn evaluate_angle_doubling_flags_divergence() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(
        &[
            "evaluate",
            "--config",
            &config("divergence.toml"),
            "--scenario",
            "angle-doubling",
            "--n",
            "4",
            "--tag",
            "a",
        ],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let s = summary(&out.path().join("angle-doubling/a"));
    let r = &s["refinement"];
    assert_eq!(r["n_fine"].as_u64(), Some(8));
    assert!(r["ratio"].as_f64().unwrap() >= 2.0, "{r}");
    assert_eq!(r["divergence_suspected"], Value::Bool(true));
}

#[test]
fn cnc_check_identity_without_config() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(
        &["cnc-check", "--resolution", "512", "--tag", "c"],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let dir = out.path().join("identity/c");
    let cnc: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("cnc.json")).unwrap()).unwrap();
    assert!(cnc["defect"].as_f64().unwrap().abs() <= 0.01);
    assert_eq!(cnc["raster_resolution"].as_u64(), Some(512));
    let pgm = std::fs::read(dir.join("multiplicity.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n512 512\n1\n"));
    assert_eq!(pgm.len(), "P5\n512 512\n1\n".len() + 512 * 512);
}

#[test]
fn low_resolution_is_a_config_error() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(&["cnc-check", "--resolution", "32"], out.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mesh_file_scenario_with_positions() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("square.json");
    std::fs::write(
        &mesh,
        r#"{"vertices": [[0,0],[1,0],[1,1],[0,1]],
            "triangles": [[0,1,2],[0,2,3]],
            "positions": [[0,0],[2,0],[2,2],[0,2]]}"#,
    )
    .unwrap();
    let o = selfrep(
        &[
            "cnc-check",
            "--scenario",
            mesh.to_str().unwrap(),
            "--tag",
            "m",
        ],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let cnc: Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("square/m/cnc.json")).unwrap(),
    )
    .unwrap();
    assert!((cnc["det_integral"].as_f64().unwrap() - 4.0).abs() < 1e-12);

    std::fs::write(
        &mesh,
        r#"{"vertices": [[0,0],[1,0],[0,1]], "triangles": [[0,2,1]]}"#,
    )
    .unwrap();
    let o = selfrep(
        &["cnc-check", "--scenario", mesh.to_str().unwrap()],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("triangle 0"));
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn minimize_is_reproducible_across_runs_and_workers() {
    let out = tempfile::tempdir().unwrap();
    let run = |tag: &str, workers: &str| {
        let o = selfrep(
            &[
                "minimize",
                "--config",
                &config("identity.toml"),
                "--n",
                "4",
                "--perturb",
                "0.02",
                "--seed",
                "11",
                "--workers",
                workers,
                "--tag",
                tag,
            ],
            out.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        out.path().join("identity").join(tag)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "3");
    for file in [
        "trace.csv",
        "field.json",
        "summary.json",
        "config-echo.toml",
    ] {
        assert_eq!(read(&a, file), read(&b, file), "{file}");
        assert_eq!(read(&a, file), read(&c, file), "{file}");
    }
    let trace = String::from_utf8(read(&a, "trace.csv")).unwrap();
    assert!(
        trace.starts_with("iter,total,grad_term,det_term,nonlocal_term,grad_norm,step,min_det\n")
    );
    let s = summary(&a);
    assert_eq!(s["termination"], Value::String("converged".into()));

    // The exported field restarts as a scenario.
    let o = selfrep(
        &[
            "cnc-check",
            "--scenario",
            a.join("field.json").to_str().unwrap(),
            "--tag",
            "r",
        ],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let restarted: Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("field/r/cnc.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(restarted["det_integral"], s["cnc"]["det_integral"]);
}

#[test]
fn infeasible_start_is_a_runtime_failure() {
    let out = tempfile::tempdir().unwrap();
    let o = selfrep(
        &[
            "minimize",
            "--config",
            &config("identity.toml"),
            "--n",
            "8",
            "--perturb",
            "0.5",
        ],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}

#[test]
fn gamma_sweep_on_pinch_lists_series() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[model]\np = 8.0\nr = 20.0\nq = 4.0\ns = 0.5\nvariant = \"surface\"\n\n\
         [optimizer]\nmax_iters = 2000\n\n\
         [experiment]\nn = 4\nresolution = 128\neps0 = 0.1\neps_steps = 3\neps_factor = 0.5\n",
    )
    .unwrap();
    let o = selfrep(
        &[
            "gamma-sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--scenario",
            "pinch",
            "--tag",
            "g",
        ],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = out.path().join("pinch/g");
    let s = summary(&run);
    assert_eq!(s["schedule"].as_array().unwrap().len(), 3);
    assert_eq!(s["penalized_nonlocal"].as_array().unwrap().len(), 3);
    assert_eq!(s["ratios"].as_array().unwrap().len(), 2);
    for (d, t) in s["defects"]
        .as_array()
        .unwrap()
        .iter()
        .zip(s["raster_tolerances"].as_array().unwrap())
    {
        assert!(d.as_f64().unwrap() <= t.as_f64().unwrap());
    }
    for m in s["min_dets"].as_array().unwrap() {
        assert!(m.as_f64().unwrap() > 0.0);
    }
    let csv = String::from_utf8(read(&run, "sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("k,epsilon,total,elastic,"));
    assert!(stdout(&o).contains("eps*D"));
}

#[test]
fn bench_scaling_writes_cost_table() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    std::fs::write(
        &cfg,
        "[model]\np = 4.0\nr = 3.0\nvariant = \"bulk\"\n\n[experiment]\nbench_repeats = 1\n",
    )
    .unwrap();
    let o = selfrep(
        &[
            "bench-scaling",
            "--config",
            cfg.to_str().unwrap(),
            "--sizes",
            "4,8",
            "--tag",
            "b",
        ],
        out.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = out.path().join("bench-scaling/b");
    let s = summary(&run);
    assert!((s["pair_slope"].as_f64().unwrap() + 4.0).abs() < 1e-12);
    let csv = String::from_utf8(read(&run, "cost.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,n,h,pairs,median_seconds,fitted_slope");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("bulk,4,0.25,1024,"));

    let o = selfrep(
        &[
            "bench-scaling",
            "--config",
            cfg.to_str().unwrap(),
            "--sizes",
            "8",
        ],
        out.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}
