use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_selfpulse"));
    c.env_remove("SELFPULSE_DEFAULT_TOL")
        .env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

#[test]
fn exit_code_matrix() {
    let d = TempDir::new().unwrap();
    let cases: &[(&[&str], i32)] = &[
        (
            &[
                "fixed-point",
                "--kappa",
                "1",
                "--gamma",
                "0.1",
                "--epsilon",
                "0.13",
            ],
            0,
        ),
        (&["fixed-point", "--kappa", "0"], 1),
        (&["fixed-point", "--kappa", "-1"], 1),
        (&["fixed-point", "--kappa", "abc"], 1),
        (&["no-such-command"], 1),
        (&[], 1),
        (&["--help"], 0),
        (&["hopf", "--kappa", "1", "--gamma", "0"], 0),
        (&["figure2", "--epsilons", "0.01,0.3"], 2),
        (&["figure2", "--epsilons", "0.01"], 0),
        (&["figure1", "--delta-fractions", ""], 1),
        (&["figure1", "--delta-fractions", "-0.1"], 1),
        (&["sweep", "--kappa", "1:2:0"], 1),
        (&["sweep", "--kappa", "2:1:3"], 1),
        (&["phase-diffusion", "--delta-epsilon", "0"], 1),
        (&["phase-diffusion", "--delta-epsilon", "-0.1"], 1),
        (
            &["phase-diffusion", "--n-ensemble", "20", "--t-end", "5"],
            1,
        ),
        (&["simulate", "--t-end", "10", "--y0", "0.1,0,0"], 1),
        (&["spectrum", "--epsilon", "0.5"], 1),
        (&["spectrum", "--pair", "1,5"], 1),
        (&["limit-cycle", "--delta-epsilon", "-0.01"], 1),
        (&["hopf", "--gnuplot", "--format", "json"], 1),
    ];
    for (args, expect) in cases {
        let mut full = vec!["--out", "o"];
        full.extend_from_slice(args);
        let o = run(d.path(), &full);
        assert_eq!(
            code(&o),
            *expect,
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
}

#[test]
fn fixed_point_report() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "fixed-point",
            "--kappa",
            "1",
            "--gamma",
            "0.1",
            "--epsilon",
            "0.13",
            "--out",
            "fp",
        ],
    );
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!((v["beta_i0"].as_f64().unwrap() + 0.30608).abs() < 1e-5);
    assert_eq!(v["classification"], "stable");
    assert_eq!(read_json(&d.path().join("fp/fixed_point.json")), v);

    let o = run(d.path(), &["fixed-point", "--epsilon", "0", "--out", "fp0"]);
    let v = json(&o);
    assert_eq!(v["beta_i0"], 0.0);
    assert_eq!(v["alpha_i0"], 0.0);
    assert_eq!(v["classification"], "stable");
}

#[test]
fn figure2_threshold_message_names_epsilon_h() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &["figure2", "--epsilons", "0.01,0.25", "--out", "f"],
    );
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("epsilon_h = 0.2224"), "{err}");
}

#[test]
fn figure2_single_curve_is_finite() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["figure2", "--epsilons", "0.01", "--out", "f"]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("f/figure2.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("omega,S33_abs_1"));
    for l in lines {
        assert!(l.split(',').all(|x| x.parse::<f64>().unwrap().is_finite()));
    }
    assert!(d.path().join("f/figure2.svg").exists());
}

#[test]
fn sweep_matches_small_gamma_limits() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "sweep",
            "--kappa",
            "0.1:10:25",
            "--gamma",
            "0",
            "--quantities",
            "a,epsilon_h",
            "--out",
            "s",
        ],
    );
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(d.path().join("s/sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kappa,gamma,a,epsilon_h"));
    let mut n = 0;
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        let k = v[0];
        assert!((v[2] + 33.0 * k / 68.0).abs() <= 1e-12 * k);
        assert!((v[3] - k * k / (4.0 * 2f64.sqrt())).abs() <= 1e-12 * k * k);
        n += 1;
    }
    assert_eq!(n, 25);
}

#[test]
fn sweep_rows_are_row_major() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "sweep", "--kappa", "1:2:2", "--gamma", "0:0.1:3", "--format", "json", "--out", "s",
        ],
    );
    assert_eq!(code(&o), 0);
    let v = read_json(&d.path().join("s/sweep.json"));
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[1][0], 1.0);
    assert_eq!(rows[1][1], 0.05);
    assert_eq!(rows[3][0], 2.0);
}

#[test]
fn config_file_with_flag_precedence() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kappa": 2.0, "gamma": 0.2, "epsilon": 0.1, "out": "from_cfg"}"#,
    )
    .unwrap();
    let o = run(
        d.path(),
        &["--config", "cfg.json", "fixed-point", "--epsilon", "0.3"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["kappa"], 2.0);
    assert_eq!(v["epsilon"], 0.3);
    let m = read_json(&d.path().join("from_cfg/manifest.json"));
    assert_eq!(m["params"]["kappa"], 2.0);
    assert_eq!(m["params"]["epsilon"], 0.3);

    std::fs::write(&cfg, r#"{"kappa": 1.0, "bogus": 1}"#).unwrap();
    let o = run(d.path(), &["--config", "cfg.json", "fixed-point"]);
    assert_eq!(code(&o), 1);
    let o = run(d.path(), &["--config", "missing.json", "fixed-point"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn realization_block_sets_chi() {
    let d = TempDir::new().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kappa": 1.0, "gamma": 0.1, "epsilon": 0.01,
            "realization": {"kind": "membrane", "mass": 1e-12, "nu": 6.283185307e6,
                            "curvature": 1e12, "epsilon_c": [1e6, 0.0], "delta": 0.0}}"#,
    )
    .unwrap();
    let o = run(
        d.path(),
        &["--config", "cfg.json", "--out", "r", "fixed-point"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let chi = json(&o)["chi"].as_f64().unwrap();
    assert!(chi > 0.0 && chi != 1.0);
    // an explicit χ that disagrees with the realization is rejected
    let o = run(
        d.path(),
        &[
            "--config",
            "cfg.json",
            "--out",
            "r2",
            "fixed-point",
            "--chi",
            "1",
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn tolerance_env_var_is_recorded() {
    let d = TempDir::new().unwrap();
    let o = bin()
        .current_dir(d.path())
        .env("SELFPULSE_DEFAULT_TOL", "1e-7")
        .args(["simulate", "--t-end", "20", "--samples", "21", "--out", "s"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m = read_json(&d.path().join("s/manifest.json"));
    assert_eq!(m["params"]["rel_tol"], 1e-7);
    let o = bin()
        .current_dir(d.path())
        .env("SELFPULSE_DEFAULT_TOL", "fast")
        .args(["simulate", "--out", "s2"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
    // an explicit flag wins over the environment
    let o = bin()
        .current_dir(d.path())
        .env("SELFPULSE_DEFAULT_TOL", "1e-7")
        .args([
            "simulate",
            "--t-end",
            "20",
            "--samples",
            "21",
            "--rel-tol",
            "1e-10",
            "--out",
            "s3",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(
        read_json(&d.path().join("s3/manifest.json"))["params"]["rel_tol"],
        1e-10
    );
}

#[test]
fn lossless_simulation_conserves_excitations() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "simulate",
            "--kappa",
            "0",
            "--gamma",
            "0",
            "--epsilon",
            "0",
            "--y0",
            "0.3,0,0,0.4",
            "--t-end",
            "100",
            "--out",
            "s",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let n = json(&o)["excitation_number"].clone();
    assert!((n[0].as_f64().unwrap() - n[1].as_f64().unwrap()).abs() < 1e-8);
    let header = std::fs::read_to_string(d.path().join("s/trajectory.csv")).unwrap();
    assert!(header.starts_with("t,beta_r,beta_i,alpha_r,alpha_i\n"));
}

#[test]
fn figure1_panels_and_overlap() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["figure1", "--out", "f"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    let panels = v["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 4);
    for (i, p) in panels.iter().enumerate() {
        assert!(d.path().join(format!("f/fig1_p{i}.svg")).exists());
        let gap = p["curves"][0]["radial_gap"].as_f64().unwrap();
        assert!(gap <= 0.1, "panel {i}: {gap}");
    }
    let m = read_json(&d.path().join("f/manifest.json"));
    assert_eq!(
        m["params"]["delta_fractions"],
        serde_json::json!([0.05, 0.1, 0.2])
    );
}

#[test]
fn figure1_at_threshold_shows_fixed_point() {
    let d = TempDir::new().unwrap();
    let o = run(
        d.path(),
        &[
            "figure1",
            "--pair",
            "1,0.1",
            "--delta-fractions",
            "0",
            "--out",
            "f",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["panels"][0]["curves"][0]["amplitude"], 0.0);
    let svg = std::fs::read_to_string(d.path().join("f/fig1_p0.svg")).unwrap();
    assert!(svg.contains("<circle"));
}

#[test]
fn gnuplot_scripts_reference_written_data() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["figure2", "--gnuplot", "--out", "g"]);
    assert_eq!(code(&o), 0);
    let gp = std::fs::read_to_string(d.path().join("g/figure2.gp")).unwrap();
    assert!(gp.contains("'figure2.csv' every ::1 using 1:4"));
    assert!(!d.path().join("g/figure2.svg").exists());
}

#[test]
fn phase_diffusion_matches_closed_form() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["phase-diffusion", "--seed", "42", "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    let ratio = v["ratio"].as_f64().unwrap();
    assert!((ratio - 1.0).abs() < 0.2, "{ratio}");
    let csv = std::fs::read_to_string(d.path().join("p/phase.csv")).unwrap();
    assert!(csv.starts_with("t,var_phi,n_effective\n"));
}

#[test]
fn same_seed_same_bytes_other_seed_differs() {
    let d = TempDir::new().unwrap();
    let args = |out: &'static str, seed: &'static str| {
        vec![
            "phase-diffusion",
            "--n-ensemble",
            "120",
            "--t-end",
            "40",
            "--seed",
            seed,
            "--out",
            out,
        ]
    };
    for (out, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        assert_eq!(code(&run(d.path(), &args(out, seed))), 0);
    }
    let read = |p: &str| std::fs::read(d.path().join(p)).unwrap();
    assert_eq!(read("a/phase.csv"), read("b/phase.csv"));
    assert_ne!(read("a/phase.csv"), read("c/phase.csv"));
    // thread count does not change results
    let mut a = args("j1", "7");
    a.extend(["--jobs", "1"]);
    assert_eq!(code(&run(d.path(), &a)), 0);
    assert_eq!(read("a/phase.csv"), read("j1/phase.csv"));
}

#[test]
fn manifest_replay_and_mismatch_detection() {
    let d = TempDir::new().unwrap();
    assert_eq!(
        code(&run(
            d.path(),
            &["spectrum", "--pair", "1,2", "--format", "json", "--out", "a"]
        )),
        0
    );
    let o = run(d.path(), &["--config", "a/manifest.json", "--out", "b"]);
    assert_eq!(code(&o), 0);
    let m = selfpulse_cli::manifest::RunManifest::load(&d.path().join("a/manifest.json")).unwrap();
    assert_eq!(m.format, selfpulse_cli::Format::Json);
    assert!(m.outputs.iter().any(|e| e.path == "spectrum.json"));
    assert!(m.mismatches(&d.path().join("b")).is_empty());
    // a replay cannot silently switch command
    let o = run(
        d.path(),
        &["--config", "a/manifest.json", "--out", "c", "hopf"],
    );
    assert_eq!(code(&o), 1);
    std::fs::write(d.path().join("b/spectrum.json"), b"tampered").unwrap();
    assert_eq!(
        m.mismatches(&d.path().join("b")),
        vec!["spectrum.json".to_string()]
    );
}
