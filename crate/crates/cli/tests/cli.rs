use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 3\n\n[mesh]\nh = 0.1\n\n[wave]\ndx = 0.04\ncfl = 0.5\nt_final = 6.0\nsensors = 64\nrecord_stride = 4\n";

fn matmi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matmi"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn simulate_then_invert_writes_field_and_report() {
    let dir = setup();
    let d = dir.path();
    ok(&matmi(
        d,
        &["--config", "small.toml", "simulate", "--out", "sim"],
    ));
    for f in [
        "mesh.txt",
        "sigma.txt",
        "potential_0.txt",
        "current_0.txt",
        "source_0.txt",
        "record_0.txt",
    ] {
        assert!(d.join("sim").join(f).is_file(), "{f} missing");
    }
    for alg in ["oc", "fp", "of"] {
        let out = format!("sigma_{alg}.txt");
        let report = format!("report_{alg}.json");
        ok(&matmi(
            d,
            &[
                "--config",
                "small.toml",
                "invert",
                "--algorithm",
                alg,
                "--current",
                "sim/current_0.txt",
                "--mesh",
                "sim/mesh.txt",
                "--truth",
                "sim/sigma.txt",
                "--out",
                &out,
                "--report",
                &report,
            ],
        ));
        let text = std::fs::read_to_string(d.join(&report)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in [
            "algorithm",
            "params",
            "misfit_history",
            "update_history",
            "final_error",
            "wall_ms",
        ] {
            assert!(v.get(key).is_some(), "{alg}: report lacks {key}");
        }
        assert!(v["final_error"].as_f64().unwrap() < 0.6);
        assert!(std::fs::read_to_string(d.join(&out))
            .unwrap()
            .starts_with("matmi-field v1\nconductivity\n"));
    }
}

#[test]
fn acoustic_chain_recovers_a_current() {
    let dir = setup();
    let d = dir.path();
    ok(&matmi(
        d,
        &["--config", "small.toml", "simulate", "--out", "sim"],
    ));
    ok(&matmi(
        d,
        &[
            "--config",
            "small.toml",
            "recover-source",
            "--record",
            "sim/record_0.txt",
            "--out",
            "f0.txt",
        ],
    ));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("f0.txt.json")).unwrap()).unwrap();
    assert!(meta["inversion_constant"].as_f64().unwrap() > 0.0);
    assert!(meta["grid"]["nx"].as_u64().unwrap() > 1);
    ok(&matmi(
        d,
        &[
            "--config",
            "small.toml",
            "recover-current",
            "--source",
            "f0.txt",
            "--out",
            "j.txt",
        ],
    ));
    // the exact source on the mesh also goes through
    ok(&matmi(
        d,
        &[
            "--config",
            "small.toml",
            "recover-current",
            "--source",
            "sim/source_0.txt",
            "--out",
            "j_exact.txt",
        ],
    ));
    assert!(std::fs::read_to_string(d.join("j.txt"))
        .unwrap()
        .starts_with("matmi-field v1\ncurrent\n"));
}

#[test]
fn sweep_noise_writes_csv() {
    let dir = setup();
    let d = dir.path();
    let mut cfg = SMALL.to_string();
    cfg.push_str("\n[noise]\nlevels = [0.0, 0.1]\nrealizations = 2\n");
    std::fs::write(d.join("noise.toml"), cfg).unwrap();
    let out = matmi(
        d,
        &["--config", "noise.toml", "sweep-noise", "--out", "sweep"],
    );
    ok(&out);
    let csv = std::fs::read_to_string(d.join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv, String::from_utf8(out.stdout).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "noise_level,algorithm,mean_error,std_error,n");
    assert_eq!(lines.len(), 3);
    let row: Vec<&str> = lines[2].split(',').collect();
    assert_eq!((row[1], row[4]), ("orthogonal-field", "2"));
    assert!(d.join("sweep/run.json").is_file());
}

#[test]
fn seed_flag_changes_noisy_results() {
    let dir = setup();
    let d = dir.path();
    let mut cfg = SMALL.to_string();
    cfg.push_str("\n[noise]\nlevels = [0.1]\nrealizations = 1\n");
    std::fs::write(d.join("noise.toml"), cfg).unwrap();
    let a = matmi(
        d,
        &[
            "--config",
            "noise.toml",
            "--seed",
            "1",
            "sweep-noise",
            "--out",
            "a",
        ],
    );
    let b = matmi(
        d,
        &[
            "--config",
            "noise.toml",
            "--seed",
            "2",
            "sweep-noise",
            "--out",
            "b",
        ],
    );
    ok(&a);
    ok(&b);
    assert_ne!(a.stdout, b.stdout);
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("b/run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 2);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = setup();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "unknown_key = 1\n").unwrap();
    assert_eq!(
        matmi(d, &["--config", "bad.toml", "simulate", "--out", "x"])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(d.join("levels.toml"), "[noise]\nlevels = [1.5]\n").unwrap();
    assert_eq!(
        matmi(d, &["--config", "levels.toml", "sweep-noise", "--out", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        matmi(d, &["--config", "missing.toml", "simulate", "--out", "x"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        matmi(
            d,
            &[
                "invert",
                "--algorithm",
                "xx",
                "--current",
                "c",
                "--out",
                "o"
            ]
        )
        .status
        .code(),
        Some(2)
    );
    std::fs::write(d.join("garbage.txt"), "not a field\n").unwrap();
    let out = matmi(
        d,
        &[
            "--config",
            "small.toml",
            "invert",
            "--algorithm",
            "of",
            "--current",
            "garbage.txt",
            "--out",
            "o",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failures_exit_with_3() {
    let dir = setup();
    let d = dir.path();
    let mut cfg = SMALL.to_string();
    cfg.push_str("\n[solver]\nmax_iter = 1\n");
    std::fs::write(d.join("tight.toml"), cfg).unwrap();
    let out = matmi(d, &["--config", "tight.toml", "simulate", "--out", "x"]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn shipped_configuration_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/noise_sweep.toml");
    let cfg = matmi_core::experiment::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.inversions.len(), 3);
    assert_eq!(cfg.noise.levels, vec![0.0, 0.02, 0.05, 0.10]);
}
