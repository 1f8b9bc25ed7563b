//! End-to-end checks of the command-line pipeline: artifact layout, exit
//! codes, determinism across runs, and composition of stages through files.

use std::path::Path;
use std::process::Command;

use surropt::design_space::DesignSpace;
use surropt::surrogate::RbfSurrogate;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_surropt"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn base_config(out: &str) -> String {
    format!(
        r#"
        [space]
        preset = "spba-four-param"

        [sample]
        count = 120
        skip = 1
        seed = 42

        [target]
        angle_rad = 1.5

        [optimizer]
        epsilon = 1.0
        max_iterations = 200
        max_line_search = 40
        stationarity_tol = 1e-6
        starts = 2
        seed = 0
        write_trace = true

        [surface]
        parameters = ["H_C", "W_B"]
        resolution = 3
        fixed = {{ T_A = 1.5, L_A = 6.0 }}

        [output]
        dir = "{out}"
        "#
    )
}

#[test]
fn sample_fit_optimize_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", &base_config("out"));

    let status = binary()
        .args(["sample", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let dataset = std::fs::read_to_string(dir.path().join("out/dataset.csv")).unwrap();
    assert_eq!(dataset.lines().count(), 121, "header plus 120 rows");
    assert!(dataset.starts_with("H_C,L_A,T_A,W_B,U,F,theta\n"));

    let status = binary()
        .args(["fit", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    for model in ["model_U.txt", "model_F.txt", "model_theta.txt"] {
        assert!(dir.path().join("out").join(model).exists(), "{model} missing");
    }
    assert!(dir.path().join("out/error_report.csv").exists());

    let output = binary()
        .args(["optimize", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("converged"), "{stdout}");
    assert!(dir.path().join("out/optimization.csv").exists());
    assert!(dir.path().join("out/optimization.txt").exists());
    assert!(dir.path().join("out/trace.csv").exists());

    let status = binary()
        .args(["surface", "--config"])
        .arg(&config)
        .status()
        .unwrap();
    assert!(status.success());
    let surface = std::fs::read_to_string(dir.path().join("out/surface_H_C_W_B.csv")).unwrap();
    assert_eq!(surface.lines().count(), 10, "header plus 3x3 grid");

    // Grid corners equal direct predictions from the serialized models.
    let space = DesignSpace::spba_four_param();
    let theta_model = RbfSurrogate::load(&dir.path().join("out/model_theta.txt")).unwrap();
    let first_row = surface.lines().nth(1).unwrap();
    let cells: Vec<f64> = first_row.split(',').map(|c| c.parse().unwrap()).collect();
    let point = surropt::design_space::DesignPoint::new(vec![cells[0], 6.0, 1.5, cells[1]]);
    assert_eq!(theta_model.predict(&point), cells[2]);
    drop(space);
}

#[test]
fn pipeline_matches_staged_runs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let staged = write_config(dir.path(), "staged.toml", &base_config("staged"));
    let piped = write_config(dir.path(), "piped.toml", &base_config("piped"));

    for (cmd, config) in [("sample", &staged), ("fit", &staged), ("optimize", &staged)] {
        let status = binary().arg(cmd).arg("--config").arg(config).status().unwrap();
        assert!(status.success(), "{cmd} failed");
    }
    let status = binary()
        .args(["pipeline", "--config"])
        .arg(&piped)
        .status()
        .unwrap();
    assert!(status.success());

    for file in [
        "dataset.csv",
        "error_report.csv",
        "model_U.txt",
        "model_F.txt",
        "model_theta.txt",
        "optimization.csv",
        "trace.csv",
    ] {
        let a = std::fs::read(dir.path().join("staged").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("piped").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between staged and pipeline runs");
    }
}

#[test]
fn dataset_oracle_resamples_a_prefix() {
    // Export a synthetic dataset, then drive sampling through the dataset
    // oracle: the first 80 feasible Sobol points are a prefix of the first
    // 120, so every lookup hits and the 80-row CSV is a byte prefix.
    let dir = tempfile::tempdir().unwrap();
    let synthetic = write_config(dir.path(), "synthetic.toml", &base_config("full"));
    assert!(binary()
        .args(["sample", "--config"])
        .arg(&synthetic)
        .status()
        .unwrap()
        .success());

    let dataset_config = r#"
        [space]
        preset = "spba-four-param"

        [oracle]
        kind = "dataset"
        dataset = "full/dataset.csv"

        [sample]
        count = 80
        skip = 1
        seed = 42

        [output]
        dir = "prefix"
        "#.to_string();
    let config = write_config(dir.path(), "dataset.toml", &dataset_config);
    assert!(binary()
        .args(["sample", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    let full = std::fs::read_to_string(dir.path().join("full/dataset.csv")).unwrap();
    let prefix = std::fs::read_to_string(dir.path().join("prefix/dataset.csv")).unwrap();
    assert_eq!(prefix.lines().count(), 81);
    assert!(full.starts_with(&prefix));
}

#[test]
fn sensitivity_command_writes_report_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = r#"
        [space]
        preset = "spba-eight-param"

        [oracle]
        kind = "synthetic"
        inert_seed = 0
        inert_amplitude = 0.002

        [sensitivity]
        keep = 4
        points = 9
        degree = 4

        [output]
        dir = "out"
    "#;
    let config = write_config(dir.path(), "sens.toml", config_text);
    let output = binary()
        .args(["sensitivity", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("retained 4 of 8"), "{stdout}");

    let report = std::fs::read_to_string(dir.path().join("out/sensitivity.csv")).unwrap();
    assert_eq!(report.lines().count(), 9, "header plus 8 parameters");
    for name in ["H_C", "L_A", "T_A", "W_B"] {
        let row = report
            .lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .unwrap();
        assert!(row.ends_with("true"), "{name} not retained: {row}");
        let sweep =
            std::fs::read_to_string(dir.path().join(format!("out/sweep_{name}.csv"))).unwrap();
        assert_eq!(sweep.lines().count(), 10, "{name}: header plus 9 rows");
    }
}

#[test]
fn curve_command_exports_learning_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config_text = r#"
        [space]
        preset = "spba-four-param"

        [sample]
        count = 100
        skip = 1
        seed = 42

        [learning_curve]
        sizes = [50, 100]

        [output]
        dir = "out"
    "#;
    let config = write_config(dir.path(), "curve.toml", config_text);
    assert!(binary()
        .args(["curve", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    let curve = std::fs::read_to_string(dir.path().join("out/learning_curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "size,U_error,F_error,theta_error");
    assert_eq!(curve.lines().count(), 3);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();

    // Usage: malformed config.
    let bad = write_config(dir.path(), "bad.toml", "[sample]\ncount = 0\n");
    let status = binary()
        .args(["sample", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    // I/O: dataset oracle pointing at a missing file.
    let missing = write_config(
        dir.path(),
        "missing.toml",
        r#"
        [space]
        preset = "spba-four-param"

        [oracle]
        kind = "dataset"
        dataset = "nowhere.csv"
        "#,
    );
    let status = binary()
        .args(["sample", "--config"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(3));

    // Numeric: fitting four rows cannot satisfy the n >= d + 2 precondition.
    std::fs::create_dir_all(dir.path().join("tiny")).unwrap();
    std::fs::write(
        dir.path().join("tiny/dataset.csv"),
        "H_C,L_A,T_A,W_B,U,F,theta\n19,6,1.5,22,1,1,1\n20,6,1.5,22,1,1,1\n21,6,1.5,22,1,1,1\n22,6,1.5,22,1,1,1\n23,6,1.5,22,1,1,1\n",
    )
    .unwrap();
    let tiny = write_config(
        dir.path(),
        "tiny.toml",
        r#"
        [space]
        preset = "spba-four-param"

        [output]
        dir = "tiny"
        "#,
    );
    let output = binary()
        .args(["fit", "--config"])
        .arg(&tiny)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "{output:?}");

    // Non-convergence: a bending-angle target outside the attainable range.
    let unattainable = base_config("out").replace("angle_rad = 1.5", "angle_rad = 3.0");
    let config = write_config(dir.path(), "unattainable.toml", &unattainable);
    for cmd in ["sample", "fit"] {
        assert!(binary().arg(cmd).arg("--config").arg(&config).status().unwrap().success());
    }
    let output = binary()
        .args(["optimize", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(5), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("bending-angle"), "{stderr}");
}

#[test]
fn seed_flag_overrides_config_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "run.toml", &base_config("a"));
    assert!(binary()
        .args(["sample", "--config"])
        .arg(&config)
        .status()
        .unwrap()
        .success());
    assert!(binary()
        .args(["sample", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.path().join("b"))
        .args(["--seed", "7"])
        .status()
        .unwrap()
        .success());
    let a = std::fs::read_to_string(dir.path().join("a/dataset.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b/dataset.csv")).unwrap();
    // The Sobol stream is seed-independent but retry streams are not; with
    // no retries triggered the point sets agree, so compare determinism by
    // re-running seed 7.
    assert_eq!(a.lines().count(), b.lines().count());
    assert!(binary()
        .args(["sample", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(dir.path().join("c"))
        .args(["--seed", "7"])
        .status()
        .unwrap()
        .success());
    let c = std::fs::read_to_string(dir.path().join("c/dataset.csv")).unwrap();
    assert_eq!(b, c);
}
