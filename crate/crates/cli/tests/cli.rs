use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use forchgas_cli::config::{Profile, ProfileSpec};
use forchgas_cli::output::sha256_hex;
use forchgas_cli::{parse_config, CliError};
use forchgas_core::StaggeredGrid;

const BIN: &str = env!("CARGO_BIN_EXE_forchgas");

const DARCY_STATIONARY: &str = r#"
[problem]
exponents = [0.0]
coefficients = [1.0]
lambda = 0.5
f = 1.0
u_b = -1.0
[discretization]
dim = 1
cells = [8]
extents = [1.0]
"#;

const ZERO_TRANSIENT: &str = r#"
[problem]
exponents = [0.0, 1.0]
coefficients = [1.0, 1.0]
lambda = 0.5
[discretization]
dim = 1
cells = [8]
extents = [1.0]
t_final = 0.1
steps = 10
"#;

const NONZERO_TRANSIENT: &str = r#"
[problem]
exponents = [0.0, 1.0]
coefficients = [1.0, 1.0]
lambda = 0.5
f = {profile = "gaussian-bump", amplitude = 2.0, center = [0.5], width = 0.1}
initial = {profile = "sin-product", amplitude = 1.0}
[discretization]
dim = 1
cells = [12]
extents = [1.0]
t_final = 0.1
steps = 10
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Process::new(BIN).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn files_under(dir: &Path) -> Vec<String> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(
                    p.strip_prefix(root)
                        .unwrap()
                        .to_string_lossy()
                        .replace('\\', "/"),
                );
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn manifest_files(dir: &Path) -> Vec<(String, String)> {
    fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("file "))
        .map(|l| {
            let parts: Vec<&str> = l.splitn(3, ' ').collect();
            (parts[2].to_string(), parts[0].to_string())
        })
        .collect()
}

fn summary_value(dir: &Path, key: &str) -> String {
    fs::read_to_string(dir.join("summary.txt"))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(String::from))
        .unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn minimal_darcy_stationary_config_loads() {
    let cfg = parse_config(DARCY_STATIONARY).unwrap();
    assert!(cfg.stationary_spec().is_ok());
}

#[test]
fn step_at_threshold_is_rejected_with_the_bound() {
    // phi = 0.2, lambda = 0.5: threshold 0.05, and h = 1 / 20 sits on it.
    let text = ZERO_TRANSIENT
        .replace("t_final = 0.1\nsteps = 10", "t_final = 1.0\nsteps = 20")
        .replace("lambda = 0.5", "lambda = 0.5\nphi = 0.2");
    match parse_config(&text) {
        Err(CliError::Validation(p)) => {
            assert!(
                p.iter().any(|m| m.contains("phi_min * lambda / 2 = 0.05")),
                "{p:?}"
            )
        }
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn exponents_out_of_order_are_rejected() {
    let text = ZERO_TRANSIENT.replace(
        "exponents = [0.0, 1.0]\ncoefficients = [1.0, 1.0]",
        "exponents = [0.0, 2.0, 1.0]\ncoefficients = [1.0, 1.0, 1.0]",
    );
    assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
}

#[test]
fn unknown_keys_are_rejected() {
    let text = DARCY_STATIONARY.replace("f = 1.0", "f = 1.0\nporosity = 2.0");
    assert!(matches!(parse_config(&text), Err(CliError::Parse(_))));
    let text = format!("{DARCY_STATIONARY}\n[extras]\nx = 1\n");
    assert!(matches!(parse_config(&text), Err(CliError::Parse(_))));
}

#[test]
fn every_violation_is_listed() {
    let text = r#"
[problem]
exponents = [0.5, 1.0]
coefficients = [1.0, 1.0]
lambda = 1.5
[discretization]
dim = 3
cells = [4]
extents = [1.0]
[output]
snapshot_every = 0
"#;
    match parse_config(text) {
        Err(CliError::Validation(p)) => assert!(p.len() >= 3, "{p:?}"),
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn gas_and_lambda_are_exclusive() {
    let text =
        DARCY_STATIONARY.replace("lambda = 0.5", "lambda = 0.5\ngas = {c = 2.0, gamma = 1.4}");
    assert!(matches!(parse_config(&text), Err(CliError::Validation(_))));
}

#[test]
fn profiles_evaluate_as_documented() {
    let grid = StaggeredGrid::new_2d([2.0, 1.0], [2, 2]).unwrap();
    let lin = ProfileSpec::Profile(Profile::Linear {
        value: 1.0,
        slope: vec![2.0, -1.0],
    });
    assert_eq!(
        lin.provider(&grid, "t").unwrap().eval([0.5, 0.25], 0.0),
        1.75
    );
    let sin = ProfileSpec::Profile(Profile::SinProduct {
        base: 0.0,
        amplitude: 2.0,
        frequency: vec![],
    });
    let v = sin.provider(&grid, "t").unwrap().eval([1.0, 0.5], 0.0);
    assert!((v - 2.0).abs() < 1e-15);
    let bump = ProfileSpec::Profile(Profile::GaussianBump {
        base: 1.0,
        amplitude: 3.0,
        center: vec![1.0, 0.5],
        width: 0.25,
    });
    assert_eq!(
        bump.provider(&grid, "t").unwrap().eval([1.0, 0.5], 0.0),
        4.0
    );
    let tab = ProfileSpec::Profile(Profile::Tabulated {
        values: vec![1.0, 2.0, 3.0, 4.0],
    });
    let p = tab.provider(&grid, "t").unwrap();
    assert_eq!(p.eval(grid.cell_center(grid.cell_index(1, 1)), 0.0), 4.0);
    assert_eq!(p.eval(grid.cell_center(grid.cell_index(1, 0)), 0.0), 2.0);
    let short = ProfileSpec::Profile(Profile::Tabulated { values: vec![1.0] });
    assert!(short.provider(&grid, "t").is_err());
    let wrong_dim = ProfileSpec::Profile(Profile::Linear {
        value: 1.0,
        slope: vec![1.0],
    });
    assert!(wrong_dim.provider(&grid, "t").is_err());
}

#[test]
fn verify_inequalities_on_defaults_writes_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ineq");
    let (code, stderr) = run(&["verify-inequalities", "--output", out.to_str().unwrap()]);
    let csv = fs::read_to_string(out.join("inequalities.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    let rows: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    let failing: Vec<&str> = rows
        .iter()
        .filter(|r| &r[7] == "false")
        .map(|r| &r[0])
        .collect();
    // The Mono inequality does not hold for lambda < 1/2; all others must.
    assert_eq!(failing, vec!["Mono"]);
    assert_eq!(code, 3);
    assert!(stderr.contains("\"kind\":\"check-failed\""));
}

#[test]
fn zero_data_transient_gives_zero_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "zero.toml", ZERO_TRANSIENT);
    let out = tmp.path().join("out");
    let (code, stderr) = run(&[
        "solve-transient",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let snaps: Vec<String> = files_under(&out)
        .into_iter()
        .filter(|f| f.starts_with("snapshots/"))
        .collect();
    assert_eq!(snaps.len(), 22);
    for s in snaps {
        let mut r = csv::Reader::from_path(out.join(&s)).unwrap();
        for rec in r.records() {
            let v: f64 = rec.unwrap().iter().next_back().unwrap().parse().unwrap();
            assert_eq!(v, 0.0, "{s}");
        }
    }
}

#[test]
fn invalid_step_leaves_no_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // h = 0.1 against phi_min lambda / 2 = 0.05.
    let text = ZERO_TRANSIENT
        .replace("lambda = 0.5", "lambda = 0.5\nphi = 0.2")
        .replace("steps = 10", "steps = 1");
    let cfg = write_config(tmp.path(), "bad.toml", &text);
    let out = tmp.path().join("out");
    let (code, stderr) = run(&[
        "solve-transient",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["kind"], "validation");
    assert!(record["details"][0]
        .as_str()
        .unwrap()
        .contains("phi_min * lambda / 2"));
}

#[test]
fn missing_config_is_a_usage_error() {
    let (code, stderr) = run(&["solve-stationary"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("\"kind\":\"usage\""));
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", NONZERO_TRANSIENT);
    let dirs: Vec<PathBuf> = ["a", "b"].iter().map(|d| tmp.path().join(d)).collect();
    for d in &dirs {
        let (code, stderr) = run(&[
            "solve-transient",
            "--config",
            cfg.to_str().unwrap(),
            "--output",
            d.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{stderr}");
    }
    let files = files_under(&dirs[0]);
    assert_eq!(files, files_under(&dirs[1]));
    for f in files {
        assert_eq!(
            fs::read(dirs[0].join(&f)).unwrap(),
            fs::read(dirs[1].join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", NONZERO_TRANSIENT);
    let out = tmp.path().join("out");
    let (code, _) = run(&[
        "solve-transient",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--snapshots",
        "4",
    ]);
    assert_eq!(code, 0);
    let mut listed = manifest_files(&out);
    listed.sort();
    let on_disk: Vec<String> = files_under(&out)
        .into_iter()
        .filter(|f| f != "manifest.txt")
        .collect();
    assert_eq!(
        listed.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        on_disk
    );
    for (name, hash) in listed {
        assert_eq!(
            sha256_hex(&fs::read(out.join(&name)).unwrap()),
            hash,
            "{name}"
        );
    }
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let config_hash_line = manifest
        .lines()
        .find(|l| l.starts_with("inputs_sha256 "))
        .unwrap();
    assert_eq!(config_hash_line.len(), "inputs_sha256 ".len() + 64);
}

#[test]
fn snapshot_cadence_keeps_first_every_kth_and_last() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.toml", NONZERO_TRANSIENT);
    let out = tmp.path().join("out");
    let (code, _) = run(&[
        "solve-transient",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--snapshots",
        "4",
    ]);
    assert_eq!(code, 0);
    let steps: Vec<String> = files_under(&out)
        .into_iter()
        .filter_map(|f| {
            f.strip_prefix("snapshots/step")
                .and_then(|s| s.strip_suffix("_u.csv"))
                .map(String::from)
        })
        .collect();
    assert_eq!(steps, vec!["000000", "000004", "000008", "000010"]);
    let monitors = csv::Reader::from_path(out.join("monitors.csv"))
        .unwrap()
        .into_records()
        .count();
    assert_eq!(monitors, 10);
    let mb: f64 = summary_value(&out, "mass_balance_relative")
        .parse()
        .unwrap();
    assert!(mb <= 1e-10);
}

#[test]
fn gas_constant_absorption_rescales_the_porosity() {
    let tmp = tempfile::tempdir().unwrap();
    let physical = NONZERO_TRANSIENT.replace("lambda = 0.5", "gas = {c = 2.0, gamma = 1.5}");
    let mut thresholds = Vec::new();
    for absorb in [true, false] {
        let text = physical.replace(
            "[discretization]",
            &format!("absorb_gas_constant = {absorb}\n[discretization]"),
        );
        let cfg = write_config(tmp.path(), "g.toml", &text);
        let out = tmp.path().join(format!("out-{absorb}"));
        let (code, stderr) = run(&[
            "solve-transient",
            "--config",
            cfg.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{stderr}");
        thresholds.push(
            summary_value(&out, "step_threshold")
                .parse::<f64>()
                .unwrap(),
        );
    }
    // ((gamma + 1) / (c gamma))^lambda with c = 2, gamma = 1.5, lambda = 0.4.
    let scale = (2.5f64 / 3.0).powf(0.4);
    assert!((thresholds[0] / thresholds[1] - scale).abs() < 1e-14);
}

#[test]
fn stationary_run_emits_solution_and_continuation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "s.toml", DARCY_STATIONARY);
    let out = tmp.path().join("out");
    let (code, stderr) = run(&[
        "solve-stationary",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    for f in [
        "u.csv",
        "m.csv",
        "continuation.csv",
        "diagnostics.csv",
        "summary.txt",
        "manifest.txt",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let steps = csv::Reader::from_path(out.join("continuation.csv"))
        .unwrap()
        .into_records()
        .count();
    assert_eq!(steps, 9);
    let res: f64 = summary_value(&out, "stationary_residual").parse().unwrap();
    assert!(res <= 1e-10);
}

#[test]
fn convergence_table_has_one_row_per_level() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[convergence]
problem = "nonlinear-two-term"
levels = [{cells = 8, steps = 4}, {cells = 16, steps = 8}, {cells = 32, steps = 16}]
"#;
    let cfg = write_config(tmp.path(), "c.toml", text);
    let out = tmp.path().join("out");
    let (code, stderr) = run(&[
        "convergence",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let mut r = csv::Reader::from_path(out.join("convergence.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>()[..3],
        ["cells", "steps", "h_space"]
    );
    assert_eq!(r.records().count(), 3);
}

#[test]
fn unknown_convergence_problem_is_rejected() {
    let text =
        "[convergence]\nproblem = \"nope\"\nlevels = [{cells = 4}, {cells = 8}, {cells = 16}]\n";
    assert!(matches!(parse_config(text), Err(CliError::Validation(_))));
}

#[test]
fn check_grid_passes_on_a_2d_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[discretization]\ndim = 2\ncells = [4, 8]\nextents = [1.0, 2.0]\n";
    let cfg = write_config(tmp.path(), "g.toml", text);
    let out = tmp.path().join("out");
    let (code, stderr) = run(&[
        "check-grid",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        out.to_str().unwrap(),
        "--seeds",
        "20",
    ]);
    assert_eq!(code, 0, "{stderr}");
    let rows = csv::Reader::from_path(out.join("adjointness.csv"))
        .unwrap()
        .into_records()
        .count();
    assert_eq!(rows, 20);
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 33);
}
