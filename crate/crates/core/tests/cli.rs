use landau_factor::cli::report::{read_matrix, Verdicts};
use landau_factor::linalg::unitarity_residual;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
schema_version = 1
[physical]
m = 1.0
e = -1.0
b_field = 1.0
length = 1.0
v2 = 12.5
[basis]
na = 3
nb = 3
nc = 4
buffer = 1
[path]
family = "precessing_cone"
theta = THETA
eps = 0.05
[output]
formats = ["json", "csv", "svg"]
"#;

fn write_config(dir: &Path, theta: f64) -> PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, SMALL.replace("THETA", &format!("{theta:?}"))).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landau-factor"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn resting_path_passes_the_identity_suite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0.0);
    let out = dir.path().join("identities");
    let o = run(&["identities"], &cfg, &out);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let v = Verdicts::load(&out.join("verdicts.json")).unwrap();
    assert!(v.passed);
    assert_eq!(v.checks.len(), stdout(&o).lines().filter(|l| l.starts_with("PASS ")).count());
    for name in ["summary.csv", "frame_identities.csv", "holonomy_phases.csv"] {
        let text = std::fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with("# schema_version = 1\n"), "{name}");
    }
}

#[test]
fn cone_loop_phase_table_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), std::f64::consts::FRAC_PI_3);
    let base = dir.path().join("out");
    let o = run(&["holonomy"], &cfg, &base.join("holonomy"));
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let v = Verdicts::load(&base.join("holonomy/verdicts.json")).unwrap();
    let scenario = v.checks.iter().find(|c| c.id == "scenario_holonomy").unwrap();
    // The θ = π/3 cone subtends Ω = π.
    assert!(scenario.summary.starts_with("Ω = 3.141593"), "{}", scenario.summary);
    assert_eq!(scenario.phases.len(), 5);
    assert!(scenario.phases.iter().all(|p| p.meaningful && p.error < 1e-4));
    let svg = std::fs::read_dir(base.join("holonomy")).unwrap().filter_map(|e| e.ok()).any(|e| e.path().extension().is_some_and(|x| x == "svg"));
    assert!(svg);

    let o = run(&["report"], &cfg, &base);
    assert_eq!(o.status.code(), Some(0));
    let md = std::fs::read_to_string(base.join("report.md")).unwrap();
    assert!(md.contains("## holonomy (PASS)") && md.contains("scenario loop phases"));
}

#[test]
fn failed_verdicts_and_bad_configs_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), std::f64::consts::FRAC_PI_3);
    let out = dir.path().join("out");
    let mut args = vec!["holonomy", "--override", "checks.holonomy.tol=1e-30"];
    let o = run(&args, &cfg, &out);
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL holonomy phases"));
    assert!(!Verdicts::load(&out.join("verdicts.json")).unwrap().passed);

    args = vec!["holonomy", "--override", "physical.e=1.0"];
    assert_eq!(run(&args, &cfg, &out).status.code(), Some(1));
    args = vec!["holonomy", "--override", "physical.typo=1.0"];
    assert_eq!(run(&args, &cfg, &out).status.code(), Some(1));
    assert_eq!(run(&["holonomy"], &dir.path().join("missing.toml"), &out).status.code(), Some(1));
    assert_eq!(run(&["bogus"], &cfg, &out).status.code(), Some(1));
    // An open path has no loop phases to report.
    args = vec!["holonomy", "--override", "path.duration=10.0"];
    assert_eq!(run(&args, &cfg, &out).status.code(), Some(1));
}

#[test]
fn factorize_dumps_readable_unitary_factors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), std::f64::consts::FRAC_PI_3);
    let out = dir.path().join("factorize");
    let args = [
        "factorize",
        "--dump-matrices",
        "--override",
        "snapshot.basis.n=[2,2,3]",
        "--override",
        "snapshot.basis.buffer=[1,1,1]",
        "--override",
        "checks.factorization.basis.n=[3,3,4]",
        "--override",
        "checks.factorization.basis.buffer=[2,2,3]",
    ];
    let o = run(&args, &cfg, &out);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let v = Verdicts::load(&out.join("verdicts.json")).unwrap();
    let snap = v.snapshot.expect("snapshot recorded");
    assert_eq!(snap.dim, 9 * 4);
    assert!(v.checks.iter().find(|c| c.id == "snapshot").unwrap().passed);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("matrices/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"], serde_json::to_value(&v.config).unwrap());
    for name in ["r", "u_xi", "u_lab"] {
        let m = read_matrix(&std::fs::read(out.join(format!("matrices/{name}.bin"))).unwrap()).unwrap();
        assert_eq!(m.dim(), (snap.dim, snap.dim));
        assert!(unitarity_residual(&m) < 1e-6, "{name}");
    }
}
