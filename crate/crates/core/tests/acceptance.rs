//! Acceptance suite on the shipped default scenario. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.

use landau_factor::analysis::suite::{self, CheckOutcome, SuiteContext};
use landau_factor::cli::config::ScenarioConfig;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/default.toml")
}

fn config() -> ScenarioConfig {
    ScenarioConfig::load(&scenario(), &[]).expect("default scenario loads")
}

fn context(cfg: &ScenarioConfig) -> SuiteContext {
    cfg.context().expect("default scenario context")
}

fn run_identities(out: &Path) -> Vec<u8> {
    let status = Command::new(env!("CARGO_BIN_EXE_landau-factor"))
        .args(["identities", "--config"])
        .arg(scenario())
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "identities exited with {:?}", status.status);
    std::fs::read(out.join("verdicts.json")).expect("verdicts.json written")
}

fn determinism() -> CheckOutcome {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let first = run_identities(a.path());
    let second = run_identities(b.path());
    let same = first == second;
    CheckOutcome {
        id: "determinism".into(),
        title: "determinism".into(),
        passed: same,
        summary: format!("verdicts.json {} bytes, identical: {same}", first.len()),
        identities: vec![],
        scalings: vec![],
        phases: vec![],
    }
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let cfg = config();
    let ctx = context(&cfg);
    let s = cfg.checks.clone();
    type Criterion<'a> = (&'a str, Box<dyn Fn() -> CheckOutcome + 'a>);
    let wrap = |id: &'static str, r: suite::Result<CheckOutcome>| r.unwrap_or_else(|e| CheckOutcome::failed(id, id, &e));
    let criteria: Vec<Criterion> = vec![
        ("c1_frame_geometry", Box::new(|| wrap("frame", suite::check_frame(&s.frame)))),
        ("c2_holonomy_phases", Box::new(|| wrap("holonomy", suite::check_holonomy(&ctx, &s.holonomy)))),
        ("c3_hamiltonian_forms", Box::new(|| wrap("hamiltonians", suite::check_hamiltonians(&ctx, &s.hamiltonians)))),
        ("c4_gauge_and_splitting", Box::new(|| wrap("gauge", suite::check_gauge(&ctx, &s.gauge)))),
        ("c5_factorization_vs_lab", Box::new(|| wrap("factorization", suite::check_factorization(&ctx, &s.factorization)))),
        ("c6_strong_confinement", Box::new(|| wrap("confinement", suite::check_confinement(&ctx, &s.confinement)))),
        ("c7_resonance", Box::new(|| wrap("resonance", suite::check_resonance(&ctx, &s.resonance)))),
        ("c8_adiabatic_orders", Box::new(|| wrap("adiabatic", suite::check_adiabatic(&ctx, &s.adiabatic)))),
        ("c9_magnetic_translation", Box::new(|| wrap("translation", suite::check_translation(&ctx, &s.translation)))),
        ("c10_determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        ran += 1;
        if !outcome.passed {
            failed += 1;
        }
        println!("{name}: {} [{:.1} s]", outcome.line(), start.elapsed().as_secs_f64());
    }
    println!("\nacceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
