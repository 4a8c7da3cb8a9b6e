//! Command-line front end: `landau-factor <command> --config <file> ...`.

pub mod config;
pub mod report;
pub mod svg;

use crate::analysis::suite::{self, build_model, CheckOutcome};
use crate::analysis::{index_distance, IdentityReport, ScanControl};
use crate::linalg::{identity, unitarity_residual, OperatorMatrix};
use crate::propagators::{assemble_evolution, factorization_bundle, lab_action, AssemblyMode};
use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};
use config::ScenarioConfig;
use report::{SnapshotSummary, Verdicts};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Identity suite: frame, holonomy, Hamiltonian forms, rotation, gauge, translations.
    Identities,
    /// Dense factor snapshot and the factorization vs lab comparison.
    Factorize,
    /// Closed-loop phase tables.
    Holonomy,
    /// Scaling scans in k and ε and the resonance case.
    Scan,
    /// Render existing verdicts into tables and plots.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Identities => "identities",
            Command::Factorize => "factorize",
            Command::Holonomy => "holonomy",
            Command::Scan => "scan",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "landau-factor", version, about = "Factorized evolution of a Landau electron in a rotating field")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to `<output.directory>/<command>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dotted config override such as `physical.length=2`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the snapshot factors as binary matrices (factorize only).
    #[arg(long)]
    pub dump_matrices: bool,
}

/// Parse arguments, run, and map the outcome to exit codes 0, 2 (failed
/// verdict) and 1 (configuration or runtime error).
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Run one command; `Ok(passed)` unless configuration or computation fails.
pub fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cfg = ScenarioConfig::load(&cli.config, &cli.overrides)?;
    let out = cli.out.clone().unwrap_or_else(|| {
        let base = PathBuf::from(&cfg.output.directory);
        if cli.command == Command::Report {
            base
        } else {
            base.join(cli.command.name())
        }
    });
    if cli.command == Command::Report {
        return report_dir(&out);
    }
    let v = execute(cli.command, &cfg, cli.dump_matrices.then_some(out.as_path()))?;
    for c in &v.checks {
        println!("{}", c.line());
    }
    report::write_outputs(&out, &v)?;
    Ok(v.passed)
}

/// Run a computing command and collect its verdicts. Matrix dumps go under
/// `dump` when given.
pub fn execute(command: Command, cfg: &ScenarioConfig, dump: Option<&Path>) -> Result<Verdicts> {
    let ctx = cfg.context()?;
    let s = &cfg.checks;
    let ts = cfg.time_scales()?;
    let mut snapshot = None;
    let mut dumps: Vec<(String, OperatorMatrix)> = vec![];
    let checks = match command {
        Command::Identities => vec![
            suite::check_frame(&s.frame)?,
            suite::check_holonomy(&ctx, &s.holonomy)?,
            suite::check_hamiltonians(&ctx, &s.hamiltonians)?,
            suite::check_rotation(&ctx, &s.rotation)?,
            suite::check_gauge(&ctx, &s.gauge)?,
            suite::check_translation(&ctx, &s.translation)?,
            suite::check_translation_algebra(&ctx, &s.translation)?,
        ],
        Command::Factorize => {
            let (outcome, summary, mats) = factor_snapshot(cfg)?;
            snapshot = Some(summary);
            dumps = mats;
            vec![outcome, suite::check_factorization(&ctx, &s.factorization)?]
        }
        Command::Holonomy => {
            if ctx.path.is_closed() > 1e-9 {
                bail!("holonomy needs a closed scenario path");
            }
            vec![suite::check_holonomy(&ctx, &s.holonomy)?, suite::scenario_holonomy(&ctx, &s.holonomy)?]
        }
        Command::Scan => {
            let mut conf = s.confinement.clone();
            let mut adia = s.adiabatic.clone();
            match &cfg.scan {
                Some(sc) if sc.control == ScanControl::StiffnessK => conf.stiffness = sc.values.clone(),
                Some(sc) => adia.eps = sc.values.clone(),
                None => {}
            }
            vec![
                suite::check_confinement(&ctx, &conf)?,
                suite::check_resonance(&ctx, &s.resonance)?,
                suite::check_adiabatic(&ctx, &adia)?,
            ]
        }
        Command::Report => bail!("report does not compute verdicts"),
    };
    let mut v = Verdicts::new(command.name(), cfg, ts, checks);
    v.snapshot = snapshot;
    if let Some(dir) = dump {
        let refs: Vec<(&str, &OperatorMatrix)> = dumps.iter().map(|(n, m)| (n.as_str(), m)).collect();
        report::dump_matrices(dir, &v, &refs)?;
    }
    Ok(v)
}

type Snapshot = (CheckOutcome, SnapshotSummary, Vec<(String, OperatorMatrix)>);

/// Dense factors on the snapshot basis, their unitarity and each assembly
/// mode against the lab propagator.
fn factor_snapshot(cfg: &ScenarioConfig) -> Result<Snapshot> {
    let ctx = cfg.context()?;
    let t = ctx.end_time();
    let model = build_model(ctx.params.clone(), cfg.snapshot.basis_config(), &ctx.path, t)?;
    let icfg = &cfg.checks.factorization.integrator;
    let b = factorization_bundle(&model, t, icfg).context("factor snapshot")?;
    let lab = lab_action(&model, t, icfg, &identity(model.dim()))?;
    let idx = model.interior();
    let mats: Vec<(String, OperatorMatrix)> = [
        ("r", &b.r),
        ("g_t", &b.g_t),
        ("g_0", &b.g_0),
        ("u1d", &b.u1d),
        ("m", &b.m),
        ("ub", &b.ub),
        ("utilde_eps", &b.utilde_eps),
        ("u_eps", &b.u_eps),
        ("u_eps_first_order", &b.u_eps_1st),
        ("u_xi", &b.u_xi),
        ("u_lab", &lab),
    ]
    .into_iter()
    .map(|(n, m)| (n.to_string(), m.clone()))
    .collect();
    let unitarity: BTreeMap<String, f64> = mats
        .iter()
        .filter(|(n, _)| n != "u_eps_first_order")
        .map(|(n, m)| (n.clone(), unitarity_residual(m) / (m.ncols() as f64).sqrt()))
        .collect();
    let mut oracle = BTreeMap::new();
    for mode in [AssemblyMode::Full, AssemblyMode::StrongConfinement, AssemblyMode::Adiabatic] {
        let name = serde_json::to_value(mode)?.as_str().unwrap_or_default().to_string();
        oracle.insert(name, index_distance(&lab, &assemble_evolution(&b, mode), &idx));
    }
    let names: Vec<f64> = (0..unitarity.len()).map(|k| k as f64).collect();
    let report = IdentityReport::new("factor_unitarity", names, unitarity.values().copied().collect(), None, cfg.snapshot.unitarity_tol);
    let mut outcome = CheckOutcome::from_reports("snapshot", "factor snapshot", vec![report]);
    outcome.summary = format!(
        "{}; {} vs lab {:.3e} (diagnostic, dim {})",
        outcome.summary,
        serde_json::to_value(cfg.run.mode)?.as_str().unwrap_or_default(),
        oracle[serde_json::to_value(cfg.run.mode)?.as_str().unwrap_or_default()],
        model.dim()
    );
    let summary = SnapshotSummary {
        t,
        dim: model.dim(),
        beta: b.beta,
        d: b.d,
        delta: (b.delta.re, b.delta.im),
        gamma: b.gamma,
        first_order: b.coeffs,
        unitarity,
        oracle,
    };
    Ok((outcome, summary, mats))
}

/// Load every verdicts.json under `dir` (itself and one level down), print
/// the tables and write report.md.
fn report_dir(dir: &Path) -> Result<bool> {
    let mut files = vec![];
    if dir.join("verdicts.json").is_file() {
        files.push(dir.join("verdicts.json"));
    }
    if let Ok(entries) = std::fs::read_dir(dir) {
        let mut subs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path().join("verdicts.json")).filter(|p| p.is_file()).collect();
        subs.sort();
        files.extend(subs);
    }
    if files.is_empty() {
        bail!("no verdicts.json found under {}", dir.display());
    }
    let mut text = String::from("# landau-factor report\n\n");
    let mut passed = true;
    for f in &files {
        let v = Verdicts::load(f)?;
        passed &= v.passed;
        let parent = f.parent().expect("file has a parent");
        report::write_outputs(parent, &v)?;
        let table = report::render_table(&v);
        println!("{table}");
        text.push_str(&table);
        text.push('\n');
    }
    std::fs::write(dir.join("report.md"), text)?;
    Ok(passed)
}
