//! Verdict files, CSV tables, SVG plots and binary matrix dumps.

use super::config::{OutputFormat, ScenarioConfig, TimeScales, SCHEMA_VERSION};
use super::svg::{Plot, Series};
use crate::analysis::suite::CheckOutcome;
use crate::linalg::OperatorMatrix;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Numbers from the dense factor snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSummary {
    pub t: f64,
    pub dim: usize,
    pub beta: f64,
    pub d: (f64, f64),
    pub delta: (f64, f64),
    pub gamma: f64,
    pub first_order: crate::propagators::PerturbationCoefficients,
    /// Interior unitarity residual of each factor.
    pub unitarity: BTreeMap<String, f64>,
    /// Interior distance of each assembly mode to the lab propagator.
    pub oracle: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub schema_version: u32,
    pub command: String,
    pub config: ScenarioConfig,
    pub time_scales: TimeScales,
    pub checks: Vec<CheckOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<SnapshotSummary>,
    pub passed: bool,
}

impl Verdicts {
    pub fn new(command: &str, config: &ScenarioConfig, time_scales: TimeScales, checks: Vec<CheckOutcome>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Verdicts {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            config: config.clone(),
            time_scales,
            checks,
            snapshot: None,
            passed,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    fn header(&self) -> String {
        let cfg = serde_json::to_string(&self.config).expect("config serialises");
        format!("# schema_version = {}\n# command = {}\n# config = {cfg}\n", self.schema_version, self.command)
    }

    fn metadata(&self) -> String {
        serde_json::to_string(&serde_json::json!({
            "schema_version": self.schema_version,
            "command": self.command,
            "config": self.config,
        }))
        .expect("metadata serialises")
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Write verdicts.json plus the CSV and SVG artifacts selected in the config.
pub fn write_outputs(dir: &Path, v: &Verdicts) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let formats = &v.config.output.formats;
    let mut out = vec![];
    if formats.contains(&OutputFormat::Json) {
        let mut text = serde_json::to_string_pretty(v)?;
        text.push('\n');
        out.push(write(dir.join("verdicts.json"), &text)?);
    }
    if formats.contains(&OutputFormat::Csv) {
        out.extend(write_csv(dir, v)?);
    }
    if formats.contains(&OutputFormat::Svg) {
        out.extend(write_svg(dir, v)?);
    }
    Ok(out)
}

fn write_csv(dir: &Path, v: &Verdicts) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    let mut summary = v.header();
    summary.push_str("check,passed,summary\n");
    for c in &v.checks {
        let _ = writeln!(summary, "{},{},\"{}\"", c.id, c.passed, c.summary.replace('"', "'"));
    }
    out.push(write(dir.join("summary.csv"), &summary)?);
    for c in &v.checks {
        if !c.identities.is_empty() {
            let mut s = v.header();
            s.push_str("identity,index,time,interior_residual,tolerance,passed\n");
            for r in &c.identities {
                for (i, res) in r.interior_residuals.iter().enumerate() {
                    let t = r.times.get(i).map(|t| t.to_string()).unwrap_or_default();
                    let _ = writeln!(s, "{},{i},{t},{res:e},{:e},{}", r.name, r.tolerance, r.passed);
                }
            }
            out.push(write(dir.join(format!("{}_identities.csv", c.id)), &s)?);
        }
        for sc in &c.scalings {
            let mut s = v.header();
            let _ = writeln!(s, "# exponent = {}, expected = {} ± {}, fit_residual = {}", sc.fit.exponent, sc.expected, sc.band, sc.fit.residual);
            s.push_str("value,response\n");
            for (x, y) in sc.values.iter().zip(&sc.responses) {
                let _ = writeln!(s, "{x},{y:e}");
            }
            out.push(write(dir.join(format!("{}.csv", sc.name)), &s)?);
        }
        if !c.phases.is_empty() {
            let mut s = v.header();
            s.push_str("m,n_a,n_b,n_c,phase,minus_m_omega,error,eigen_residual,meaningful\n");
            for p in &c.phases {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:e},{:e},{}",
                    p.m, p.state[0], p.state[1], p.state[2], p.phase, p.expected, p.error, p.eigen_residual, p.meaningful
                );
            }
            out.push(write(dir.join(format!("{}_phases.csv", c.id)), &s)?);
        }
    }
    Ok(out)
}

fn write_svg(dir: &Path, v: &Verdicts) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    let meta = v.metadata();
    for c in &v.checks {
        for sc in &c.scalings {
            let fit: Vec<(f64, f64)> = sc.values.iter().map(|&x| (x, sc.fit.prefactor * x.powf(sc.fit.exponent))).collect();
            let plot = Plot {
                title: format!("{} (exponent {:.3})", sc.name, sc.fit.exponent),
                x_label: format!("{:?}", sc.control).to_lowercase(),
                y_label: "response".into(),
                log_x: true,
                log_y: true,
                series: vec![
                    Series { name: "measured".into(), points: sc.values.iter().copied().zip(sc.responses.iter().copied()).collect(), dashed: false },
                    Series { name: "power-law fit".into(), points: fit, dashed: true },
                ],
                metadata: meta.clone(),
            };
            out.push(write(dir.join(format!("{}.svg", sc.name)), &plot.render())?);
        }
        for r in c.identities.iter().filter(|r| r.times.len() >= 2 && r.times.len() == r.interior_residuals.len()) {
            let tol = vec![(r.times[0], r.tolerance), (r.times[r.times.len() - 1], r.tolerance)];
            let plot = Plot {
                title: r.name.clone(),
                x_label: "sample point".into(),
                y_label: "interior residual".into(),
                log_x: false,
                log_y: true,
                series: vec![
                    Series {
                        name: "residual".into(),
                        points: r.times.iter().copied().zip(r.interior_residuals.iter().map(|x| x.max(1e-300))).collect(),
                        dashed: false,
                    },
                    Series { name: "tolerance".into(), points: tol, dashed: true },
                ],
                metadata: meta.clone(),
            };
            out.push(write(dir.join(format!("{}_{}.svg", c.id, r.name)), &plot.render())?);
        }
    }
    Ok(out)
}

/// Dimensions as two little-endian u64, then row-major (re, im) f64 pairs.
pub fn matrix_bytes(m: &OperatorMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 16 * m.len());
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for z in m.iter() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    buf
}

pub fn read_matrix(bytes: &[u8]) -> Option<OperatorMatrix> {
    let word = |i: usize| bytes.get(i..i + 8).map(|b| <[u8; 8]>::try_from(b).expect("eight bytes"));
    let rows = u64::from_le_bytes(word(0)?) as usize;
    let cols = u64::from_le_bytes(word(8)?) as usize;
    if bytes.len() != 16 + 16 * rows * cols {
        return None;
    }
    let mut data = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        let re = f64::from_le_bytes(word(16 + 16 * k)?);
        let im = f64::from_le_bytes(word(24 + 16 * k)?);
        data.push(crate::linalg::C64::new(re, im));
    }
    OperatorMatrix::from_shape_vec((rows, cols), data).ok()
}

/// Write each named matrix as `<name>.bin` with a manifest holding the config.
pub fn dump_matrices(dir: &Path, v: &Verdicts, mats: &[(&str, &OperatorMatrix)]) -> Result<Vec<PathBuf>> {
    let dir = dir.join("matrices");
    std::fs::create_dir_all(&dir)?;
    let mut out = vec![];
    let mut names = vec![];
    for (name, m) in mats {
        let path = dir.join(format!("{name}.bin"));
        std::fs::write(&path, matrix_bytes(m)).with_context(|| format!("writing {}", path.display()))?;
        names.push(serde_json::json!({ "name": name, "file": format!("{name}.bin"), "rows": m.nrows(), "cols": m.ncols() }));
        out.push(path);
    }
    let manifest = serde_json::json!({
        "schema_version": v.schema_version,
        "config": v.config,
        "layout": "u64 rows, u64 cols, then row-major (re, im) f64 pairs, all little-endian",
        "matrices": names,
    });
    out.push(write(dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?);
    Ok(out)
}

/// Plain-text table of the verdicts.
pub fn render_table(v: &Verdicts) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "## {} ({})", v.command, if v.passed { "PASS" } else { "FAIL" });
    let _ = writeln!(
        s,
        "time scales: T1 = {:.4}, T2 = {:.4}, T3 = {:.4} (gap {:.4})\n",
        v.time_scales.t1, v.time_scales.t2, v.time_scales.t3, v.time_scales.gap
    );
    let _ = writeln!(s, "| check | verdict | details |\n|---|---|---|");
    for c in &v.checks {
        let _ = writeln!(s, "| {} | {} | {} |", c.title, if c.passed { "PASS" } else { "FAIL" }, c.summary);
    }
    for c in v.checks.iter().filter(|c| !c.phases.is_empty()) {
        let _ = writeln!(s, "\n{} phases:\n\n| m | phase | -mΩ | error |\n|---|---|---|---|", c.title);
        for p in &c.phases {
            let _ = writeln!(s, "| {} | {:.10} | {:.10} | {:.2e} |", p.m, p.phase, p.expected, p.error);
        }
    }
    if let Some(sn) = &v.snapshot {
        let _ = writeln!(s, "\nsnapshot at t = {} (dim {}): beta = {:.8}, d = ({:.6}, {:.6})", sn.t, sn.dim, sn.beta, sn.d.0, sn.d.1);
        for (k, r) in &sn.oracle {
            let _ = writeln!(s, "  {k} vs lab: {r:.3e}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;

    #[test]
    fn matrix_dump_round_trips() {
        let m = OperatorMatrix::from_shape_fn((2, 3), |(i, j)| C64::new(i as f64 + 0.5, -(j as f64)));
        let b = matrix_bytes(&m);
        assert_eq!(b.len(), 16 + 16 * 6);
        assert_eq!(&b[0..8], &2u64.to_le_bytes());
        assert_eq!(&b[16..24], &0.5f64.to_le_bytes());
        assert_eq!(read_matrix(&b).unwrap(), m);
        assert!(read_matrix(&b[..20]).is_none());
    }
}
