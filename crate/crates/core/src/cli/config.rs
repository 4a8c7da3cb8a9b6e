//! Scenario files: a TOML tree with dotted `--override` support.

use crate::analysis::suite::{CheckSettings, Cutoffs, SuiteContext};
use crate::analysis::ScanControl;
use crate::geometry::{PathFamily, SpherePath};
use crate::hilbert::{BasisConfig, Factors, PhysicalParams};
use crate::linalg::hermitian_eigen;
use crate::propagators::{AssemblyMode, IntegratorConfig};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    #[serde(flatten)]
    pub family: PathFamily,
    /// Defaults to the natural duration of the family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl PathConfig {
    pub fn build(&self) -> Result<SpherePath> {
        Ok(match self.duration {
            Some(d) => SpherePath::with_duration(self.family.clone(), d)?,
            None => SpherePath::new(self.family.clone())?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: AssemblyMode,
    pub end_time_fraction: f64,
    pub sample_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { mode: AssemblyMode::Full, end_time_fraction: 0.2, sample_count: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub control: ScanControl,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: "out".into(), formats: vec![OutputFormat::Json, OutputFormat::Csv, OutputFormat::Svg] }
    }
}

/// Reduced basis for the dense factor snapshot written by `factorize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnapshotConfig {
    pub basis: Cutoffs,
    pub unitarity_tol: f64,
}

impl SnapshotConfig {
    pub fn basis_config(&self) -> BasisConfig {
        self.basis.basis()
    }
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig { basis: Cutoffs { n: [3, 3, 4], buffer: [1, 1, 2] }, unitarity_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub physical: PhysicalParams,
    pub basis: BasisConfig,
    pub path: PathConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub snapshot: SnapshotConfig,
    #[serde(default)]
    pub checks: CheckSettings,
}

/// T₁ = 1/ε, T₂ = 2π/ω, T₃ = 1/Δ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub gap: f64,
}

impl ScenarioConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, overrides).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text.parse().map_err(|e: toml::de::Error| anyhow!("{e}"))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ScenarioConfig = toml::Value::Table(tree).try_into().map_err(|e: toml::de::Error| anyhow!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        self.physical.validate()?;
        self.basis.validate()?;
        self.path.build()?;
        if !(self.run.end_time_fraction > 0.0 && self.run.end_time_fraction <= 1.0) {
            bail!("run.end_time_fraction must lie in (0, 1]");
        }
        if self.run.sample_count < 2 {
            bail!("run.sample_count must be at least 2");
        }
        let i = &self.integrator;
        if !(i.tol > 0.0 && i.step_init > 0.0 && i.max_steps > 0) {
            bail!("integrator tol, step_init and max_steps must be positive");
        }
        if let Some(s) = &self.scan {
            crate::analysis::validate_scan_values(&s.values).context("scan.values")?;
        }
        if self.output.directory.is_empty() {
            bail!("output.directory must not be empty");
        }
        crate::analysis::suite::validate_settings(&self.checks)?;
        self.snapshot.basis_config().validate()?;
        Ok(())
    }

    pub fn context(&self) -> Result<SuiteContext> {
        Ok(SuiteContext {
            params: self.physical.clone(),
            basis: self.basis.clone(),
            path: self.path.build()?,
            integrator: self.integrator.clone(),
            end_time_fraction: self.run.end_time_fraction,
            sample_count: self.run.sample_count,
        })
    }

    /// Scenario time scales; Δ is the smallest gap among the lower half of
    /// the axial levels.
    pub fn time_scales(&self) -> Result<TimeScales> {
        let f = Factors::new(&self.physical, &self.basis)?;
        let (vals, _) = hermitian_eigen(&f.h_axial);
        let keep = (vals.len() / 2).max(2).min(vals.len());
        let gap = if vals.len() < 2 {
            self.physical.harmonic_frequency()
        } else {
            vals[..keep].windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
        };
        Ok(TimeScales {
            t1: 1.0 / self.path.build()?.eps(),
            t2: 2.0 * PI / self.physical.omega(),
            t3: 1.0 / gap,
            gap,
        })
    }
}

/// Set `a.b.c = value` in the tree. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| anyhow!("override `{spec}` is not key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("override `{spec}` has an empty key");
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
        node = entry.as_table_mut().ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
