//! Run configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use polyflow::diagnostics::TestBank;
use polyflow::solver::FlowParams;
use polyflow::target::TargetManifold;
use polyflow::GridSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    pub points: usize,
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            points: 64,
            length: 2.0 * std::f64::consts::PI * 8.0,
        }
    }
}

/// Where the initial map comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InitialData {
    /// Named entry of the standard test bank.
    Bank(String),
    /// Field or trajectory snapshot; the first sample is used.
    Snapshot(PathBuf),
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Bank("log_oscillation_0.05".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub orders: Vec<usize>,
    /// Profiles are sampled on `0, dx, ..., x_max`.
    pub x_max: f64,
    pub dx: f64,
    pub decay_exponent: f64,
    pub l1_times: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            orders: vec![1, 2, 3],
            x_max: 20.0,
            dx: 0.05,
            decay_exponent: 5.0,
            l1_times: vec![0.1, 0.3, 1.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub pairs: usize,
    pub ball_samples: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            pairs: 8,
            ball_samples: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Bank entries to run the smoothing and distance reports on; empty means all.
    pub bank: Vec<String>,
    pub s_samples: usize,
    /// Resolution the random forcings of the `S` bound are drawn at.
    pub base_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            bank: Vec::new(),
            s_samples: 4,
            base_points: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    pub target: TargetManifold,
    pub flow: FlowParams,
    pub initial: InitialData,
    pub kernel: KernelConfig,
    pub probe: ProbeConfig,
    pub verify: VerifyConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid: GridConfig::default(),
            target: TargetManifold::default(),
            flow: FlowParams {
                steps: 64,
                ..FlowParams::default()
            },
            initial: InitialData::default(),
            kernel: KernelConfig::default(),
            probe: ProbeConfig::default(),
            verify: VerifyConfig::default(),
            out: PathBuf::from("polyflow-out"),
        }
    }
}

/// A configuration problem tied to one field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn core_error(section: &str, e: polyflow::Error) -> FieldError {
    match e {
        polyflow::Error::InvalidParameter { name, reason } => FieldError {
            field: format!("{section}.{name}"),
            message: reason,
        },
        other => FieldError {
            field: section.into(),
            message: other.to_string(),
        },
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, FieldError> {
        serde_json::from_str(text).map_err(|e| FieldError {
            field: "config".into(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(path).map_err(|e| FieldError {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    pub fn grid_spec(&self) -> polyflow::Result<GridSpec> {
        GridSpec::new(self.grid.dim, self.grid.length, self.grid.points)
    }

    /// Every precondition the subcommands rely on, checked before any compute.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(field_error(
                "schema_version",
                format!("{} is not supported (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        let spec = self
            .grid_spec()
            .map_err(|e| errs.push(field_error("grid", e.to_string())))
            .ok();
        if let Err(e) = self.target.validate() {
            errs.push(core_error("target", e));
        }
        if self.target.l != 3 {
            errs.push(field_error(
                "target.l",
                format!("{} unsupported: initial data are S^2-valued", self.target.l),
            ));
        }
        if let Err(e) = self.flow.validate() {
            errs.push(core_error("flow", e));
        }
        if let Some(r) = self.flow.norm_radius {
            if !(r.is_finite() && r > 0.0) {
                errs.push(field_error("flow.norm_radius", format!("{r} must be > 0")));
            }
        }
        if let Some(spec) = spec {
            if self.flow.validate().is_ok() {
                if let Err(e) = self.flow.cylinders(&spec) {
                    errs.push(core_error("flow", e));
                }
            }
            match TestBank::standard(&spec, self.flow.seed) {
                Ok(bank) => {
                    if let InitialData::Bank(name) = &self.initial {
                        if bank.get(name).is_none() {
                            errs.push(unknown_entry("initial.bank", name, &bank));
                        }
                    }
                    for entry in &self.verify.bank {
                        if bank.get(entry).is_none() {
                            errs.push(unknown_entry("verify.bank", entry, &bank));
                        }
                    }
                }
                Err(e) => errs.push(core_error("grid", e)),
            }
            let base = self.verify.base_points;
            if base > spec.points() || GridSpec::new(spec.dim(), spec.length(), base).is_err() {
                errs.push(field_error(
                    "verify.base_points",
                    format!("{base} must be a power of two in 8..={}", spec.points()),
                ));
            }
        }
        let k = &self.kernel;
        if k.orders.is_empty() || k.orders.iter().any(|m| !(1..=3).contains(m)) {
            errs.push(field_error(
                "kernel.orders",
                format!("{:?} must be a non-empty subset of 1..=3", k.orders),
            ));
        }
        if !(k.dx > 0.0 && k.x_max > k.dx && k.x_max.is_finite()) {
            errs.push(field_error(
                "kernel.dx",
                format!("need 0 < dx = {} < x_max = {}", k.dx, k.x_max),
            ));
        }
        if !(k.decay_exponent >= 0.0 && k.decay_exponent.is_finite()) {
            errs.push(field_error(
                "kernel.decay_exponent",
                format!("{} must be >= 0", k.decay_exponent),
            ));
        }
        if k.l1_times.is_empty() || k.l1_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            errs.push(field_error("kernel.l1_times", "times must be positive and finite"));
        }
        if self.probe.pairs < 5 {
            errs.push(field_error("probe.pairs", format!("{} must be >= 5", self.probe.pairs)));
        }
        if self.probe.ball_samples == 0 {
            errs.push(field_error("probe.ball_samples", "must be >= 1"));
        }
        if self.verify.s_samples == 0 {
            errs.push(field_error("verify.s_samples", "must be >= 1"));
        }
        errs
    }
}

fn field_error(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.into(),
        message: message.into(),
    }
}

fn unknown_entry(field: &str, name: &str, bank: &TestBank) -> FieldError {
    let names: Vec<&str> = bank.entries.iter().map(|e| e.name.as_str()).collect();
    field_error(field, format!("unknown entry `{name}`; known: {}", names.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(RunConfig::default().validate().is_empty());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::default();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = RunConfig::from_json(r#"{"flow": {"stepz": 3}}"#).unwrap_err();
        assert!(e.message.contains("stepz"), "{e}");
    }

    #[test]
    fn negative_horizon_names_the_field() {
        let c = RunConfig::from_json(r#"{"flow": {"t_final": -1.0}}"#).unwrap();
        let errs = c.validate();
        assert!(errs.iter().any(|e| e.field == "flow.t_final"), "{errs:?}");
    }
}
