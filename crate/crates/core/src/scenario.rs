//! Scenario files: JSON schema, validation and the two built-in presets.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    derive_rate_matrix, frequency_share_matrix, partition_subgroups, ModelParams, ServiceClass,
    Subgroup, DEFAULT_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// The individual validation messages, if this is a validation error.
    pub fn violations(&self) -> &[String] {
        match self {
            Self::Validation(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeKind {
    Deterministic,
    Exponential,
}

/// Per-packet size distribution of one service.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeModel {
    pub kind: SizeKind,
    /// Mean size in bytes.
    pub mean: f64,
}

impl SizeModel {
    pub fn deterministic(mean: f64) -> Self {
        Self {
            kind: SizeKind::Deterministic,
            mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_uavs: u64,
    pub duration_s: f64,
    pub seed: u64,
    pub model: ModelParams,
    pub sizes: [SizeModel; 3],
    /// Free-form provenance notes carried through the file.
    pub notes: Vec<String>,
}

impl ScenarioConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.model.violations();
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            out.push(format!(
                "duration_s must be finite and non-negative (duration_s = {})",
                self.duration_s
            ));
        }
        if self.n_uavs > u64::from(u32::MAX) {
            out.push(format!("n_uavs must fit in 32 bits (n_uavs = {})", self.n_uavs));
        }
        for c in ServiceClass::ALL {
            let size = &self.sizes[c.index()];
            let w = self.model.w_bytes[c.index()];
            if !(size.mean.is_finite() && size.mean >= 0.0) {
                out.push(format!("sizes[{c}].mean must be non-negative ({})", size.mean));
            } else if size.mean != w {
                out.push(format!(
                    "sizes[{c}].mean must equal model.w_bytes[{c}] ({} vs {w})",
                    size.mean
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(v))
        }
    }
}

// On-disk layout. Everything is optional so that a missing field surfaces as a
// validation message rather than a bare serde error.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_uavs: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duration_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sizes: Option<[SizeModel; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    w_bytes: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_stream: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_iot: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_11: Option<f64>,
}

fn require<T>(value: Option<T>, field: &str, missing: &mut Vec<String>) -> Option<T> {
    if value.is_none() {
        missing.push(format!("missing required field `{field}`"));
    }
    value
}

/// Parses and validates a scenario document.
///
/// Omitted optional fields take their defaults: `name` = "unnamed", `seed` = 0,
/// `q_stream` = `q_iot` = 0.9, deterministic sizes with the model's means.
pub fn parse_scenario(document: &str) -> Result<ScenarioConfig, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(document).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut missing = Vec::new();
    let n_uavs = require(doc.n_uavs, "n_uavs", &mut missing);
    let duration_s = require(doc.duration_s, "duration_s", &mut missing);
    let model = doc.model.unwrap_or_default();
    let alpha = require(model.alpha, "model.alpha", &mut missing);
    let gamma = require(model.gamma, "model.gamma", &mut missing);
    let w_bytes = require(model.w_bytes, "model.w_bytes", &mut missing);
    let lambda_11 = require(model.lambda_11, "model.lambda_11", &mut missing);
    if !missing.is_empty() {
        return Err(ScenarioError::Validation(missing));
    }

    let n_uavs = n_uavs.unwrap();
    let mut violations = Vec::new();
    if n_uavs < 0 {
        violations.push(format!("n_uavs must be non-negative (n_uavs = {n_uavs})"));
    }
    let model = ModelParams {
        alpha: alpha.unwrap(),
        gamma: gamma.unwrap(),
        w_bytes: w_bytes.unwrap(),
        q_stream: model.q_stream.unwrap_or(DEFAULT_THRESHOLD),
        q_iot: model.q_iot.unwrap_or(DEFAULT_THRESHOLD),
        lambda_11: lambda_11.unwrap(),
    };
    let sizes = doc
        .sizes
        .unwrap_or_else(|| model.w_bytes.map(SizeModel::deterministic));
    let config = ScenarioConfig {
        name: doc.name.unwrap_or_else(|| "unnamed".to_string()),
        n_uavs: n_uavs.max(0) as u64,
        duration_s: duration_s.unwrap(),
        seed: doc.seed.unwrap_or(0),
        model,
        sizes,
        notes: doc.notes,
    };
    violations.extend(config.violations());
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ScenarioError::Validation(violations))
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Serializes a config as a pretty-printed scenario document.
pub fn emit_scenario(config: &ScenarioConfig) -> String {
    let m = &config.model;
    let doc = ScenarioDoc {
        name: Some(config.name.clone()),
        n_uavs: Some(config.n_uavs as i64),
        duration_s: Some(config.duration_s),
        seed: Some(config.seed),
        model: Some(ModelDoc {
            alpha: Some(m.alpha),
            gamma: Some(m.gamma),
            w_bytes: Some(m.w_bytes),
            q_stream: Some(m.q_stream),
            q_iot: Some(m.q_iot),
            lambda_11: Some(m.lambda_11),
        }),
        sizes: Some(config.sizes),
        notes: config.notes.clone(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("scenario document serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Weather measurement and video streaming.
    A,
    /// BVLoS IoT data collection.
    B,
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            _ => Err(format!("unknown preset `{s}` (expected A or B)")),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
        })
    }
}

/// Telemetry rate of a poor UAV in both presets, packets/s.
pub const PRESET_TELEMETRY_RATE: f64 = 100.0;
/// IoT rate of a rich UAV in preset B, packets/s.
pub const PRESET_B_RICH_IOT_RATE: f64 = 10.0;

const PRESET_ALPHA: [f64; 3] = [8.0, 3.0, 2.0];
const PRESET_W_BYTES: [f64; 3] = [100.0, 1500.0, 5.0e6];
const PRESET_STREAMING_SHARE: f64 = 1e-4;
const PRESET_N_UAVS: u64 = 1000;
const PRESET_DURATION_S: f64 = 60.0;

/// Preset A's transaction shares.
///
/// Chosen so that doubling the IoT share and renormalizing (preset B) puts a
/// rich UAV's IoT rate at exactly [`PRESET_B_RICH_IOT_RATE`].
fn preset_a_gamma() -> [f64; 3] {
    let base = ModelParams {
        alpha: PRESET_ALPHA,
        gamma: [1.0 / 3.0; 3],
        w_bytes: PRESET_W_BYTES,
        q_stream: DEFAULT_THRESHOLD,
        q_iot: DEFAULT_THRESHOLD,
        lambda_11: PRESET_TELEMETRY_RATE,
    };
    let part = partition_subgroups(&base).expect("preset partition is feasible");
    let beta = frequency_share_matrix(&base, &part).expect("preset alphas are valid");
    let rates = derive_rate_matrix(&base, &part, &beta).expect("preset segments are populated");
    let telemetry_mean = rates.mean_rate(ServiceClass::Telemetry, &part);

    // λ_23 = (γ₂/γ₁) · β_23 / F₃ · Σ_j λ_1j F_j, so the B ratio γ₂/γ₁ is fixed.
    let rich = Subgroup::Rich;
    let ratio_b = PRESET_B_RICH_IOT_RATE * part.get(rich)
        / (beta.get(ServiceClass::Iot, rich) * telemetry_mean);
    let ratio_a = ratio_b / 2.0;
    let telemetry = (1.0 - PRESET_STREAMING_SHARE) / (1.0 + ratio_a);
    [telemetry, ratio_a * telemetry, PRESET_STREAMING_SHARE]
}

/// Preset B's shares: preset A's with the IoT share doubled, renormalized.
fn double_iot_share(gamma: [f64; 3]) -> [f64; 3] {
    let mut g = gamma;
    g[ServiceClass::Iot.index()] *= 2.0;
    let sum: f64 = g.iter().sum();
    g.map(|x| x / sum)
}

/// Returns one of the built-in case-study scenarios.
pub fn preset(which: Preset) -> ScenarioConfig {
    let gamma_a = preset_a_gamma();
    let (name, gamma, seed) = match which {
        Preset::A => ("A: weather measurement and video streaming", gamma_a, 1),
        Preset::B => ("B: BVLoS IoT data collection", double_iot_share(gamma_a), 2),
    };
    let mut notes = vec![
        "model.lambda_11 = 100 packets/s: telemetry rate of a poor UAV".to_string(),
        "model.alpha, model.w_bytes, n_uavs, duration_s and seed are illustrative defaults"
            .to_string(),
        format!(
            "model.gamma: streaming share {PRESET_STREAMING_SHARE} is illustrative; the IoT/telemetry \
             ratio is set so that preset B's rich-subgroup IoT rate is {PRESET_B_RICH_IOT_RATE} packets/s"
        ),
    ];
    if which == Preset::B {
        notes.push("model.gamma: IoT share is twice preset A's, renormalized to sum to 1".into());
    }
    ScenarioConfig {
        name: name.to_string(),
        n_uavs: PRESET_N_UAVS,
        duration_s: PRESET_DURATION_S,
        seed,
        model: ModelParams {
            alpha: PRESET_ALPHA,
            gamma,
            w_bytes: PRESET_W_BYTES,
            q_stream: DEFAULT_THRESHOLD,
            q_iot: DEFAULT_THRESHOLD,
            lambda_11: PRESET_TELEMETRY_RATE,
        },
        sizes: PRESET_W_BYTES.map(SizeModel::deterministic),
        notes,
    }
}
