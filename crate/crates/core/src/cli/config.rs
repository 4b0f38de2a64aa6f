//! JSON scenario configuration. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceConfig>,
    pub forms: FormsConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemMode {
    Damped,
    Wave,
    Quasilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: ProblemMode,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardConfig {
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "fifty")]
    pub max_iter: usize,
    #[serde(default = "picard_tol")]
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { theta: 1.0, max_iter: 50, tol: 1e-8 }
    }
}

fn one() -> f64 {
    1.0
}

fn fifty() -> usize {
    50
}

fn picard_tol() -> f64 {
    1e-8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcConfig {
    Dirichlet,
    Robin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub elements: usize,
    pub bc: BcConfig,
}

/// A scalar function of time (and possibly space) that may jump at the
/// `until` points of its pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PiecewiseExpr {
    Single(String),
    Pieces(Vec<Piece>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    /// Right end of the piece; omitted on the last one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until: Option<f64>,
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FormsConfig {
    /// `a = ∫u'v' + β₁uv|∂`, `b = ∫u'v' + β₂uv|∂` with `β(t, x)`.
    Robin {
        beta1: PiecewiseExpr,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta2: Option<PiecewiseExpr>,
    },
    /// Weighted stiffness forms with coefficients `c(t, x, y, z)`.
    Coefficient { a: String, b: String, ell: f64, m: f64 },
    /// Matrices read from a JSON file next to the config.
    MatrixFile { path: String },
}

/// Vector data: an expression (in `x` for FEM spaces), explicit
/// coefficients, or one expression per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldConfig {
    Expr(String),
    Values(Vec<f64>),
    Exprs(Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<FieldConfig>,
    /// Exact solution; missing data is derived from it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<FieldConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LionsModeConfig {
    #[serde(rename = "dampedVprime")]
    DampedVprime,
    #[serde(rename = "dampedH")]
    DampedH,
    #[serde(rename = "wave")]
    Wave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LionsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LionsModeConfig>,
    #[serde(default = "two")]
    pub degree: usize,
    #[serde(default = "two")]
    pub elements: usize,
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossCheckConfig {
    #[serde(default = "three")]
    pub degree: usize,
    pub elements: usize,
    #[serde(default = "cross_tol")]
    pub tol: f64,
}

fn three() -> usize {
    3
}

fn cross_tol() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub bounds: bool,
    #[serde(default)]
    pub identities: bool,
    #[serde(default)]
    pub apriori: bool,
    #[serde(default)]
    pub energy: bool,
    #[serde(default, rename = "lions-coercivity", skip_serializing_if = "Option::is_none")]
    pub lions: Option<LionsConfig>,
    #[serde(default, rename = "cross-check", skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheckConfig>,
    /// Default level count of `study`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence_levels: Option<usize>,
    /// Refine the mesh together with the step in `study`.
    #[serde(default)]
    pub refine_h: bool,
    #[serde(default = "identity_tol")]
    pub identity_tol: f64,
    #[serde(default = "slack_tol")]
    pub slack_tol: f64,
    #[serde(default = "identity_tol")]
    pub energy_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            bounds: false,
            identities: false,
            apriori: false,
            energy: false,
            lions: None,
            cross_check: None,
            convergence_levels: None,
            refine_h: false,
            identity_tol: identity_tol(),
            slack_tol: slack_tol(),
            energy_tol: identity_tol(),
        }
    }
}

fn identity_tol() -> f64 {
    1e-8
}

fn slack_tol() -> f64 {
    1e-10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_dir")]
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: out_dir() }
    }
}

fn out_dir() -> String {
    "out".into()
}

/// Matrices of a `matrix-file` form: `A(t) = a_profile(t)·a`, likewise `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub mass_h: Vec<Vec<f64>>,
    pub gram_v: Vec<Vec<f64>>,
    pub a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_profile: Option<PiecewiseExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_profile: Option<PiecewiseExpr>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

impl MatrixFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"mode": "damped", "T": 1.0, "dt": 0.01},
        "forms": {"kind": "matrix-file", "path": "m.json"},
        "data": {"u0": [1.0], "u1": [0.0], "f": "-sin(t)"}
    }"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let c = ScenarioConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.problem.mode, ProblemMode::Damped);
        assert_eq!(c.output.directory, "out");
        assert_eq!(c.verify.identity_tol, 1e-8);
        assert_eq!(c.data.u0, Some(FieldConfig::Values(vec![1.0])));
        assert_eq!(c.data.f, Some(FieldConfig::Expr("-sin(t)".into())));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"dt\"", "\"dtt\": 1, \"dt\"");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("\"path\"", "\"extra\": 1, \"path\"");
        assert!(ScenarioConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("\"data\"", "\"verify\": {\"bound\": true}, \"data\"");
        assert!(ScenarioConfig::from_json(&bad).is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "problem": {"mode": "quasilinear", "T": 0.5, "dt": 0.01, "picard": {"tol": 1e-9}},
            "space": {"elements": 8, "bc": "robin"},
            "forms": {"kind": "coefficient", "a": "1 + 1/(1+y*y)", "b": "1", "ell": 1, "m": 2},
            "data": {"u0": "0", "u1": "0", "f": "sin(t)*x"},
            "verify": {"lions-coercivity": {"degree": 3}, "identities": true}
        }"#;
        let c = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
        let beta = r#"{"problem": {"mode": "wave", "T": 1, "dt": 0.1},
            "forms": {"kind": "robin", "beta1": [{"until": 0.5, "expr": "1"}, {"expr": "2 + t"}]},
            "data": {}}"#;
        let c = ScenarioConfig::from_json(beta).unwrap();
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
    }
}
