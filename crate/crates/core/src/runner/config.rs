//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Condition;
use crate::model::{Model, ModelSpec, ValidationReport, DEFAULT_CRITICALITY_TOL};
use crate::runner::results::Format;

/// Experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// `Q_n^{(i)}(0)` by exact iteration.
    ExactSurvival,
    /// `m_il(n)` and `b_ikl(n)`.
    Moments,
    /// Two-sided moment bounds on a grid of `s`.
    Sandwich,
    /// Envelope checks of `Q_n^{(1)}(s(n))` against the regime exponents.
    Regimes,
    /// Direct simulation: `P(X_n > 0)` and `P(Z_n ≠ 0)`.
    Simulate,
    /// Hybrid survival estimates.
    Hybrid,
    /// Conditional limit laws.
    Yaglom,
    /// Tails of lineage functionals, Laplace transform and `F(n)`.
    Tails,
    /// The full acceptance suite.
    VerifyAll,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ExactSurvival => "exact-survival",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Sandwich => "sandwich",
            ExperimentKind::Regimes => "regimes",
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Hybrid => "hybrid",
            ExperimentKind::Yaglom => "yaglom",
            ExperimentKind::Tails => "tails",
            ExperimentKind::VerifyAll => "verify-all",
        }
    }

    fn needs_random_env(self) -> bool {
        matches!(
            self,
            ExperimentKind::Simulate
                | ExperimentKind::Hybrid
                | ExperimentKind::Yaglom
                | ExperimentKind::Tails
        )
    }
}

/// Size of the acceptance suite run by `verify-all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Stated replicate counts and horizons.
    #[default]
    Full,
    /// Reduced sizes for quick determinism checks; verdicts are not
    /// meaningful.
    Smoke,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: String,
    #[serde(default)]
    pub format: Format,
}

/// One experiment. Kind-specific fields are optional and ignored by kinds
/// that do not use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Inline model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Model file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub horizons: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t_grid: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pop_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Conditioning event for `yaglom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    /// Argument `s` of the hybrid functional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<f64>>,
    /// Number of `s` points for `sandwich`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    /// Envelope threshold for `regimes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Functional names for `tails` (`S`, `A`, `L`, `B`, `Lj`, `Bj`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_generations: Option<u64>,
    /// Trajectory dump path for `simulate`, relative to the working
    /// directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,
}

impl ExperimentConfig {
    /// Parses a config document. Unknown fields are reported by name.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(map_serde_error)
    }

    /// Canonical form: pretty JSON with fields in declaration order and
    /// unset optional fields omitted.
    pub fn canonical(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable config")
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    /// Static checks independent of the model.
    pub fn check(&self) -> Result<()> {
        if self.reps == Some(0) {
            return Err(Error::Config("reps must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.kind != ExperimentKind::VerifyAll
            && self.model.is_some() == self.model_path.is_some()
        {
            return Err(Error::Config(
                "exactly one of `model` and `modelPath` is required".into(),
            ));
        }
        let needs_horizons = !matches!(self.kind, ExperimentKind::VerifyAll);
        if needs_horizons && self.horizons.is_empty() {
            return Err(Error::Config(format!(
                "kind `{}` needs `horizons`",
                self.kind.name()
            )));
        }
        if self.kind.needs_random_env() && self.reps.is_none() {
            return Err(Error::Config(format!(
                "kind `{}` needs `reps`",
                self.kind.name()
            )));
        }
        if matches!(self.kind, ExperimentKind::Regimes | ExperimentKind::Yaglom)
            && self.t_grid.is_empty()
        {
            return Err(Error::Config(format!(
                "kind `{}` needs `tGrid`",
                self.kind.name()
            )));
        }
        Ok(())
    }
}

fn map_serde_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return Error::UnknownField(rest[..end].to_string());
        }
    }
    Error::Config(msg)
}

/// A parsed config with its model built and validated.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub model: Option<Model>,
    pub report: Option<ValidationReport>,
}

/// Reads, checks and validates a config file. A model that fails
/// validation yields [`Error::Validation`].
pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let text = read(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    load(&text, &base)
}

/// As [`parse_config`] for a document already in memory; `base` resolves
/// `modelPath`.
pub fn load(text: &str, base: &Path) -> Result<LoadedConfig> {
    let config = ExperimentConfig::from_json(text)?;
    config.check()?;
    let spec = match (&config.model, &config.model_path) {
        (Some(spec), _) => Some(spec.clone()),
        (None, Some(p)) => {
            let full: PathBuf = base.join(p);
            let text = read(&full)?;
            Some(serde_json::from_str::<ModelSpec>(&text).map_err(map_serde_error)?)
        }
        (None, None) => None,
    };
    let (model, report) = match spec {
        None => (None, None),
        Some(spec) => {
            let model = Model::from_spec(&spec)?;
            let tol = config.criticality_tol.unwrap_or(DEFAULT_CRITICALITY_TOL);
            let report = match &model.random {
                Some(r) => r.validate_with(tol),
                None => model.constant.validate_with(tol),
            };
            if !report.passed() {
                return Err(Error::Validation(report));
            }
            if config.kind.needs_random_env() {
                model.random_env()?;
            }
            (Some(model), Some(report))
        }
    };
    Ok(LoadedConfig {
        config,
        model,
        report,
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kind": "exact-survival",
        "model": {"id": "lf", "N": 1, "type_laws": [
            {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}]}
        ]},
        "horizons": [10, 100],
        "seed": 1
    }"#;

    #[test]
    fn canonical_round_trip() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let canon = c.canonical();
        let again = ExperimentConfig::from_json(&canon).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.canonical(), canon);
    }

    #[test]
    fn unknown_field_is_named() {
        let bad = MINIMAL.replace("\"horizons\"", "\"horizion\"");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::UnknownField(f)) => assert_eq!(f, "horizion"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_is_required() {
        let bad = MINIMAL.replace(",\n        \"seed\": 1", "");
        assert!(
            matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(m)) if m.contains("seed"))
        );
    }

    #[test]
    fn missing_coupling_fails_validation() {
        let text = r#"{
            "kind": "exact-survival",
            "model": {"N": 2, "type_laws": [
                {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}, {"kind": "deterministic", "k": 0}]},
                {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}]}
            ]},
            "horizons": [1],
            "seed": 1
        }"#;
        match load(text, Path::new(".")) {
            Err(Error::Validation(r)) => {
                assert!(r.failures().any(|c| c.clause.contains("m_{i,i+1} > 0")));
            }
            other => panic!("{other:?}"),
        }
    }
}
