//! Constant-environment and random-environment models, and the checks that
//! a model satisfies the structural assumptions (ordering of types,
//! criticality, moment conditions) under which the asymptotic theory holds.
//!
//! Types are indexed from zero in code: constant-environment type `i` in
//! `0..N` is type `i + 1` in the usual mathematical notation, and the
//! environment-driven type is handled separately by [`RandomEnvModel`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::law::OffspringLaw;
use crate::linalg::{SquareMatrix, Tensor3};

/// Default tolerance for criticality checks on numerically specified models.
pub const DEFAULT_CRITICALITY_TOL: f64 = 1e-9;

/// One line of a validation report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    /// The clause being checked, e.g. `"m_{i,i+1} > 0"`.
    pub clause: String,
    /// Where it was checked, e.g. `"i=1"`.
    pub scope: String,
    pub passed: bool,
    /// The quantity that was compared (the offending value on failure).
    pub value: f64,
}

/// Outcome of model validation. Failures are reported, never thrown.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, clause: &str, scope: impl Into<String>, passed: bool, value: f64) {
        self.checks.push(Check {
            clause: clause.to_string(),
            scope: scope.into(),
            passed,
            value,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn extend(&mut self, prefix: &str, other: ValidationReport) {
        for mut c in other.checks {
            c.scope = format!("{prefix}{}", c.scope);
            self.checks.push(c);
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "  [{}] {:<40} {:<12} value={}",
                if c.passed { "pass" } else { "FAIL" },
                c.clause,
                c.scope,
                c.value
            )?;
        }
        Ok(())
    }
}

/// N types evolving in a constant environment; type `i` may only produce
/// types `i..N`, so law `i` has arity `N - i`.
///
/// The mean matrix and second factorial moments are derived exactly from the
/// laws at construction.
#[derive(Debug, Clone)]
pub struct ConstantEnvModel {
    laws: Vec<OffspringLaw>,
    mean: SquareMatrix,
    second: Tensor3,
}

impl ConstantEnvModel {
    pub fn new(laws: Vec<OffspringLaw>) -> Result<Self> {
        let n = laws.len();
        if n == 0 {
            return Err(Error::InvalidModel("at least one type required".into()));
        }
        let mut mean = SquareMatrix::zeros(n);
        let mut second = Tensor3::zeros(n);
        for (i, law) in laws.iter().enumerate() {
            if law.arity() != n - i {
                return Err(Error::InvalidModel(format!(
                    "law of type {} must cover types {}..{} (arity {}), got arity {}",
                    i + 1,
                    i + 1,
                    n,
                    n - i,
                    law.arity()
                )));
            }
            let (m, b) = law.moments()?;
            for (a, &v) in m.iter().enumerate() {
                mean[(i, i + a)] = v;
            }
            for a in 0..n - i {
                for c in 0..n - i {
                    second[(i, i + a, i + c)] = b[(a, c)];
                }
            }
        }
        Ok(Self { laws, mean, second })
    }

    pub fn n_types(&self) -> usize {
        self.laws.len()
    }

    pub fn laws(&self) -> &[OffspringLaw] {
        &self.laws
    }

    pub fn law(&self, i: usize) -> &OffspringLaw {
        &self.laws[i]
    }

    /// One-step mean matrix `M = (m_ij)`.
    pub fn mean_matrix(&self) -> &SquareMatrix {
        &self.mean
    }

    /// One-step second factorial moments `b_ikl`.
    pub fn second_moments(&self) -> &Tensor3 {
        &self.second
    }

    /// `b_i = Var(η_ii) / 2`.
    pub fn half_variance(&self, i: usize) -> f64 {
        let m = self.mean[(i, i)];
        0.5 * (self.second[(i, i, i)] + m - m * m)
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(DEFAULT_CRITICALITY_TOL)
    }

    pub fn validate_with(&self, tol: f64) -> ValidationReport {
        let n = self.n_types();
        let mut r = ValidationReport::default();
        let mut below = 0.0f64;
        for i in 0..n {
            for j in 0..i {
                below = below.max(self.mean[(i, j)].abs());
            }
        }
        r.push("m_ij = 0 for j < i", "all", below == 0.0, below);
        for i in 0..n {
            let m = self.mean[(i, i)];
            r.push(
                "m_ii = 1",
                format!("i={}", i + 1),
                (m - 1.0).abs() <= tol,
                m,
            );
        }
        for i in 0..n.saturating_sub(1) {
            let m = self.mean[(i, i + 1)];
            r.push("m_{i,i+1} > 0", format!("i={}", i + 1), m > 0.0, m);
        }
        let mut worst = 0.0f64;
        let mut finite = true;
        for i in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = self.second[(i, k, l)];
                    finite &= v.is_finite();
                    worst = worst.max(v.abs());
                }
            }
        }
        r.push("b_ikl < inf", "all", finite, worst);
        for i in 0..n {
            let b = self.half_variance(i);
            r.push(
                "b_i = Var(eta_ii)/2 in (0, inf)",
                format!("i={}", i + 1),
                b > 0.0 && b.is_finite(),
                b,
            );
        }
        r
    }
}

/// One environment state: the joint law of `(ξ_0, ξ_1, …, ξ_N)` for a
/// type-0 parent, with the derived conditional moments.
#[derive(Debug, Clone)]
pub struct EnvironmentState {
    law0: OffspringLaw,
    mu1: f64,
    mu2: f64,
    theta: Vec<f64>,
}

impl EnvironmentState {
    pub fn new(law0: OffspringLaw) -> Result<Self> {
        if law0.arity() < 2 {
            return Err(Error::InvalidModel(
                "environment law must cover type 0 and at least one further type".into(),
            ));
        }
        let (m, b) = law0.moments()?;
        Ok(Self {
            mu1: m[0],
            mu2: b[(0, 0)],
            theta: m[1..].to_vec(),
            law0,
        })
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law0
    }

    /// `μ1 = E[ξ_0 | e]`.
    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    /// `μ2 = E[ξ_0 (ξ_0 - 1) | e]`.
    pub fn mu2(&self) -> f64 {
        self.mu2
    }

    /// `θ_i = E[ξ_i | e]` for `i = 1..N` (index 0 is type 1).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `Θ1 = Σ θ_i`.
    pub fn theta_sum(&self) -> f64 {
        self.theta.iter().sum()
    }
}

/// Exact expectations over the environment used by validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentMoments {
    pub e_log_mu1: f64,
    pub e_log2_mu1: f64,
    pub e_inv_mu1: f64,
    /// `E[μ2 μ1^{-2} (1 + max(0, log μ1))]`.
    pub e_mu2_ratio: f64,
}

/// Type-0 reproduction driven by an i.i.d. environment drawn from a finite
/// mixture of states, with types `1..N` in a constant environment.
#[derive(Debug, Clone)]
pub struct RandomEnvModel {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    states: Vec<EnvironmentState>,
    constant: ConstantEnvModel,
}

impl RandomEnvModel {
    pub fn new(states: Vec<(f64, EnvironmentState)>, constant: ConstantEnvModel) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidModel(
                "environment needs at least one state".into(),
            ));
        }
        let n = constant.n_types();
        let mut total = 0.0;
        for (idx, (w, st)) in states.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(Error::InvalidModel(format!("state {idx} has weight {w}")));
            }
            if st.law().arity() != n + 1 {
                return Err(Error::InvalidModel(format!(
                    "state {idx} law has arity {}, expected {}",
                    st.law().arity(),
                    n + 1
                )));
            }
            total += w;
        }
        if (total - 1.0).abs() > crate::law::TABLE_SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!("state weights sum to {total}")));
        }
        let mut cumulative = Vec::with_capacity(states.len());
        let mut acc = 0.0;
        for (w, _) in &states {
            acc += w;
            cumulative.push(acc);
        }
        let (weights, states) = states.into_iter().unzip();
        Ok(Self {
            weights,
            cumulative,
            states,
            constant,
        })
    }

    pub fn constant(&self) -> &ConstantEnvModel {
        &self.constant
    }

    pub fn n_types(&self) -> usize {
        self.constant.n_types()
    }

    pub fn states(&self) -> &[EnvironmentState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn state(&self, idx: usize) -> &EnvironmentState {
        &self.states[idx]
    }

    /// Index of an environment state drawn according to the mixture weights.
    #[inline]
    pub fn sample_state_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.states.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.states.len() - 1)
    }

    pub fn moments(&self) -> EnvironmentMoments {
        let mut m = EnvironmentMoments {
            e_log_mu1: 0.0,
            e_log2_mu1: 0.0,
            e_inv_mu1: 0.0,
            e_mu2_ratio: 0.0,
        };
        for (w, st) in self.weights.iter().zip(&self.states) {
            let lm = st.mu1().ln();
            m.e_log_mu1 += w * lm;
            m.e_log2_mu1 += w * lm * lm;
            m.e_inv_mu1 += w / st.mu1();
            m.e_mu2_ratio += w * st.mu2() / (st.mu1() * st.mu1()) * (1.0 + lm.max(0.0));
        }
        m
    }

    pub fn validate(&self) -> ValidationReport {
        self.validate_with(DEFAULT_CRITICALITY_TOL)
    }

    pub fn validate_with(&self, tol: f64) -> ValidationReport {
        let mut r = ValidationReport::default();
        for (idx, st) in self.states.iter().enumerate() {
            r.push("mu1 > 0", format!("state={idx}"), st.mu1() > 0.0, st.mu1());
        }
        let m = self.moments();
        r.push(
            "|E log mu1| <= tol",
            "env",
            m.e_log_mu1.abs() <= tol,
            m.e_log_mu1,
        );
        r.push(
            "E log^2 mu1 in (0, inf)",
            "env",
            m.e_log2_mu1 > 0.0 && m.e_log2_mu1.is_finite(),
            m.e_log2_mu1,
        );
        for (idx, st) in self.states.iter().enumerate() {
            let t = st.theta()[0];
            r.push("P(theta_1 > 0) = 1", format!("state={idx}"), t > 0.0, t);
        }
        r.push(
            "E[mu1^-1] < inf",
            "env",
            m.e_inv_mu1.is_finite(),
            m.e_inv_mu1,
        );
        r.push(
            "E[mu2 mu1^-2 (1 + max(0, log mu1))] < inf",
            "env",
            m.e_mu2_ratio.is_finite(),
            m.e_mu2_ratio,
        );
        r.extend("const:", self.constant.validate_with(tol));
        r
    }

    /// Largest component mean over all laws; bounds sampler rates.
    pub(crate) fn max_mean(&self) -> f64 {
        let env = self.states.iter().map(|s| s.law().max_mean());
        let cst = self.constant.laws().iter().map(|l| l.max_mean());
        env.chain(cst).fold(1.0, f64::max)
    }
}

/// Serialized model document.
///
/// ```json
/// {
///   "id": "lf-single",
///   "N": 1,
///   "type_laws": [ {"kind": "product", "components": [{"kind": "linear_fractional", "b": 1.0}]} ],
///   "env": { "states": [ {"weight": 1.0, "law0": { ... arity N+1 ... }} ] }
/// }
/// ```
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(rename = "N")]
    pub n: usize,
    pub type_laws: Vec<OffspringLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub states: Vec<EnvStateSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvStateSpec {
    pub weight: f64,
    pub law0: OffspringLaw,
}

/// A model built from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct Model {
    pub id: String,
    pub constant: ConstantEnvModel,
    pub random: Option<RandomEnvModel>,
}

impl Model {
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        if spec.type_laws.len() != spec.n {
            return Err(Error::InvalidModel(format!(
                "N = {} but {} type laws given",
                spec.n,
                spec.type_laws.len()
            )));
        }
        let constant = ConstantEnvModel::new(spec.type_laws.clone())?;
        let random = match &spec.env {
            None => None,
            Some(env) => {
                let states = env
                    .states
                    .iter()
                    .map(|s| Ok((s.weight, EnvironmentState::new(s.law0.clone())?)))
                    .collect::<Result<Vec<_>>>()?;
                Some(RandomEnvModel::new(states, constant.clone())?)
            }
        };
        Ok(Self {
            id: spec.id.clone().unwrap_or_else(|| "model".to_string()),
            constant,
            random,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_spec(&spec)
    }

    pub fn validate(&self) -> ValidationReport {
        match &self.random {
            Some(r) => r.validate(),
            None => self.constant.validate(),
        }
    }

    pub fn random_env(&self) -> Result<&RandomEnvModel> {
        self.random.as_ref().ok_or_else(|| {
            Error::InvalidModel(format!("model `{}` has no random environment", self.id))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::Univariate;

    fn lf(b: f64) -> Univariate {
        Univariate::LinearFractional { b }
    }

    fn two_point(weights: (f64, f64), theta1: f64) -> RandomEnvModel {
        let cst = ConstantEnvModel::new(vec![OffspringLaw::univariate(lf(1.0)).unwrap()]).unwrap();
        let st = |mu: f64| {
            EnvironmentState::new(
                OffspringLaw::product(vec![
                    Univariate::Poisson { lambda: mu },
                    Univariate::Poisson { lambda: theta1 },
                ])
                .unwrap(),
            )
            .unwrap()
        };
        RandomEnvModel::new(vec![(weights.0, st(2.0)), (weights.1, st(0.5))], cst).unwrap()
    }

    #[test]
    fn single_type_lf_passes() {
        let m = ConstantEnvModel::new(vec![OffspringLaw::univariate(lf(1.0)).unwrap()]).unwrap();
        let r = m.validate();
        assert!(r.passed(), "{r}");
        assert_eq!(m.half_variance(0), 1.0);
    }

    #[test]
    fn missing_successor_fails() {
        let m = ConstantEnvModel::new(vec![
            OffspringLaw::product(vec![lf(1.0), Univariate::Deterministic { k: 0 }]).unwrap(),
            OffspringLaw::univariate(lf(1.0)).unwrap(),
        ])
        .unwrap();
        let r = m.validate();
        assert!(!r.passed());
        let f: Vec<_> = r.failures().collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].clause, "m_{i,i+1} > 0");
        assert_eq!(f[0].value, 0.0);
    }

    #[test]
    fn subcritical_type_fails() {
        let m = ConstantEnvModel::new(vec![
            OffspringLaw::product(vec![
                Univariate::Poisson { lambda: 0.9 },
                Univariate::Poisson { lambda: 0.5 },
            ])
            .unwrap(),
            OffspringLaw::univariate(lf(1.0)).unwrap(),
        ])
        .unwrap();
        let r = m.validate();
        let f: Vec<_> = r.failures().collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].clause, "m_ii = 1");
        assert_eq!(f[0].value, 0.9);
    }

    #[test]
    fn wrong_arity_is_an_error() {
        assert!(
            ConstantEnvModel::new(vec![OffspringLaw::univariate(lf(1.0)).unwrap(); 2]).is_err()
        );
    }

    #[test]
    fn symmetric_two_point_environment_is_critical() {
        let r = two_point((0.5, 0.5), 1.0).validate();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn skewed_two_point_environment_fails_criticality() {
        let model = two_point((0.6, 0.4), 1.0);
        let m = model.moments();
        assert!((m.e_log_mu1 - 0.2 * 2f64.ln()).abs() < 1e-15);
        let r = model.validate_with(1e-9);
        let f: Vec<_> = r.failures().collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].clause, "|E log mu1| <= tol");
    }

    #[test]
    fn zero_theta1_fails() {
        let r = two_point((0.5, 0.5), 0.0).validate();
        assert!(r.failures().any(|c| c.clause == "P(theta_1 > 0) = 1"));
    }

    #[test]
    fn validation_is_deterministic() {
        let m = two_point((0.5, 0.5), 1.0);
        assert_eq!(m.validate(), m.validate());
    }
}
