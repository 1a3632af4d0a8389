//! Multivariate offspring distributions.
//!
//! An [`OffspringLaw`] describes the joint law of the child-count vector of a
//! single parent. Two representations are supported:
//!
//! * [`OffspringLaw::Table`]: a finite table of child-count vectors and their
//!   probabilities;
//! * [`OffspringLaw::Product`]: independent components, one univariate
//!   [`Univariate`] law per child type.
//!
//! Every law supports exact generating-function evaluation, exact first and
//! second factorial moments, exact single draws, and exact draws of the
//! summed offspring of many i.i.d. parents (used by the simulators so that a
//! generation costs O(1) regardless of its size).
//!
//! Generating functions are evaluated in *deficiency* form,
//! `d(q) = 1 - h(1 - q)`, because every quantity of interest lives close to
//! `h = 1`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

/// Probabilities of a table law must sum to one within this tolerance.
pub const TABLE_SUM_TOLERANCE: f64 = 1e-12;

/// Upper bound on the Poisson rate accepted by the aggregate sampler.
pub(crate) const MAX_POISSON_RATE: f64 = 1.8e19;

/// A univariate offspring law used as a component of a product law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Univariate {
    /// Always exactly `k` children.
    Deterministic {
        k: u32,
    },
    /// One child with probability `p`, none otherwise.
    Bernoulli {
        p: f64,
    },
    Poisson {
        lambda: f64,
    },
    /// Geometric on `{0, 1, 2, ...}` parameterised by its mean.
    Geometric {
        mean: f64,
    },
    /// Linear-fractional law with mean one and second factorial moment `2b`:
    /// `1 - h(s) = (1 - s) / (1 + b (1 - s))`.
    LinearFractional {
        b: f64,
    },
}

impl Univariate {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Univariate::Deterministic { .. } => true,
            Univariate::Bernoulli { p } => (0.0..=1.0).contains(&p),
            Univariate::Poisson { lambda } => lambda.is_finite() && lambda >= 0.0,
            Univariate::Geometric { mean } => mean.is_finite() && mean >= 0.0,
            Univariate::LinearFractional { b } => b.is_finite() && b > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw(format!("bad parameter in {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Univariate::Deterministic { k } => k as f64,
            Univariate::Bernoulli { p } => p,
            Univariate::Poisson { lambda } => lambda,
            Univariate::Geometric { mean } => mean,
            Univariate::LinearFractional { .. } => 1.0,
        }
    }

    /// `E[ξ(ξ - 1)]`.
    pub fn second_factorial(&self) -> f64 {
        match *self {
            Univariate::Deterministic { k } => k as f64 * (k as f64 - 1.0).max(0.0),
            Univariate::Bernoulli { .. } => 0.0,
            Univariate::Poisson { lambda } => lambda * lambda,
            Univariate::Geometric { mean } => 2.0 * mean * mean,
            Univariate::LinearFractional { b } => 2.0 * b,
        }
    }

    /// `1 - h(1 - q)` for `q ∈ [0, 1]`, in closed form.
    #[inline]
    pub fn deficiency(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 0.0;
        }
        match *self {
            Univariate::Deterministic { k } => {
                if k == 0 {
                    0.0
                } else {
                    -(k as f64 * (-q).ln_1p()).exp_m1()
                }
            }
            Univariate::Bernoulli { p } => p * q,
            Univariate::Poisson { lambda } => -(-lambda * q).exp_m1(),
            Univariate::Geometric { mean } => mean * q / (1.0 + mean * q),
            Univariate::LinearFractional { b } => q / (1.0 + b * q),
        }
    }

    /// `log h(1 - q)` for `q ∈ [0, 1]`, in closed form.
    #[inline]
    pub fn log_pgf_complement(&self, q: f64) -> f64 {
        if q == 0.0 {
            return 0.0;
        }
        match *self {
            Univariate::Deterministic { k } => {
                if k == 0 {
                    0.0
                } else {
                    k as f64 * (-q).ln_1p()
                }
            }
            Univariate::Bernoulli { p } => (-p * q).ln_1p(),
            Univariate::Poisson { lambda } => -lambda * q,
            Univariate::Geometric { mean } => -(mean * q).ln_1p(),
            Univariate::LinearFractional { b } => (-q / (1.0 + b * q)).ln_1p(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample_sum(rng, 1)
    }

    /// Exact draw of the sum of `count` independent copies.
    pub fn sample_sum<R: Rng + ?Sized>(&self, rng: &mut R, count: u64) -> u64 {
        if count == 0 {
            return 0;
        }
        match *self {
            Univariate::Deterministic { k } => k as u64 * count,
            Univariate::Bernoulli { p } => binomial(rng, count, p),
            Univariate::Poisson { lambda } => poisson(rng, lambda * count as f64),
            // Sum of geometrics is negative binomial: a gamma-mixed Poisson.
            Univariate::Geometric { mean } => gamma_poisson(rng, count as f64, mean),
            Univariate::LinearFractional { b } => {
                // A parent has children with probability 1/(1+b); given that,
                // the count is 1 + Geometric with mean b.
                let nonzero = binomial(rng, count, 1.0 / (1.0 + b));
                if nonzero == 0 {
                    0
                } else {
                    nonzero + gamma_poisson(rng, nonzero as f64, b)
                }
            }
        }
    }
}

#[inline]
fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

#[inline]
pub(crate) fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    assert!(
        lambda < MAX_POISSON_RATE,
        "Poisson rate {lambda:e} exceeds sampler range; lower the population cap"
    );
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

/// Negative binomial via its gamma–Poisson mixture representation.
#[inline]
fn gamma_poisson<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> u64 {
    if scale <= 0.0 {
        return 0;
    }
    let rate = Gamma::new(shape, scale).expect("valid gamma").sample(rng);
    poisson(rng, rate)
}

/// One row of a table law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub counts: Vec<u32>,
    pub p: f64,
}

/// A finite-support law given by its probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableLaw {
    arity: usize,
    entries: Vec<TableEntry>,
}

impl TableLaw {
    pub fn new(arity: usize, entries: Vec<TableEntry>) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidLaw("arity must be positive".into()));
        }
        if entries.is_empty() {
            return Err(Error::InvalidLaw("empty table".into()));
        }
        let mut total = 0.0;
        for (idx, e) in entries.iter().enumerate() {
            if e.counts.len() != arity {
                return Err(Error::InvalidLaw(format!(
                    "entry {idx} has {} counts, arity is {arity}",
                    e.counts.len()
                )));
            }
            if !(e.p.is_finite() && e.p >= 0.0) {
                return Err(Error::InvalidLaw(format!(
                    "entry {idx} has probability {}",
                    e.p
                )));
            }
            if entries[..idx].iter().any(|o| o.counts == e.counts) {
                return Err(Error::InvalidLaw(format!(
                    "duplicate counts {:?}",
                    e.counts
                )));
            }
            total += e.p;
        }
        if (total - 1.0).abs() > TABLE_SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
        }
        Ok(Self { arity, entries })
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }
}

/// Joint law of the child-count vector of one parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawSpec", into = "LawSpec")]
pub enum OffspringLaw {
    Table(TableLaw),
    Product(Vec<Univariate>),
}

/// Serialized form of [`OffspringLaw`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Table {
        arity: usize,
        entries: Vec<TableEntry>,
    },
    Product {
        components: Vec<Univariate>,
    },
}

impl TryFrom<LawSpec> for OffspringLaw {
    type Error = Error;
    fn try_from(spec: LawSpec) -> Result<Self> {
        match spec {
            LawSpec::Table { arity, entries } => {
                Ok(OffspringLaw::Table(TableLaw::new(arity, entries)?))
            }
            LawSpec::Product { components } => OffspringLaw::product(components),
        }
    }
}

impl From<OffspringLaw> for LawSpec {
    fn from(law: OffspringLaw) -> Self {
        match law {
            OffspringLaw::Table(t) => LawSpec::Table {
                arity: t.arity,
                entries: t.entries,
            },
            OffspringLaw::Product(components) => LawSpec::Product { components },
        }
    }
}

impl OffspringLaw {
    pub fn product(components: Vec<Univariate>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidLaw(
                "product law needs at least one component".into(),
            ));
        }
        for c in &components {
            c.validate()?;
        }
        Ok(OffspringLaw::Product(components))
    }

    pub fn table(arity: usize, entries: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .map(|(counts, p)| TableEntry { counts, p })
            .collect();
        Ok(OffspringLaw::Table(TableLaw::new(arity, entries)?))
    }

    /// Single-type shorthand.
    pub fn univariate(component: Univariate) -> Result<Self> {
        Self::product(vec![component])
    }

    pub fn arity(&self) -> usize {
        match self {
            OffspringLaw::Table(t) => t.arity,
            OffspringLaw::Product(c) => c.len(),
        }
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.arity() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: self.arity(),
                got: len,
            })
        }
    }

    /// `h(s) = E[∏ s_k^{ξ_k}]`.
    pub fn pgf(&self, s: &[f64]) -> Result<f64> {
        self.check_dim(s.len())?;
        let q: Vec<f64> = s.iter().map(|&v| 1.0 - v).collect();
        Ok(1.0 - self.deficiency_unchecked(&q))
    }

    /// `1 - h(1 - q)`, with dimension checking.
    pub fn deficiency(&self, q: &[f64]) -> Result<f64> {
        self.check_dim(q.len())?;
        Ok(self.deficiency_unchecked(q))
    }

    /// `1 - h(1 - q)` without dimension checking; `q.len()` must equal the
    /// arity.
    ///
    /// Every term is assembled from `log1p`/`expm1` so that relative accuracy
    /// is kept when all `q` are tiny. Table laws are written as
    /// `Σ p_k (1 - ∏ (1 - q_j)^{k_j})`, a sum of non-negative terms, so
    /// there is no cancellation either.
    #[inline]
    pub fn deficiency_unchecked(&self, q: &[f64]) -> f64 {
        match self {
            OffspringLaw::Product(components) => {
                let mut log_h = 0.0;
                for (c, &qj) in components.iter().zip(q) {
                    log_h += c.log_pgf_complement(qj);
                }
                -log_h.exp_m1()
            }
            OffspringLaw::Table(t) => {
                let mut lq = [0.0f64; 16];
                let mut lq_vec;
                let lq: &mut [f64] = if q.len() <= lq.len() {
                    &mut lq[..q.len()]
                } else {
                    lq_vec = vec![0.0; q.len()];
                    &mut lq_vec
                };
                for (l, &qj) in lq.iter_mut().zip(q) {
                    *l = (-qj).ln_1p();
                }
                let mut total = 0.0;
                for e in &t.entries {
                    let mut acc = 0.0;
                    for (&k, &l) in e.counts.iter().zip(lq.iter()) {
                        if k != 0 {
                            acc += k as f64 * l;
                        }
                    }
                    if acc != 0.0 {
                        total += e.p * -acc.exp_m1();
                    }
                }
                total
            }
        }
    }

    /// Exact mean vector.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            OffspringLaw::Product(c) => c.iter().map(Univariate::mean).collect(),
            OffspringLaw::Table(t) => {
                let mut m = vec![0.0; t.arity];
                for e in &t.entries {
                    for (mj, &k) in m.iter_mut().zip(&e.counts) {
                        *mj += e.p * k as f64;
                    }
                }
                m
            }
        }
    }

    /// Exact second factorial moment matrix `E[ξ_k ξ_l - δ_kl ξ_l]`.
    pub fn second_factorial(&self) -> Result<SquareMatrix> {
        let n = self.arity();
        let mut b = SquareMatrix::zeros(n);
        match self {
            OffspringLaw::Product(c) => {
                for k in 0..n {
                    for l in 0..n {
                        b[(k, l)] = if k == l {
                            c[k].second_factorial()
                        } else {
                            c[k].mean() * c[l].mean()
                        };
                    }
                }
            }
            OffspringLaw::Table(t) => {
                for e in &t.entries {
                    for k in 0..n {
                        for l in 0..n {
                            let kk = e.counts[k] as f64;
                            let ll = e.counts[l] as f64;
                            let term = if k == l { kk * (kk - 1.0) } else { kk * ll };
                            b[(k, l)] += e.p * term;
                        }
                    }
                }
            }
        }
        for k in 0..n {
            for l in 0..n {
                if !b[(k, l)].is_finite() {
                    return Err(Error::MomentUndefined(format!("{self:?}")));
                }
            }
        }
        Ok(b)
    }

    /// `(mean vector, second factorial moment matrix)`.
    pub fn moments(&self) -> Result<(Vec<f64>, SquareMatrix)> {
        Ok((self.mean(), self.second_factorial()?))
    }

    /// One exact draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u64> {
        let mut out = vec![0; self.arity()];
        self.sample_sum_into(rng, 1, &mut out);
        out
    }

    /// Exact draw of the summed child counts of `count` i.i.d. parents,
    /// written into `out` (overwritten, length = arity).
    pub fn sample_sum_into<R: Rng + ?Sized>(&self, rng: &mut R, count: u64, out: &mut [u64]) {
        debug_assert_eq!(out.len(), self.arity());
        out.iter_mut().for_each(|v| *v = 0);
        if count == 0 {
            return;
        }
        match self {
            OffspringLaw::Product(c) => {
                for (o, comp) in out.iter_mut().zip(c) {
                    *o = comp.sample_sum(rng, count);
                }
            }
            OffspringLaw::Table(t) => {
                // Multinomial allocation of parents to table rows via
                // sequential conditional binomials.
                let mut remaining = count;
                let mut mass_left = 1.0;
                let last = t.entries.len() - 1;
                for (idx, e) in t.entries.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let n_here = if idx == last {
                        remaining
                    } else {
                        let p = if mass_left > 0.0 {
                            (e.p / mass_left).min(1.0)
                        } else {
                            1.0
                        };
                        binomial(rng, remaining, p)
                    };
                    mass_left -= e.p;
                    remaining -= n_here;
                    if n_here > 0 {
                        for (o, &k) in out.iter_mut().zip(&e.counts) {
                            *o += k as u64 * n_here;
                        }
                    }
                }
            }
        }
    }

    /// Largest component mean; used to bound sampler rates.
    pub(crate) fn max_mean(&self) -> f64 {
        self.mean().into_iter().fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lf(b: f64) -> OffspringLaw {
        OffspringLaw::univariate(Univariate::LinearFractional { b }).unwrap()
    }

    #[test]
    fn moments_of_identity_law() {
        let law = OffspringLaw::univariate(Univariate::Deterministic { k: 1 }).unwrap();
        let (m, b) = law.moments().unwrap();
        assert_eq!(m, vec![1.0]);
        assert_eq!(b[(0, 0)], 0.0);
    }

    #[test]
    fn moments_of_poisson_and_lf() {
        let p = OffspringLaw::univariate(Univariate::Poisson { lambda: 1.0 }).unwrap();
        let (m, b) = p.moments().unwrap();
        assert_eq!((m[0], b[(0, 0)]), (1.0, 1.0));
        let (m, b) = lf(1.0).moments().unwrap();
        assert_eq!((m[0], b[(0, 0)]), (1.0, 2.0));
    }

    #[test]
    fn pgf_examples() {
        let id = OffspringLaw::univariate(Univariate::Deterministic { k: 1 }).unwrap();
        assert!((id.pgf(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        let p = OffspringLaw::univariate(Univariate::Poisson { lambda: 1.0 }).unwrap();
        assert!((p.pgf(&[0.0]).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        let prod = OffspringLaw::product(vec![
            Univariate::LinearFractional { b: 1.0 },
            Univariate::Poisson { lambda: 0.7 },
        ])
        .unwrap();
        assert!((prod.pgf(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            prod.pgf(&[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn deficiency_is_relatively_accurate_for_tiny_q() {
        let q = 1e-8;
        let d = lf(1.0).deficiency(&[q]).unwrap();
        let exact = q / (1.0 + q);
        assert!(((d - exact) / exact).abs() < 1e-12);
        let p = OffspringLaw::univariate(Univariate::Poisson { lambda: 1.0 }).unwrap();
        let d = p.deficiency(&[0.5]).unwrap();
        assert!((d - 0.393_469_340_287_366_6).abs() < 1e-15);
        assert_eq!(p.deficiency(&[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn table_validation() {
        assert!(OffspringLaw::table(1, [(vec![0], 0.5), (vec![2], 0.4)]).is_err());
        assert!(OffspringLaw::table(1, [(vec![0], 0.5), (vec![0], 0.5)]).is_err());
        assert!(OffspringLaw::table(2, [(vec![0], 1.0)]).is_err());
        assert!(OffspringLaw::table(1, [(vec![0], -0.5), (vec![2], 1.5)]).is_err());
        assert!(OffspringLaw::table(1, [(vec![0], 0.5), (vec![2], 0.5)]).is_ok());
    }

    #[test]
    fn deterministic_sampling() {
        let law = OffspringLaw::univariate(Univariate::Deterministic { k: 3 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(law.sample(&mut rng), vec![3]);
        }
    }

    #[test]
    fn serde_roundtrip_and_unknown_fields() {
        let law = OffspringLaw::product(vec![
            Univariate::LinearFractional { b: 1.0 },
            Univariate::Poisson { lambda: 0.7 },
        ])
        .unwrap();
        let json = serde_json::to_string(&law).unwrap();
        let back: OffspringLaw = serde_json::from_str(&json).unwrap();
        assert_eq!(back, law);
        let bad = r#"{"kind":"product","components":[{"kind":"poisson","lamda":1.0}]}"#;
        assert!(serde_json::from_str::<OffspringLaw>(bad).is_err());
        let bad_sum = r#"{"kind":"table","arity":1,"entries":[{"counts":[0],"p":0.3}]}"#;
        assert!(serde_json::from_str::<OffspringLaw>(bad_sum).is_err());
    }
}
