//! Exact evaluation and iteration of constant-environment generating
//! functions, and the first and second moment recursions.
//!
//! Everything is done in deficiency space: the vector `q = 1 - H_n(s)` is
//! stored instead of `H_n(s)`, and one step of the iteration is
//! `q_i ← 1 - h_i(1 - q_i, …, 1 - q_N)`, evaluated by
//! [`OffspringLaw::deficiency_unchecked`].

use crate::error::{Error, Result};
use crate::law::OffspringLaw;
use crate::linalg::{SquareMatrix, Tensor3};
use crate::model::ConstantEnvModel;

fn check_unit_box(v: &[f64], what: &str) -> Result<()> {
    for (idx, &x) in v.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfRange(format!(
                "{what}[{idx}] = {x} is outside [0, 1]"
            )));
        }
    }
    Ok(())
}

/// `h(s)` for `s ∈ [0,1]^arity`.
pub fn pgf_eval(law: &OffspringLaw, s: &[f64]) -> Result<f64> {
    check_unit_box(s, "s")?;
    law.pgf(s)
}

/// `1 - h(1 - q)` for `q ∈ [0,1]^arity`.
pub fn deficiency_eval(law: &OffspringLaw, q: &[f64]) -> Result<f64> {
    check_unit_box(q, "q")?;
    law.deficiency(q)
}

/// `Q_n(s) = 1 - H_n(s)` together with its step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficiencyVector {
    pub q: Vec<f64>,
    pub n: u64,
}

impl DeficiencyVector {
    /// `Q_0(s) = 1 - s`.
    pub fn initial(model: &ConstantEnvModel, s: &[f64]) -> Result<Self> {
        if s.len() != model.n_types() {
            return Err(Error::DimensionMismatch {
                expected: model.n_types(),
                got: s.len(),
            });
        }
        check_unit_box(s, "s")?;
        Ok(Self {
            q: s.iter().map(|&v| 1.0 - v).collect(),
            n: 0,
        })
    }

    /// Starts from a deficiency vector `q = 1 - s` given directly, which
    /// keeps full precision when `s` is within rounding of one.
    pub fn from_deficiency(model: &ConstantEnvModel, q: &[f64]) -> Result<Self> {
        if q.len() != model.n_types() {
            return Err(Error::DimensionMismatch {
                expected: model.n_types(),
                got: q.len(),
            });
        }
        check_unit_box(q, "q")?;
        Ok(Self {
            q: q.to_vec(),
            n: 0,
        })
    }

    /// Advances `n` by one.
    ///
    /// Updating in ascending type order is safe in place: law `i` reads
    /// `q[i..]`, and `q[i]` itself is read before it is overwritten.
    #[inline]
    pub fn step(&mut self, model: &ConstantEnvModel) {
        for i in 0..self.q.len() {
            self.q[i] = model.law(i).deficiency_unchecked(&self.q[i..]);
        }
        self.n += 1;
    }

    pub fn h(&self) -> Vec<f64> {
        self.q.iter().map(|&q| 1.0 - q).collect()
    }
}

/// `Q_n(s)`, by `n` one-step compositions starting from `Q_0 = 1 - s`.
pub fn iterate_deficiency(model: &ConstantEnvModel, n: u64, s: &[f64]) -> Result<DeficiencyVector> {
    let mut d = DeficiencyVector::initial(model, s)?;
    for _ in 0..n {
        d.step(model);
    }
    Ok(d)
}

/// `Q_n(s)` evaluated at each of the sorted horizons in `ns`, in one sweep.
pub fn deficiency_at(model: &ConstantEnvModel, ns: &[u64], s: &[f64]) -> Result<Vec<Vec<f64>>> {
    if ns.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::OutOfRange("horizons must be sorted".into()));
    }
    let mut d = DeficiencyVector::initial(model, s)?;
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        while d.n < n {
            d.step(model);
        }
        out.push(d.q.clone());
    }
    Ok(out)
}

/// `log H_m^{(i)}(s) = log1p(-Q_m^{(i)}(s))` and `Q_m^{(i)}(s)` for
/// `m = 0..=n`. Log entries are `-inf` where `H = 0`.
#[derive(Debug, Clone)]
pub struct LogHTable {
    n_types: usize,
    log_h: Vec<f64>,
    q: Vec<f64>,
}

impl LogHTable {
    pub fn new(model: &ConstantEnvModel, n: u64, s: &[f64]) -> Result<Self> {
        Self::build(model, n, DeficiencyVector::initial(model, s)?)
    }

    /// Same as [`LogHTable::new`] with `s = 1 - q0`.
    pub fn from_deficiency(model: &ConstantEnvModel, n: u64, q0: &[f64]) -> Result<Self> {
        Self::build(model, n, DeficiencyVector::from_deficiency(model, q0)?)
    }

    fn build(model: &ConstantEnvModel, n: u64, mut d: DeficiencyVector) -> Result<Self> {
        let nt = model.n_types();
        let mut log_h = Vec::with_capacity((n as usize + 1) * nt);
        let mut q = Vec::with_capacity((n as usize + 1) * nt);
        loop {
            log_h.extend(d.q.iter().map(|&v| (-v).ln_1p()));
            q.extend_from_slice(&d.q);
            if d.n == n {
                break;
            }
            d.step(model);
        }
        Ok(Self {
            n_types: nt,
            log_h,
            q,
        })
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    pub fn horizon(&self) -> u64 {
        (self.q.len() / self.n_types) as u64 - 1
    }

    /// `log H_m(s)` as a slice of length `N`.
    #[inline]
    pub fn row(&self, m: u64) -> &[f64] {
        let m = m as usize;
        &self.log_h[m * self.n_types..(m + 1) * self.n_types]
    }

    /// `Q_m(s)` as a slice of length `N`.
    #[inline]
    pub fn q_row(&self, m: u64) -> &[f64] {
        let m = m as usize;
        &self.q[m * self.n_types..(m + 1) * self.n_types]
    }

    /// `Q_m^{(i)}(s)`.
    pub fn q(&self, m: u64, i: usize) -> f64 {
        self.q_row(m)[i]
    }
}

/// `M^n` by repeated multiplication.
pub fn mean_power(model: &ConstantEnvModel, n: u64) -> SquareMatrix {
    let m = model.mean_matrix();
    let mut p = SquareMatrix::identity(model.n_types());
    for _ in 0..n {
        p = p.matmul(m);
    }
    p
}

/// Mean and second factorial moment tables at a common horizon.
#[derive(Debug, Clone)]
pub struct MomentTables {
    /// `m_il(n)`.
    pub mean: SquareMatrix,
    /// `b_ikl(n)`.
    pub second: Tensor3,
    pub n: u64,
}

/// Moment tables at horizon `n`.
///
/// Uses `b(n+1)_ikl = Σ_j m_ij b(n)_jkl + Σ_{j,j'} b_ijj' m_jk(n) m_j'l(n)`
/// with `b(0) = 0`, advancing `M^n` in the same sweep.
pub fn moment_tables(model: &ConstantEnvModel, n: u64) -> MomentTables {
    let nt = model.n_types();
    let m1 = model.mean_matrix();
    let b1 = model.second_moments();
    let mut mean = SquareMatrix::identity(nt);
    let mut second = Tensor3::zeros(nt);
    let mut next = Tensor3::zeros(nt);
    for _ in 0..n {
        for i in 0..nt {
            for k in i..nt {
                for l in i..nt {
                    let mut acc = 0.0;
                    for j in i..nt {
                        acc += m1[(i, j)] * second[(j, k, l)];
                    }
                    for j in i..nt {
                        let mjk = mean[(j, k)];
                        if mjk == 0.0 {
                            continue;
                        }
                        for jp in i..nt {
                            acc += b1[(i, j, jp)] * mjk * mean[(jp, l)];
                        }
                    }
                    next[(i, k, l)] = acc;
                }
            }
        }
        std::mem::swap(&mut second, &mut next);
        mean = mean.matmul(m1);
    }
    MomentTables { mean, second, n }
}

/// `b_ikl(n)`.
pub fn second_moment_table(model: &ConstantEnvModel, n: u64) -> Tensor3 {
    moment_tables(model, n).second
}

/// Outcome of the two-sided bound `M_i - B_i ≤ Q_n^{(i)} ≤ M_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult {
    pub holds: bool,
    /// `Q - (M - B)` per start type.
    pub lower_margin: Vec<f64>,
    /// `M - Q` per start type.
    pub upper_margin: Vec<f64>,
    pub q: Vec<f64>,
}

/// Margins below this multiple of the upper bound are attributed to
/// rounding in `M` and `Q` rather than to a violation.
pub const SANDWICH_ROUNDING: f64 = 1e-13;

/// Checks `M_i(n;s) - B_i(n;s) ≤ Q_n^{(i)}(s) ≤ M_i(n;s)` for every start
/// type, where `M_i = Σ_l m_il(n)(1 - s_l)` and
/// `B_i = ½ Σ_kl b_ikl(n)(1 - s_k)(1 - s_l)`.
pub fn sandwich_check(model: &ConstantEnvModel, n: u64, s: &[f64]) -> Result<SandwichResult> {
    let tables = moment_tables(model, n);
    let q = iterate_deficiency(model, n, s)?.q;
    Ok(sandwich_from_tables(&tables, s, q))
}

pub(crate) fn sandwich_from_tables(
    tables: &MomentTables,
    s: &[f64],
    q: Vec<f64>,
) -> SandwichResult {
    let nt = s.len();
    let d: Vec<f64> = s.iter().map(|&v| 1.0 - v).collect();
    let mut lower_margin = Vec::with_capacity(nt);
    let mut upper_margin = Vec::with_capacity(nt);
    let mut holds = true;
    for i in 0..nt {
        let mut m = 0.0;
        let mut b = 0.0;
        for k in i..nt {
            m += tables.mean[(i, k)] * d[k];
            for l in i..nt {
                b += tables.second[(i, k, l)] * d[k] * d[l];
            }
        }
        b *= 0.5;
        let lo = q[i] - (m - b);
        let up = m - q[i];
        let slack = SANDWICH_ROUNDING * m;
        holds &= lo >= -slack && up >= -slack;
        lower_margin.push(lo);
        upper_margin.push(up);
    }
    SandwichResult {
        holds,
        lower_margin,
        upper_margin,
        q,
    }
}
