//! Verdicts on series: log-log slopes, `K/log x` plateaus, regime exponents
//! for two-type tail functionals, envelope checks and the closed-form limit
//! laws.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gf::DeficiencyVector;
use crate::model::ConstantEnvModel;

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub max_residual: f64,
}

fn check_positive(points: &[(f64, f64)]) -> Result<()> {
    for (idx, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0) {
            return Err(Error::NonPositive {
                index: idx,
                value: x,
            });
        }
        if !(y > 0.0) {
            return Err(Error::NonPositive {
                index: idx,
                value: y,
            });
        }
    }
    Ok(())
}

pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<SeriesFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientRange(format!(
            "a slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::OutOfRange("x must be strictly increasing".into()));
    }
    check_positive(points)?;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(SeriesFit {
        points: points.to_vec(),
        slope,
        intercept,
        max_residual,
    })
}

/// Plateau of `p(x) log x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    /// Trimmed mean of `p(x) log x`.
    pub k_hat: f64,
    /// `max / min` of `p(x) log x`.
    pub dispersion: f64,
}

/// Trimmed mean (drops the extremes when there are at least 5 values).
pub fn trimmed_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let core = if v.len() >= 5 {
        &v[1..v.len() - 1]
    } else {
        &v[..]
    };
    core.iter().sum::<f64>() / core.len() as f64
}

/// Estimates `K` in `p(x) ~ K / log x` from points spanning at least
/// three decades of `x`.
pub fn plateau_estimate(points: &[(f64, f64)]) -> Result<Plateau> {
    check_positive(points)?;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if points.is_empty() || (hi / lo).log10() < 3.0 - 1e-9 {
        return Err(Error::InsufficientRange(format!(
            "x spans {:.2} decades, at least 3 required",
            if points.is_empty() {
                0.0
            } else {
                (hi / lo).log10()
            }
        )));
    }
    if points.iter().any(|p| p.0 <= 1.0) {
        return Err(Error::OutOfRange("plateau grid needs x > 1".into()));
    }
    let v: Vec<f64> = points.iter().map(|&(x, p)| p * x.ln()).collect();
    let max = v.iter().copied().fold(0.0, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Plateau {
        k_hat: trimmed_mean(&v),
        dispersion: max / min,
    })
}

/// `max/min` of a positive series.
pub fn max_min_ratio(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

fn regime_constant_unchecked(t1: f64, t2: f64) -> Result<f64> {
    if t2 == 1.0 || t2 == 2.0 || (t2 >= 2.0 && t1 == 1.0) {
        return Err(Error::BoundaryRegime(format!("(t1, t2) = ({t1}, {t2})")));
    }
    Ok(if t2 < 1.0 {
        0.5
    } else if t2 < 2.0 {
        t2 / 2.0
    } else if t1 < 1.0 {
        1.0
    } else {
        1.0 + (t1 - 1.0).min(t2 - 2.0)
    })
}

/// Decay exponent `γ` of `Q_n^{(1,2)}(s)` with `1 - s_l = n^{-t_l}`, two
/// types:
///
/// | region | `γ` |
/// |---|---|
/// | `t2 < 1` | `1/2` |
/// | `1 < t2 < 2` | `t2/2` |
/// | `t1 < 1, t2 > 2` | `1` |
/// | `t1 > 1, t2 > 2` | `1 + min(t1 - 1, t2 - 2)` |
///
/// Inputs on the lines `t2 = 1`, `t2 = 2` and `t1 = 1, t2 ≥ 2` are
/// rejected.
pub fn regime_exponent(t1: f64, t2: f64) -> Result<f64> {
    if !(t1 > 0.0 && t2 > 0.0 && t1.is_finite() && t2.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "t must be positive, got ({t1}, {t2})"
        )));
    }
    regime_constant_unchecked(t1, t2)
}

/// `γ = min_{i ≤ l ≤ N} (t_l - l + i)` for start type `i` (one-based).
/// Only valid when `γ ≥ 1`; otherwise the two-sided statement does not
/// apply and an error is returned.
pub fn regime_exponent_n(i: usize, t: &[f64]) -> Result<f64> {
    if i == 0 || i > t.len() {
        return Err(Error::OutOfRange(format!(
            "type index {i} outside 1..={}",
            t.len()
        )));
    }
    let gamma = (i..=t.len())
        .map(|l| t[l - 1] - l as f64 + i as f64)
        .fold(f64::INFINITY, f64::min);
    if gamma < 1.0 {
        return Err(Error::ConditionViolated(format!(
            "min (t_l - l + i) = {gamma} < 1; only an upper bound holds"
        )));
    }
    Ok(gamma)
}

/// Result of comparing a series with `n^{-γ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub label: String,
    pub gamma: f64,
    /// `y_n n^γ` along the series.
    pub ratios: Vec<f64>,
    pub max_min_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Default threshold for [`envelope_check`].
pub const ENVELOPE_THRESHOLD: f64 = 10.0;

/// Passes when `max_n (y_n n^γ) / min_n (y_n n^γ) ≤ threshold`.
pub fn envelope_check(series: &[(f64, f64)], gamma: f64, threshold: f64) -> Result<RegimeVerdict> {
    check_positive(series)?;
    let ratios: Vec<f64> = series.iter().map(|&(n, y)| y * n.powf(gamma)).collect();
    let mm = max_min_ratio(&ratios);
    Ok(RegimeVerdict {
        label: format!("gamma={gamma}"),
        gamma,
        ratios,
        max_min_ratio: mm,
        threshold,
        pass: mm <= threshold,
    })
}

/// `G(t) = 1 - 1/(1 + max(0, min_l (t_l - l)))`.
pub fn limit_cdf_g(t: &[f64]) -> Result<f64> {
    if t.is_empty() || t.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::OutOfRange(format!(
            "t components must be positive, got {t:?}"
        )));
    }
    let m = t
        .iter()
        .enumerate()
        .map(|(idx, &v)| v - (idx + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    Ok(1.0 - 1.0 / (1.0 + m.max(0.0)))
}

/// The constant `C(t1, t2)` with `A = 1 - 1/(2C)`; it coincides with the
/// two-type regime exponent.
pub fn regime_constant(t1: f64, t2: f64) -> Result<f64> {
    if !(t1 >= 0.0 && t2 >= 0.0 && t1.is_finite() && t2.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "t must be non-negative, got ({t1}, {t2})"
        )));
    }
    regime_constant_unchecked(t1, t2)
}

/// Limit law `A(t1, t2)` under `Z_n ≠ 0`, two types:
///
/// | region | `A` |
/// |---|---|
/// | `t2 < 1` | `0` |
/// | `1 < t2 < 2` | `1 - 1/t2` |
/// | `t1 < 1, t2 > 2` | `1/2` |
/// | `t1 > 1, t2 > 2` | `1 - (1/2) / (1 + min(t1 - 1, t2 - 2))` |
pub fn limit_cdf_a(t1: f64, t2: f64) -> Result<f64> {
    Ok(1.0 - 1.0 / (2.0 * regime_constant(t1, t2)?))
}

/// Ratio series and verdict for the single-term approximation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleTermVerdict {
    pub r: usize,
    /// `(n, ratio)`.
    pub ratios: Vec<(u64, f64)>,
    pub pass: bool,
}

/// Compares `Q_n^{(1)}(0^{(r)}, s_{r+1}, …, s_N)`, with
/// `1 - s_l = n^{-t_l}`, to `Q_n^{(1)}(0^{(r)}, 1, …, 1)`, the probability
/// that some type `≤ r` is present at `n`.
///
/// `tail` holds `t_{r+1}, …, t_N`. Requires
/// `min_{r<l≤N} (t_l - l + 1) > 2^{-(r-1)}`. Passes when the final ratio
/// lies in `[0.8, 1.25]` and `|ratio - 1|` never increases along the grid.
pub fn lemma_singleterm_check(
    model: &ConstantEnvModel,
    r: usize,
    tail: &[f64],
    n_grid: &[u64],
) -> Result<SingleTermVerdict> {
    let nt = model.n_types();
    if r == 0 || r > nt {
        return Err(Error::OutOfRange(format!("r = {r} outside 1..={nt}")));
    }
    if tail.len() != nt - r {
        return Err(Error::DimensionMismatch {
            expected: nt - r,
            got: tail.len(),
        });
    }
    let bound = 2f64.powi(-(r as i32 - 1));
    let worst = tail
        .iter()
        .enumerate()
        .map(|(k, &t)| t - (r + 1 + k) as f64 + 1.0)
        .fold(f64::INFINITY, f64::min);
    if worst <= bound {
        return Err(Error::ConditionViolated(format!(
            "min (t_l - l + 1) = {worst} must exceed 2^-(r-1) = {bound}"
        )));
    }
    let run = |q0: Vec<f64>, n: u64| -> Result<f64> {
        let mut d = DeficiencyVector::from_deficiency(model, &q0)?;
        for _ in 0..n {
            d.step(model);
        }
        Ok(d.q[0])
    };
    let mut ratios = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut q_den = vec![0.0; nt];
        q_den[..r].fill(1.0);
        let mut q_num = q_den.clone();
        for (k, &t) in tail.iter().enumerate() {
            q_num[r + k] = (n as f64).powf(-t);
        }
        let den = run(q_den, n)?;
        let num = if tail.is_empty() { den } else { run(q_num, n)? };
        ratios.push((n, num / den));
    }
    let dist: Vec<f64> = ratios.iter().map(|&(_, v)| (v - 1.0).abs()).collect();
    let monotone = dist.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let last = ratios.last().map(|p| p.1).unwrap_or(1.0);
    Ok(SingleTermVerdict {
        r,
        ratios,
        pass: monotone && (0.8..=1.25).contains(&last),
    })
}
