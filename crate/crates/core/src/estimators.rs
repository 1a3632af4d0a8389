//! Monte Carlo estimators for the random-environment process.
//!
//! The hybrid estimators simulate only the type-0 lineage and integrate out
//! everything the immigrants do with the exact constant-environment
//! generating functions. Given the type-0 path,
//!
//! `E[s^{Z_n} | X, Y] = exp(Σ_{k=1}^{n} Σ_i Y_ki log H_{n-k}^{(i)}(s))`,
//!
//! so averaging `1 - exp(R)` over type-0 paths is unbiased for
//! `E[1 - s^{Z_n}]` at every `n`.
//!
//! Two exact shortcuts keep the cost of a replicate bounded:
//!
//! * once `R ≤ -40` the value `1 - e^R` is exactly `1.0` in `f64`, so the
//!   path is not followed further;
//! * once the type-0 count `x` exceeds the population cap at generation `k`,
//!   the environment for generations `k+1..=n` is drawn and the value is
//!   completed as `1 - exp(R_k + x log(1 - d_k))`, where `d_k` is the
//!   deficiency of one type-0 particle given that environment, obtained by a
//!   backward recursion. This is the conditional expectation given the path
//!   up to `k`, so it introduces no bias.

use serde::Serialize;

use crate::env_sim::{simulate_full, FunctionalRecord, Type0Stepper};
use crate::error::{Error, Result};
use crate::gf::{deficiency_at, LogHTable};
use crate::model::RandomEnvModel;
use crate::parallel::run_replicates;
use crate::rng::{StreamFactory, SUBSTREAM_COMPLETION, SUBSTREAM_PATH};

/// `1 - e^R` is exactly one in `f64` for `R` at or below this.
pub const DETERMINED_LOG: f64 = -40.0;

/// A Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    /// Replicates simulated.
    pub reps: u64,
    /// Fraction of replicates excluded from the estimate because the
    /// population cap was reached before their value was determined.
    pub capped_fraction: f64,
}

/// Settings shared by all Monte Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub reps: u64,
    pub seed: u64,
    pub workers: usize,
    pub pop_cap: u64,
}

impl McOptions {
    pub fn new(reps: u64, seed: u64) -> Self {
        Self {
            reps,
            seed,
            workers: 1,
            pop_cap: crate::env_sim::DEFAULT_POP_CAP,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn pop_cap(mut self, pop_cap: u64) -> Self {
        self.pop_cap = pop_cap;
        self
    }

    fn check(&self, model: &RandomEnvModel) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::OutOfRange("reps must be positive".into()));
        }
        crate::env_sim::check_pop_cap(model, self.pop_cap)
    }
}

/// Running means and co-moments of value vectors (Welford updates,
/// pairwise merging).
#[derive(Debug, Clone)]
pub struct CovAccumulator {
    k: usize,
    count: u64,
    mean: Vec<f64>,
    /// Upper triangle of `Σ (v_i - mean_i)(v_j - mean_j)`.
    comoment: Vec<f64>,
    delta: Vec<f64>,
}

impl CovAccumulator {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            count: 0,
            mean: vec![0.0; k],
            comoment: vec![0.0; k * k],
            delta: vec![0.0; k],
        }
    }

    pub fn add(&mut self, v: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..self.k {
            self.delta[i] = v[i] - self.mean[i];
            self.mean[i] += self.delta[i] / n;
        }
        for i in 0..self.k {
            if self.delta[i] == 0.0 {
                continue;
            }
            for j in i..self.k {
                self.comoment[i * self.k + j] += self.delta[i] * (v[j] - self.mean[j]);
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.k {
            self.delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..self.k {
            for j in i..self.k {
                let idx = i * self.k + j;
                self.comoment[idx] +=
                    other.comoment[idx] + self.delta[i] * self.delta[j] * na * nb / n;
            }
        }
        for i in 0..self.k {
            self.mean[i] += self.delta[i] * nb / n;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self, i: usize) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.mean[i]
    }

    /// Covariance of the sample means of components `i` and `j`.
    pub fn cov_of_means(&self, i: usize, j: usize) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return f64::NAN;
        }
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.comoment[a * self.k + b] / (n - 1.0) / n
    }

    pub fn std_error(&self, i: usize) -> f64 {
        self.cov_of_means(i, i).max(0.0).sqrt()
    }
}

/// One quantity `E[1 - s_0^{X_n} s^{Z_n}]` estimated by the hybrid scheme,
/// with `s` given in deficiency form `q0 = 1 - s`, and `s_0 = 0` if
/// `type0` is set (otherwise `s_0 = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub n: u64,
    pub q0: Vec<f64>,
    pub type0: bool,
}

struct Target {
    n: u64,
    table: LogHTable,
    type0: bool,
}

/// Result of a batch of hybrid targets evaluated on common paths.
#[derive(Debug, Clone)]
pub struct HybridBatch {
    pub acc: CovAccumulator,
    pub reps: u64,
    /// Replicates whose path reached the population cap and were completed.
    pub completed: u64,
}

impl HybridBatch {
    pub fn estimate(&self, i: usize) -> Estimate {
        Estimate {
            value: self.acc.mean(i),
            std_error: self.acc.std_error(i),
            reps: self.reps,
            capped_fraction: 0.0,
        }
    }

    pub fn completed_fraction(&self) -> f64 {
        self.completed as f64 / self.reps as f64
    }
}

struct Scratch {
    r: Vec<f64>,
    open: Vec<bool>,
    env: Vec<u32>,
    input: Vec<f64>,
}

/// Per-replicate values of every target; returns whether completion was
/// needed.
fn evaluate_replicate(
    model: &RandomEnvModel,
    targets: &[Target],
    pop_cap: u64,
    streams: &StreamFactory,
    replicate: u64,
    out: &mut [f64],
    sc: &mut Scratch,
) -> bool {
    let nt = model.n_types();
    let mut open = 0usize;
    for (idx, t) in targets.iter().enumerate() {
        sc.r[idx] = 0.0;
        if t.n == 0 {
            out[idx] = if t.type0 { 1.0 } else { 0.0 };
            sc.open[idx] = false;
        } else {
            sc.open[idx] = true;
            open += 1;
        }
    }
    if open == 0 {
        return false;
    }
    let mut rng = streams.stream(replicate, SUBSTREAM_PATH);
    let mut st = Type0Stepper::new(model, pop_cap);
    while open > 0 {
        st.step(&mut rng);
        let g = st.generation();
        let y = st.y();
        let x = st.x();
        for (idx, t) in targets.iter().enumerate() {
            if !sc.open[idx] {
                continue;
            }
            let row = t.table.row(t.n - g);
            let mut acc = sc.r[idx];
            for (&yi, &lh) in y.iter().zip(row) {
                if yi != 0 {
                    acc += yi as f64 * lh;
                }
            }
            sc.r[idx] = acc;
            if acc <= DETERMINED_LOG {
                out[idx] = 1.0;
            } else if g == t.n {
                out[idx] = if t.type0 && x > 0 { 1.0 } else { -acc.exp_m1() };
            } else if x == 0 {
                out[idx] = -acc.exp_m1();
            } else {
                continue;
            }
            sc.open[idx] = false;
            open -= 1;
        }
        if open > 0 && st.capped() {
            complete(model, targets, streams, replicate, g, x, out, sc, nt);
            return true;
        }
    }
    false
}

#[allow(clippy::too_many_arguments)]
fn complete(
    model: &RandomEnvModel,
    targets: &[Target],
    streams: &StreamFactory,
    replicate: u64,
    k: u64,
    x: u64,
    out: &mut [f64],
    sc: &mut Scratch,
    nt: usize,
) {
    let n_max = targets
        .iter()
        .zip(&sc.open)
        .filter(|(_, &o)| o)
        .map(|(t, _)| t.n)
        .max()
        .unwrap_or(k);
    let mut crng = streams.stream(replicate, SUBSTREAM_COMPLETION);
    // env[j] is the state index for generation k + 1 + j.
    sc.env.clear();
    for _ in k..n_max {
        sc.env.push(model.sample_state_index(&mut crng) as u32);
    }
    sc.input.resize(nt + 1, 0.0);
    for (idx, t) in targets.iter().enumerate() {
        if !sc.open[idx] {
            continue;
        }
        let mut d = if t.type0 { 1.0 } else { 0.0 };
        for g in (k..t.n).rev() {
            sc.input[0] = d;
            sc.input[1..].copy_from_slice(t.table.q_row(t.n - g - 1));
            let law = model.state(sc.env[(g - k) as usize] as usize).law();
            d = law.deficiency_unchecked(&sc.input);
        }
        let log_rest = if d == 0.0 {
            0.0
        } else {
            x as f64 * (-d).ln_1p()
        };
        out[idx] = -(sc.r[idx] + log_rest).exp_m1();
        sc.open[idx] = false;
    }
}

/// Evaluates several hybrid targets on common type-0 paths.
pub fn hybrid_batch(
    model: &RandomEnvModel,
    specs: &[TargetSpec],
    opts: &McOptions,
) -> Result<HybridBatch> {
    opts.check(model)?;
    let cst = model.constant();
    let targets = specs
        .iter()
        .map(|s| {
            Ok(Target {
                n: s.n,
                table: LogHTable::from_deficiency(cst, s.n, &s.q0)?,
                type0: s.type0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = targets.len();
    let streams = StreamFactory::new(opts.seed);
    let (acc, completed) = run_replicates(
        opts.reps,
        opts.workers,
        || (CovAccumulator::new(k), 0u64),
        |state, r| {
            let mut sc = Scratch {
                r: vec![0.0; k],
                open: vec![false; k],
                env: Vec::new(),
                input: Vec::new(),
            };
            let mut out = vec![0.0; k];
            if evaluate_replicate(
                model,
                &targets,
                opts.pop_cap,
                &streams,
                r,
                &mut out,
                &mut sc,
            ) {
                state.1 += 1;
            }
            state.0.add(&out);
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 += b.1;
        },
    );
    Ok(HybridBatch {
        acc,
        reps: opts.reps,
        completed,
    })
}

fn check_s(model: &RandomEnvModel, s: &[f64]) -> Result<Vec<f64>> {
    if s.len() != model.n_types() {
        return Err(Error::DimensionMismatch {
            expected: model.n_types(),
            got: s.len(),
        });
    }
    if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange(format!("s component {v} outside [0, 1]")));
    }
    Ok(s.iter().map(|&v| 1.0 - v).collect())
}

/// Hybrid estimate of `E[1 - s_1^{Z_n1} ⋯ s_N^{Z_nN}]`.
pub fn hybrid_functional(
    model: &RandomEnvModel,
    n: u64,
    s: &[f64],
    opts: &McOptions,
) -> Result<Estimate> {
    let q0 = check_s(model, s)?;
    Ok(hybrid_batch(
        model,
        &[TargetSpec {
            n,
            q0,
            type0: false,
        }],
        opts,
    )?
    .estimate(0))
}

/// Hybrid estimate of `P(Z_n ≠ 0)`.
pub fn hybrid_nonextinction(model: &RandomEnvModel, n: u64, opts: &McOptions) -> Result<Estimate> {
    hybrid_functional(model, n, &vec![0.0; model.n_types()], opts)
}

/// Hybrid estimate of `P(Z_n1 > 0)`.
pub fn hybrid_first_type_survival(
    model: &RandomEnvModel,
    n: u64,
    opts: &McOptions,
) -> Result<Estimate> {
    let mut s = vec![1.0; model.n_types()];
    s[0] = 0.0;
    hybrid_functional(model, n, &s, opts)
}

/// Hybrid estimate of `P(Z_n ≠ 0 or X_n > 0)`.
pub fn hybrid_total_survival(model: &RandomEnvModel, n: u64, opts: &McOptions) -> Result<Estimate> {
    let spec = TargetSpec {
        n,
        q0: vec![1.0; model.n_types()],
        type0: true,
    };
    Ok(hybrid_batch(model, &[spec], opts)?.estimate(0))
}

/// `P(X_n > 0)` at each horizon, on common paths. Paths that reach the cap
/// are completed exactly from the quenched type-0 extinction probability.
pub fn type0_survival(
    model: &RandomEnvModel,
    horizons: &[u64],
    opts: &McOptions,
) -> Result<Vec<Estimate>> {
    let specs: Vec<TargetSpec> = horizons
        .iter()
        .map(|&n| TargetSpec {
            n,
            q0: vec![0.0; model.n_types()],
            type0: true,
        })
        .collect();
    let batch = hybrid_batch(model, &specs, opts)?;
    Ok((0..specs.len()).map(|i| batch.estimate(i)).collect())
}

/// Which conditioning event a conditional law refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `Z_n1 > 0`.
    FirstTypeAlive,
    /// `Z_n ≠ 0`.
    NonZero,
}

impl Condition {
    fn holds(self, z: &[u64]) -> bool {
        match self {
            Condition::FirstTypeAlive => z[0] > 0,
            Condition::NonZero => z.iter().any(|&v| v > 0),
        }
    }
}

/// Direct Monte Carlo estimate of `P(Z_n ≠ 0)` or `P(Z_n1 > 0)` from full
/// simulation. Capped replicates are excluded.
pub fn direct_nonextinction(
    model: &RandomEnvModel,
    n: u64,
    condition: Condition,
    opts: &McOptions,
) -> Result<Estimate> {
    opts.check(model)?;
    let streams = StreamFactory::new(opts.seed);
    let (hits, used) = run_replicates(
        opts.reps,
        opts.workers,
        || (0u64, 0u64),
        |a, r| {
            let mut rng = streams.stream(r, SUBSTREAM_PATH);
            let st = simulate_full(model, n, &mut rng, opts.pop_cap);
            if !st.capped {
                a.1 += 1;
                if condition.holds(&st.z) {
                    a.0 += 1;
                }
            }
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
        },
    );
    Ok(binomial_estimate(hits, used, opts.reps))
}

fn binomial_estimate(hits: u64, used: u64, reps: u64) -> Estimate {
    let p = if used == 0 {
        f64::NAN
    } else {
        hits as f64 / used as f64
    };
    let se = if used < 2 {
        f64::NAN
    } else {
        (p * (1.0 - p) / (used as f64 - 1.0)).sqrt()
    };
    Estimate {
        value: p,
        std_error: se,
        reps,
        capped_fraction: (reps - used) as f64 / reps as f64,
    }
}

/// One point of an estimated conditional limit law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfPoint {
    pub t: Vec<f64>,
    pub value: f64,
    pub std_error: f64,
}

/// Estimated conditional law at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YaglomResult {
    pub n: u64,
    pub condition: Condition,
    pub points: Vec<CdfPoint>,
    /// Estimate of the conditioning probability.
    pub conditioning: Estimate,
    pub completed_fraction: f64,
}

/// `1 - s_l = n^{-t_l}`, clamped to one.
pub fn tail_deficiency(n: u64, t: &[f64]) -> Vec<f64> {
    let ln = (n as f64).ln();
    t.iter().map(|&tl| (-tl * ln).exp().min(1.0)).collect()
}

/// Estimates `P(log Z_nl / log n ≤ t_l for all l | condition)` in the
/// Laplace-functional sense, with `s_l = 1 - n^{-t_l}`:
///
/// * under `Z_n ≠ 0`: `1 - E[1 - s^{Z_n}] / P(Z_n ≠ 0)`;
/// * under `Z_n1 > 0`: `(E[1 - s'^{Z_n}] - E[1 - s^{Z_n}]) / P(Z_n1 > 0)`
///   with `s' = (0, s_2, …, s_N)`.
///
/// All terms share the same type-0 paths. Standard errors use the delta
/// method.
pub fn conditional_yaglom_cdf(
    model: &RandomEnvModel,
    n: u64,
    t_grid: &[Vec<f64>],
    condition: Condition,
    opts: &McOptions,
) -> Result<YaglomResult> {
    let nt = model.n_types();
    if n < 2 {
        return Err(Error::OutOfRange("the conditional law needs n ≥ 2".into()));
    }
    for t in t_grid {
        if t.len() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                got: t.len(),
            });
        }
        if t.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::OutOfRange(format!(
                "t components must be positive, got {t:?}"
            )));
        }
    }
    let mut specs = Vec::new();
    let mut p_q = vec![1.0; nt];
    if condition == Condition::FirstTypeAlive {
        p_q[1..].iter_mut().for_each(|v| *v = 0.0);
    }
    specs.push(TargetSpec {
        n,
        q0: p_q,
        type0: false,
    });
    for t in t_grid {
        let q = tail_deficiency(n, t);
        if condition == Condition::FirstTypeAlive {
            let mut w = q.clone();
            w[0] = 1.0;
            specs.push(TargetSpec {
                n,
                q0: w,
                type0: false,
            });
        }
        specs.push(TargetSpec {
            n,
            q0: q,
            type0: false,
        });
    }
    let batch = hybrid_batch(model, &specs, opts)?;
    let acc = &batch.acc;
    let p = acc.mean(0);
    let p_se = acc.std_error(0);
    if !(p > 5.0 * p_se) {
        return Err(Error::UnreliableConditioning { value: p, se: p_se });
    }
    let per = if condition == Condition::FirstTypeAlive {
        2
    } else {
        1
    };
    let mut points = Vec::with_capacity(t_grid.len());
    for (j, t) in t_grid.iter().enumerate() {
        // Numerator a = Σ c_m mean_m; ratio r = a / P.
        let terms: Vec<(usize, f64)> = if per == 2 {
            vec![(1 + 2 * j, 1.0), (2 + 2 * j, -1.0)]
        } else {
            vec![(1 + j, 1.0)]
        };
        let a: f64 = terms.iter().map(|&(m, c)| c * acc.mean(m)).sum();
        let r = a / p;
        let mut var_a = 0.0;
        let mut cov_ap = 0.0;
        for &(m, c) in &terms {
            cov_ap += c * acc.cov_of_means(m, 0);
            for &(m2, c2) in &terms {
                var_a += c * c2 * acc.cov_of_means(m, m2);
            }
        }
        let var_r = (var_a - 2.0 * r * cov_ap + r * r * acc.cov_of_means(0, 0)) / (p * p);
        let value = if per == 2 { r } else { 1.0 - r };
        points.push(CdfPoint {
            t: t.clone(),
            value,
            std_error: var_r.max(0.0).sqrt(),
        });
    }
    Ok(YaglomResult {
        n,
        condition,
        points,
        conditioning: batch.estimate(0),
        completed_fraction: batch.completed_fraction(),
    })
}

/// Empirical `P(Z_nl ≤ n^{t_l} for all l | condition)` from full
/// simulation (non-strict inequality). Capped replicates are excluded.
pub fn yaglom_direct(
    model: &RandomEnvModel,
    n: u64,
    t_grid: &[Vec<f64>],
    condition: Condition,
    opts: &McOptions,
) -> Result<Vec<CdfPoint>> {
    opts.check(model)?;
    let k = t_grid.len();
    let bounds: Vec<Vec<f64>> = t_grid
        .iter()
        .map(|t| t.iter().map(|&tl| (n as f64).powf(tl)).collect())
        .collect();
    let streams = StreamFactory::new(opts.seed);
    let (hits, cond) = run_replicates(
        opts.reps,
        opts.workers,
        || (vec![0u64; k], 0u64),
        |a, r| {
            let mut rng = streams.stream(r, SUBSTREAM_PATH);
            let st = simulate_full(model, n, &mut rng, opts.pop_cap);
            if st.capped || !condition.holds(&st.z) {
                return;
            }
            a.1 += 1;
            for (h, b) in a.0.iter_mut().zip(&bounds) {
                if st.z.iter().zip(b).all(|(&z, &bl)| z as f64 <= bl) {
                    *h += 1;
                }
            }
        },
        |a, b| {
            a.1 += b.1;
            for (x, y) in a.0.iter_mut().zip(&b.0) {
                *x += y;
            }
        },
    );
    if cond == 0 {
        return Err(Error::UnreliableConditioning {
            value: 0.0,
            se: 0.0,
        });
    }
    Ok(t_grid
        .iter()
        .zip(hits)
        .map(|(t, h)| {
            let e = binomial_estimate(h, cond, cond);
            CdfPoint {
                t: t.clone(),
                value: e.value,
                std_error: e.std_error,
            }
        })
        .collect())
}

/// A path functional of the type-0 lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    /// Total type-0 progeny `S_T`.
    S,
    /// Maximal generation size `A_T`.
    A,
    /// Total number of immigrants `L_T`.
    L,
    /// Immigrants of type `j` (one-based), `L_Tj`.
    Lj(usize),
    /// Largest immigrant batch `B_T`.
    B,
    /// Largest immigrant batch of type `j` (one-based), `B_Tj`.
    Bj(usize),
}

impl Functional {
    pub fn value(self, rec: &FunctionalRecord) -> u128 {
        match self {
            Functional::S => rec.s,
            Functional::A => rec.a as u128,
            Functional::L => rec.l_total(),
            Functional::Lj(j) => rec.l[j - 1],
            Functional::B => rec.b_total as u128,
            Functional::Bj(j) => rec.b[j - 1] as u128,
        }
    }

    pub fn name(self) -> String {
        match self {
            Functional::S => "S".into(),
            Functional::A => "A".into(),
            Functional::L => "L".into(),
            Functional::Lj(j) => format!("L{j}"),
            Functional::B => "B".into(),
            Functional::Bj(j) => format!("B{j}"),
        }
    }

    pub fn parse(name: &str, n_types: usize) -> Result<Self> {
        let bad = || Error::Config(format!("unknown functional `{name}`"));
        let index = |rest: &str| -> Result<usize> {
            let j: usize = rest.parse().map_err(|_| bad())?;
            if j == 0 || j > n_types {
                return Err(bad());
            }
            Ok(j)
        };
        match name {
            "S" => Ok(Functional::S),
            "A" => Ok(Functional::A),
            "L" => Ok(Functional::L),
            "B" => Ok(Functional::B),
            _ if name.starts_with('L') => Ok(Functional::Lj(index(&name[1..])?)),
            _ if name.starts_with('B') => Ok(Functional::Bj(index(&name[1..])?)),
            _ => Err(bad()),
        }
    }
}

/// `1 - exp(-Σ L_i Q_n^{(i)}(0))` for one record, or `None` if the record
/// stopped before the value was determined.
pub fn corollary_f_value(rec: &FunctionalRecord, q_n: &[f64]) -> Option<f64> {
    let e: f64 = rec.l.iter().zip(q_n).map(|(&l, &q)| l as f64 * q).sum();
    if rec.extinct {
        Some(-(-e).exp_m1())
    } else if -e <= DETERMINED_LOG {
        Some(1.0)
    } else {
        None
    }
}

/// `1 - exp(-λ L_T)` for one record, or `None` if undetermined.
pub fn laplace_value(rec: &FunctionalRecord, lambda: f64) -> Option<f64> {
    let e = lambda * rec.l_total() as f64;
    if rec.extinct {
        Some(-(-e).exp_m1())
    } else if -e <= DETERMINED_LOG {
        Some(1.0)
    } else {
        None
    }
}

/// `F(n) = E[1 - exp(-Σ_i L_Ti Q_n^{(i)}(0))]` at each horizon, from a
/// batch of records. `q_n[h]` is `Q_{n_h}(0)`. Undetermined records are
/// excluded and counted in the capped fraction.
pub fn corollary_f(records: &[FunctionalRecord], q_n: &[Vec<f64>]) -> Vec<Estimate> {
    q_n.iter()
        .map(|q| {
            let mut acc = CovAccumulator::new(1);
            for rec in records {
                if let Some(v) = corollary_f_value(rec, q) {
                    acc.add(&[v]);
                }
            }
            let reps = records.len() as u64;
            Estimate {
                value: acc.mean(0),
                std_error: acc.std_error(0),
                reps,
                capped_fraction: (reps - acc.count()) as f64 / reps.max(1) as f64,
            }
        })
        .collect()
}

/// What to extract from a batch of type-0 lineages followed to extinction.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalBatchSpec {
    pub functionals: Vec<Functional>,
    /// Thresholds `x` for the tails `P(F > x)`.
    pub x_grid: Vec<f64>,
    /// Arguments of `E[1 - e^{-λ L_T}]`.
    pub lambdas: Vec<f64>,
    /// Horizons for `F(n)`.
    pub f_horizons: Vec<u64>,
    /// Safety limit on the length of one lineage.
    pub max_generations: u64,
    /// Keep every record (for trajectory dumps).
    pub keep_records: bool,
}

/// Tail, Laplace and `F(n)` estimates from one batch.
#[derive(Debug, Clone)]
pub struct FunctionalBatch {
    /// `tails[f][x]`.
    pub tails: Vec<Vec<Estimate>>,
    pub laplace: Vec<Estimate>,
    pub f: Vec<Estimate>,
    /// `Q_n(0)` used for each entry of `f`.
    pub q_n: Vec<Vec<f64>>,
    pub records: Vec<(u64, FunctionalRecord)>,
    pub reps: u64,
    /// Replicates excluded because they stopped undetermined.
    pub excluded: u64,
}

#[derive(Clone)]
struct FunctionalAcc {
    counts: Vec<u64>,
    values: CovAccumulator,
    used: u64,
    records: Vec<(u64, FunctionalRecord)>,
}

/// Follows type-0 lineages to extinction, stopping early once every
/// requested quantity is determined, and accumulates tails, Laplace
/// transforms and `F(n)` on the common batch.
pub fn functional_batch(
    model: &RandomEnvModel,
    spec: &FunctionalBatchSpec,
    opts: &McOptions,
) -> Result<FunctionalBatch> {
    opts.check(model)?;
    let nt = model.n_types();
    let mut horizons = spec.f_horizons.clone();
    horizons.sort_unstable();
    if horizons != spec.f_horizons {
        return Err(Error::OutOfRange("F(n) horizons must be sorted".into()));
    }
    let q_n = deficiency_at(model.constant(), &horizons, &vec![0.0; nt])?;
    let x_max = spec.x_grid.iter().copied().fold(0.0, f64::max);
    let lambda_min = spec.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let q_last = q_n.last().cloned();
    let determined = |rec: &FunctionalRecord| -> bool {
        if spec
            .functionals
            .iter()
            .any(|f| f.value(rec) as f64 <= x_max)
        {
            return false;
        }
        if !spec.lambdas.is_empty() && (lambda_min * rec.l_total() as f64) < -DETERMINED_LOG {
            return false;
        }
        if let Some(q) = &q_last {
            let e: f64 = rec.l.iter().zip(q).map(|(&l, &qi)| l as f64 * qi).sum();
            if e < -DETERMINED_LOG {
                return false;
            }
        }
        true
    };
    let n_f = spec.functionals.len();
    let n_x = spec.x_grid.len();
    let n_vals = spec.lambdas.len() + horizons.len();
    let streams = StreamFactory::new(opts.seed);
    let acc = run_replicates(
        opts.reps,
        opts.workers,
        || FunctionalAcc {
            counts: vec![0; n_f * n_x],
            values: CovAccumulator::new(n_vals),
            used: 0,
            records: Vec::new(),
        },
        |a, r| {
            let mut rng = streams.stream(r, SUBSTREAM_PATH);
            let mut st = Type0Stepper::new(model, opts.pop_cap);
            while st.active() && st.generation() < spec.max_generations && !determined(st.record())
            {
                st.step(&mut rng);
            }
            let rec = st.record();
            let usable = rec.extinct || determined(rec);
            if spec.keep_records {
                a.records.push((r, rec.clone()));
            }
            if !usable {
                return;
            }
            a.used += 1;
            for (fi, f) in spec.functionals.iter().enumerate() {
                let v = f.value(rec) as f64;
                for (xi, &x) in spec.x_grid.iter().enumerate() {
                    if v > x {
                        a.counts[fi * n_x + xi] += 1;
                    }
                }
            }
            let mut vals = Vec::with_capacity(n_vals);
            for &lambda in &spec.lambdas {
                vals.push(laplace_value(rec, lambda).expect("determined"));
            }
            for q in &q_n {
                vals.push(corollary_f_value(rec, q).expect("determined"));
            }
            a.values.add(&vals);
        },
        |a, b| {
            for (x, y) in a.counts.iter_mut().zip(&b.counts) {
                *x += y;
            }
            a.values.merge(&b.values);
            a.used += b.used;
            a.records.extend(b.records);
        },
    );
    let reps = opts.reps;
    let excluded = reps - acc.used;
    let capped_fraction = excluded as f64 / reps as f64;
    let tails = (0..n_f)
        .map(|fi| {
            (0..n_x)
                .map(|xi| {
                    let mut e = binomial_estimate(acc.counts[fi * n_x + xi], acc.used, reps);
                    e.capped_fraction = capped_fraction;
                    e
                })
                .collect()
        })
        .collect();
    let mk = |i: usize| Estimate {
        value: acc.values.mean(i),
        std_error: acc.values.std_error(i),
        reps,
        capped_fraction,
    };
    let n_l = spec.lambdas.len();
    Ok(FunctionalBatch {
        tails,
        laplace: (0..n_l).map(mk).collect(),
        f: (0..horizons.len()).map(|i| mk(n_l + i)).collect(),
        q_n,
        records: acc.records,
        reps,
        excluded,
    })
}
