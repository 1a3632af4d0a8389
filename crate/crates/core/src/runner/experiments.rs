//! Dispatch of one configured experiment to the library.

use rand::Rng;

use crate::analysis::{
    envelope_check, limit_cdf_a, limit_cdf_g, max_min_ratio, plateau_estimate, regime_exponent,
    regime_exponent_n, ENVELOPE_THRESHOLD,
};
use crate::env_sim::{simulate_type0, write_trajectory_csv, DEFAULT_POP_CAP};
use crate::error::{Error, Result};
use crate::estimators::{
    conditional_yaglom_cdf, direct_nonextinction, functional_batch, hybrid_batch, type0_survival,
    Condition, Functional, FunctionalBatchSpec, McOptions, TargetSpec,
};
use crate::gf::{deficiency_at, moment_tables, sandwich_from_tables, DeficiencyVector};
use crate::model::{ConstantEnvModel, Model, RandomEnvModel};
use crate::parallel::run_replicates;
use crate::rng::{StreamFactory, SUBSTREAM_PATH};
use crate::runner::config::{ExperimentKind, LoadedConfig, Profile};
use crate::runner::results::{diag, format_number, ResultRow, ResultTable};
use crate::runner::verify;

/// Capped fraction above which a run is reported as degraded.
pub const DEGRADED_CAPPED_FRACTION: f64 = 1e-3;

/// Runs the configured experiment.
pub fn run_experiment(loaded: &LoadedConfig) -> Result<ResultTable> {
    let cfg = &loaded.config;
    if cfg.kind == ExperimentKind::VerifyAll {
        let profile = cfg.profile.unwrap_or(Profile::Full);
        return Ok(verify::run_all(profile, cfg.seed, cfg.workers()).table());
    }
    let model = loaded
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("a model is required".into()))?;
    let opts = || -> Result<McOptions> {
        let reps = cfg
            .reps
            .ok_or_else(|| Error::Config("reps required".into()))?;
        Ok(McOptions::new(reps, cfg.seed)
            .workers(cfg.workers())
            .pop_cap(cfg.pop_cap.unwrap_or(DEFAULT_POP_CAP)))
    };
    let id = model.id.as_str();
    match cfg.kind {
        ExperimentKind::ExactSurvival => exact_survival(&model.constant, id, &cfg.horizons),
        ExperimentKind::Moments => moments(&model.constant, id, &cfg.horizons),
        ExperimentKind::Sandwich => sandwich(
            &model.constant,
            id,
            &cfg.horizons,
            cfg.grid_points.unwrap_or(100),
        ),
        ExperimentKind::Regimes => regimes(
            &model.constant,
            id,
            &cfg.horizons,
            &cfg.t_grid,
            cfg.threshold.unwrap_or(ENVELOPE_THRESHOLD),
        ),
        ExperimentKind::Simulate => {
            simulate(model, &cfg.horizons, &opts()?, cfg.trajectories.as_deref())
        }
        ExperimentKind::Hybrid => hybrid(model, &cfg.horizons, cfg.s.as_deref(), &opts()?),
        ExperimentKind::Yaglom => yaglom(
            model,
            &cfg.horizons,
            &cfg.t_grid,
            cfg.condition.unwrap_or(Condition::NonZero),
            &opts()?,
        ),
        ExperimentKind::Tails => {
            let nt = model.constant.n_types();
            let functionals = match &cfg.functionals {
                Some(names) => names
                    .iter()
                    .map(|n| Functional::parse(n, nt))
                    .collect::<Result<Vec<_>>>()?,
                None => default_functionals(nt),
            };
            let mut horizons = cfg.horizons.clone();
            horizons.sort_unstable();
            horizons.dedup();
            let spec = FunctionalBatchSpec {
                functionals,
                x_grid: cfg.x_grid.clone().unwrap_or_else(|| decade_grid(2, 6, 2)),
                lambdas: cfg
                    .lambdas
                    .clone()
                    .unwrap_or_else(|| decade_grid(-6, -2, 1)),
                f_horizons: horizons,
                max_generations: cfg.max_generations.unwrap_or(DEFAULT_MAX_GENERATIONS),
                keep_records: false,
            };
            tails(model, &spec, &opts()?)
        }
        ExperimentKind::VerifyAll => unreachable!("handled above"),
    }
}

/// Safety limit on lineage length in `tails`.
pub const DEFAULT_MAX_GENERATIONS: u64 = 10_000_000;

/// `S, A, L, L1..LN, B, B1..BN`.
pub fn default_functionals(n_types: usize) -> Vec<Functional> {
    let mut v = vec![Functional::S, Functional::A, Functional::L];
    v.extend((1..=n_types).map(Functional::Lj));
    v.push(Functional::B);
    v.extend((1..=n_types).map(Functional::Bj));
    v
}

/// `10^{lo}, …, 10^{hi}` with `per_decade` points per decade.
pub fn decade_grid(lo: i32, hi: i32, per_decade: u32) -> Vec<f64> {
    let steps = ((hi - lo) as u32) * per_decade;
    (0..=steps)
        .map(|k| 10f64.powf(lo as f64 + k as f64 / per_decade as f64))
        .collect()
}

fn sorted(horizons: &[u64]) -> Vec<u64> {
    let mut h = horizons.to_vec();
    h.sort_unstable();
    h.dedup();
    h
}

fn exact_survival(model: &ConstantEnvModel, id: &str, horizons: &[u64]) -> Result<ResultTable> {
    let ns = sorted(horizons);
    let q = deficiency_at(model, &ns, &vec![0.0; model.n_types()])?;
    let mut t = ResultTable::new();
    for (n, qn) in ns.iter().zip(&q) {
        for (i, &v) in qn.iter().enumerate() {
            t.push(
                ResultRow::exact("exact-survival", id, v)
                    .param("n", n)
                    .param("i", i + 1),
            );
        }
    }
    Ok(t)
}

fn moments(model: &ConstantEnvModel, id: &str, horizons: &[u64]) -> Result<ResultTable> {
    let nt = model.n_types();
    let mut t = ResultTable::new();
    for &n in &sorted(horizons) {
        let tables = moment_tables(model, n);
        for i in 0..nt {
            for l in i..nt {
                t.push(
                    ResultRow::exact("mean", id, tables.mean[(i, l)])
                        .param("n", n)
                        .param("i", i + 1)
                        .param("l", l + 1),
                );
            }
        }
        for i in 0..nt {
            for k in i..nt {
                for l in k..nt {
                    t.push(
                        ResultRow::exact("second-moment", id, tables.second[(i, k, l)])
                            .param("n", n)
                            .param("i", i + 1)
                            .param("k", k + 1)
                            .param("l", l + 1),
                    );
                }
            }
        }
    }
    Ok(t)
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// `points` quasi-random points of `[0,1]^dim` (Halton sequence), with the
/// corners `0` and `1` prepended.
pub fn s_grid(dim: usize, points: usize) -> Vec<Vec<f64>> {
    let mut g = vec![vec![0.0; dim], vec![1.0; dim]];
    let mut k = 1;
    while g.len() < points {
        g.push(
            (0..dim)
                .map(|l| radical_inverse(k, PRIMES[l % PRIMES.len()]))
                .collect(),
        );
        k += 1;
    }
    g.truncate(points);
    g
}

/// Sandwich sweep over a grid at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichSweep {
    pub violations: usize,
    pub min_lower_margin: f64,
    pub min_upper_margin: f64,
}

pub fn sandwich_sweep(
    model: &ConstantEnvModel,
    n: u64,
    grid: &[Vec<f64>],
) -> Result<SandwichSweep> {
    let tables = moment_tables(model, n);
    let mut out = SandwichSweep {
        violations: 0,
        min_lower_margin: f64::INFINITY,
        min_upper_margin: f64::INFINITY,
    };
    for s in grid {
        let mut d = DeficiencyVector::initial(model, s)?;
        for _ in 0..n {
            d.step(model);
        }
        let r = sandwich_from_tables(&tables, s, d.q);
        if !r.holds {
            out.violations += 1;
        }
        out.min_lower_margin = r
            .lower_margin
            .iter()
            .copied()
            .fold(out.min_lower_margin, f64::min);
        out.min_upper_margin = r
            .upper_margin
            .iter()
            .copied()
            .fold(out.min_upper_margin, f64::min);
    }
    Ok(out)
}

fn sandwich(
    model: &ConstantEnvModel,
    id: &str,
    horizons: &[u64],
    points: usize,
) -> Result<ResultTable> {
    let grid = s_grid(model.n_types(), points);
    let mut t = ResultTable::new();
    for &n in &sorted(horizons) {
        let sw = sandwich_sweep(model, n, &grid)?;
        t.push(
            ResultRow::exact("sandwich", id, sw.violations as f64)
                .param("n", n)
                .param("points", grid.len())
                .verdict(sw.violations == 0)
                .diagnostics(diag(&[
                    ("min_lower_margin", sw.min_lower_margin),
                    ("min_upper_margin", sw.min_upper_margin),
                ])),
        );
    }
    Ok(t)
}

/// `(n, Q_n^{(1)}(s(n)))` with `1 - s_l(n) = n^{-t_l}`.
pub fn regime_series(
    model: &ConstantEnvModel,
    t: &[f64],
    horizons: &[u64],
) -> Result<Vec<(f64, f64)>> {
    if t.len() != model.n_types() {
        return Err(Error::DimensionMismatch {
            expected: model.n_types(),
            got: t.len(),
        });
    }
    horizons
        .iter()
        .map(|&n| {
            let q0: Vec<f64> = t.iter().map(|&tl| (n as f64).powf(-tl).min(1.0)).collect();
            let mut d = DeficiencyVector::from_deficiency(model, &q0)?;
            for _ in 0..n {
                d.step(model);
            }
            Ok((n as f64, d.q[0]))
        })
        .collect()
}

/// Exponent for a `t` vector: the two-type table for `N = 2`, the general
/// formula otherwise.
pub fn predicted_exponent(t: &[f64]) -> Result<f64> {
    if t.len() == 2 {
        regime_exponent(t[0], t[1])
    } else {
        regime_exponent_n(1, t)
    }
}

fn t_label(t: &[f64]) -> String {
    format!(
        "({})",
        t.iter()
            .map(|&v| format_number(v))
            .collect::<Vec<_>>()
            .join(" ")
    )
}

fn regimes(
    model: &ConstantEnvModel,
    id: &str,
    horizons: &[u64],
    t_grid: &[Vec<f64>],
    threshold: f64,
) -> Result<ResultTable> {
    let ns = sorted(horizons);
    let mut t = ResultTable::new();
    for tv in t_grid {
        let gamma = predicted_exponent(tv)?;
        let series = regime_series(model, tv, &ns)?;
        for &(n, y) in &series {
            t.push(
                ResultRow::exact("regime-point", id, y)
                    .param("t", t_label(tv))
                    .param("n", n),
            );
        }
        let v = envelope_check(&series, gamma, threshold)?;
        t.push(
            ResultRow::exact("regime-envelope", id, v.max_min_ratio)
                .param("t", t_label(tv))
                .verdict(v.pass)
                .diagnostics(diag(&[("gamma", gamma), ("threshold", threshold)])),
        );
    }
    Ok(t)
}

fn simulate(
    model: &Model,
    horizons: &[u64],
    opts: &McOptions,
    dump: Option<&str>,
) -> Result<ResultTable> {
    let env = model.random_env()?;
    let id = model.id.as_str();
    let ns = sorted(horizons);
    let mut t = ResultTable::new();
    for (n, e) in ns.iter().zip(type0_survival(env, &ns, opts)?) {
        t.push(ResultRow::estimate("type0-survival", id, &e).param("n", n));
    }
    for &n in &ns {
        for (name, cond) in [
            ("direct-nonextinction", Condition::NonZero),
            ("direct-first-type", Condition::FirstTypeAlive),
        ] {
            let e = direct_nonextinction(env, n, cond, opts)?;
            t.push(ResultRow::estimate(name, id, &e).param("n", n));
        }
    }
    if let Some(path) = dump {
        dump_trajectories(env, *ns.last().unwrap_or(&0), opts, path)?;
    }
    Ok(t)
}

fn dump_trajectories(
    model: &RandomEnvModel,
    horizon: u64,
    opts: &McOptions,
    path: &str,
) -> Result<()> {
    let streams = StreamFactory::new(opts.seed);
    let records = run_replicates(
        opts.reps,
        opts.workers,
        Vec::new,
        |a, r| {
            let mut rng = streams.stream(r, SUBSTREAM_PATH);
            a.push((
                r,
                simulate_type0(model, horizon, &mut rng, opts.pop_cap).functionals,
            ));
        },
        |a, b| a.extend(b),
    );
    let io = |source| Error::Io {
        path: path.to_string(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    write_trajectory_csv(&mut out, model.n_types(), records).map_err(io)?;
    Ok(())
}

fn hybrid(
    model: &Model,
    horizons: &[u64],
    s: Option<&[f64]>,
    opts: &McOptions,
) -> Result<ResultTable> {
    let env = model.random_env()?;
    let id = model.id.as_str();
    let nt = env.n_types();
    let ns = sorted(horizons);
    let mut first = vec![0.0; nt];
    first[0] = 1.0;
    let mut targets: Vec<(&str, Vec<f64>, bool)> = vec![
        ("hybrid-nonextinction", vec![1.0; nt], false),
        ("hybrid-first-type", first, false),
        ("hybrid-total-survival", vec![1.0; nt], true),
    ];
    if let Some(s) = s {
        if s.len() != nt {
            return Err(Error::DimensionMismatch {
                expected: nt,
                got: s.len(),
            });
        }
        if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!("s component {v} outside [0, 1]")));
        }
        targets.push((
            "hybrid-functional",
            s.iter().map(|&v| 1.0 - v).collect(),
            false,
        ));
    }
    let specs: Vec<TargetSpec> = ns
        .iter()
        .flat_map(|&n| {
            targets.iter().map(move |(_, q0, type0)| TargetSpec {
                n,
                q0: q0.clone(),
                type0: *type0,
            })
        })
        .collect();
    let batch = hybrid_batch(env, &specs, opts)?;
    let mut t = ResultTable::new();
    for (idx, spec) in specs.iter().enumerate() {
        let name = targets[idx % targets.len()].0;
        t.push(
            ResultRow::estimate(name, id, &batch.estimate(idx))
                .param("n", spec.n)
                .diagnostics(diag(&[("completed_fraction", batch.completed_fraction())])),
        );
    }
    Ok(t)
}

/// The closed-form limit for a `t` vector under `condition`, where one
/// applies.
pub fn yaglom_target(t: &[f64], condition: Condition) -> Option<f64> {
    match condition {
        Condition::FirstTypeAlive => limit_cdf_g(t).ok(),
        Condition::NonZero if t.len() == 2 => limit_cdf_a(t[0], t[1]).ok(),
        Condition::NonZero => None,
    }
}

fn yaglom(
    model: &Model,
    horizons: &[u64],
    t_grid: &[Vec<f64>],
    condition: Condition,
    opts: &McOptions,
) -> Result<ResultTable> {
    let env = model.random_env()?;
    let id = model.id.as_str();
    let cond_name = match condition {
        Condition::FirstTypeAlive => "first_type_alive",
        Condition::NonZero => "non_zero",
    };
    let mut t = ResultTable::new();
    for &n in &sorted(horizons) {
        match conditional_yaglom_cdf(env, n, t_grid, condition, opts) {
            Ok(res) => {
                for p in &res.points {
                    let mut pairs = vec![
                        ("conditioning", res.conditioning.value),
                        ("completed_fraction", res.completed_fraction),
                    ];
                    if let Some(target) = yaglom_target(&p.t, condition) {
                        pairs.insert(0, ("target", target));
                    }
                    let mut row = ResultRow::estimate("yaglom", id, &res.conditioning)
                        .param("n", n)
                        .param("t", t_label(&p.t))
                        .param("condition", cond_name)
                        .diagnostics(diag(&pairs));
                    row.value = p.value;
                    row.std_error = Some(p.std_error);
                    t.push(row);
                }
            }
            Err(Error::UnreliableConditioning { value, se }) => {
                t.push(
                    ResultRow::exact("yaglom", id, f64::NAN)
                        .param("n", n)
                        .param("condition", cond_name)
                        .verdict(false)
                        .diagnostics(format!(
                            "unreliable conditioning;{}",
                            diag(&[("conditioning", value), ("se", se)])
                        )),
                );
            }
            Err(e) => return Err(e),
        }
    }
    Ok(t)
}

fn tails(model: &Model, spec: &FunctionalBatchSpec, opts: &McOptions) -> Result<ResultTable> {
    let env = model.random_env()?;
    let id = model.id.as_str();
    let nt = env.n_types();
    let batch = functional_batch(env, spec, opts)?;
    let mut t = ResultTable::new();
    for (f, row) in spec.functionals.iter().zip(&batch.tails) {
        for (&x, e) in spec.x_grid.iter().zip(row) {
            t.push(
                ResultRow::estimate("tail", id, e)
                    .param("f", f.name())
                    .param("x", format_number(x)),
            );
        }
        let points: Vec<(f64, f64)> = spec
            .x_grid
            .iter()
            .copied()
            .zip(row.iter().map(|e| e.value))
            .collect();
        match plateau_estimate(&points) {
            Ok(p) => t.push(
                ResultRow::exact("tail-plateau", id, p.k_hat)
                    .param("f", f.name())
                    .diagnostics(diag(&[("dispersion", p.dispersion)])),
            ),
            Err(e) => t.push(
                ResultRow::exact("tail-plateau", id, f64::NAN)
                    .param("f", f.name())
                    .diagnostics(e.to_string()),
            ),
        }
    }
    let mut scaled = Vec::new();
    for (&lambda, e) in spec.lambdas.iter().zip(&batch.laplace) {
        t.push(ResultRow::estimate("laplace", id, e).param("lambda", format_number(lambda)));
        scaled.push(e.value * (1.0 / lambda).ln());
    }
    if !scaled.is_empty() {
        t.push(
            ResultRow::exact("laplace-plateau", id, max_min_ratio(&scaled)).diagnostics(diag(&[(
                "mean",
                scaled.iter().sum::<f64>() / scaled.len() as f64,
            )])),
        );
    }
    let norm = 2f64.powi(nt as i32 - 1);
    for (&n, e) in spec.f_horizons.iter().zip(&batch.f) {
        t.push(
            ResultRow::estimate("corollary-f", id, e)
                .param("n", n)
                .diagnostics(diag(&[("scaled", e.value * (n as f64).ln() / norm)])),
        );
    }
    Ok(t)
}

/// Deterministic seed offset for a sub-experiment.
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = StreamFactory::new(seed).stream(tag, 2);
    rng.random()
}
