//! Simulation of the random environment, the type-0 process with its
//! immigrant streams, and the full `(X_n, Z_n)` process.
//!
//! Offspring of a whole generation are drawn in aggregate (the sum of `x`
//! i.i.d. offspring vectors has an exactly samplable law for every
//! supported variant), so a generation costs O(N) regardless of its size.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::law::MAX_POISSON_RATE;
use crate::model::{ConstantEnvModel, EnvironmentState, RandomEnvModel};

/// Default population cap on the type-0 count (and on the total population
/// in full simulation).
pub const DEFAULT_POP_CAP: u64 = 1_000_000_000_000_000_000;

/// Checks that aggregate draws stay inside the sampler range below `cap`.
pub fn check_pop_cap(model: &RandomEnvModel, cap: u64) -> Result<()> {
    let worst = cap as f64 * model.max_mean();
    if cap == 0 || worst >= MAX_POISSON_RATE {
        return Err(Error::OutOfRange(format!(
            "population cap {cap} times largest mean {} exceeds sampler range {MAX_POISSON_RATE:e}",
            model.max_mean()
        )));
    }
    Ok(())
}

/// One environment state drawn by the mixture weights.
pub fn sample_environment<'m, R: Rng + ?Sized>(
    model: &'m RandomEnvModel,
    rng: &mut R,
) -> &'m EnvironmentState {
    model.state(model.sample_state_index(rng))
}

/// Path functionals of a type-0 lineage, accumulated up to the current
/// generation. At extinction they equal `S_T, A_T, L_T, B_T`; before it
/// they are lower bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FunctionalRecord {
    /// Generations simulated; equals `T` when `extinct`.
    pub generations: u64,
    pub extinct: bool,
    pub capped: bool,
    /// `Σ_{k ≤ generations} X_k`.
    pub s: u128,
    /// `max_k X_k`.
    pub a: u64,
    /// `L_j = Σ_k Y_kj`.
    pub l: Vec<u128>,
    /// `B_j = max_k Y_kj`.
    pub b: Vec<u64>,
    /// `max_k Σ_j Y_kj`.
    pub b_total: u64,
}

impl FunctionalRecord {
    fn start(n_types: usize) -> Self {
        Self {
            generations: 0,
            extinct: false,
            capped: false,
            s: 1,
            a: 1,
            l: vec![0; n_types],
            b: vec![0; n_types],
            b_total: 0,
        }
    }

    /// `L = Σ_j L_j`.
    pub fn l_total(&self) -> u128 {
        self.l.iter().sum()
    }

    #[inline]
    fn absorb(&mut self, x: u64, y: &[u64]) {
        self.generations += 1;
        self.s += x as u128;
        self.a = self.a.max(x);
        let mut total = 0u64;
        for ((l, b), &v) in self.l.iter_mut().zip(self.b.iter_mut()).zip(y) {
            *l += v as u128;
            *b = (*b).max(v);
            total = total.saturating_add(v);
        }
        self.b_total = self.b_total.max(total);
    }
}

/// Generation-by-generation simulator of the type-0 process started from
/// `X_0 = 1`.
pub struct Type0Stepper<'m> {
    model: &'m RandomEnvModel,
    pop_cap: u64,
    x: u64,
    /// `(X_n, Y_n1, …, Y_nN)` of the last generation.
    buf: Vec<u64>,
    rec: FunctionalRecord,
}

impl<'m> Type0Stepper<'m> {
    pub fn new(model: &'m RandomEnvModel, pop_cap: u64) -> Self {
        let nt = model.n_types();
        let mut buf = vec![0; nt + 1];
        buf[0] = 1;
        Self {
            model,
            pop_cap,
            x: 1,
            buf,
            rec: FunctionalRecord::start(nt),
        }
    }

    pub fn generation(&self) -> u64 {
        self.rec.generations
    }

    pub fn x(&self) -> u64 {
        self.x
    }

    /// `Y_n` of the current generation (zeros at generation 0).
    pub fn y(&self) -> &[u64] {
        &self.buf[1..]
    }

    pub fn extinct(&self) -> bool {
        self.x == 0
    }

    pub fn capped(&self) -> bool {
        self.rec.capped
    }

    /// True when another generation can be drawn.
    pub fn active(&self) -> bool {
        self.x != 0 && !self.rec.capped
    }

    pub fn record(&self) -> &FunctionalRecord {
        &self.rec
    }

    /// Draws the next generation. Returns `false` (and does nothing) once
    /// extinct or capped. Sets the capped flag when `X_n` exceeds the cap.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        if !self.active() {
            return false;
        }
        let law = sample_environment(self.model, rng).law();
        law.sample_sum_into(rng, self.x, &mut self.buf);
        self.x = self.buf[0];
        self.rec.absorb(self.x, &self.buf[1..]);
        if self.x == 0 {
            self.rec.extinct = true;
        } else if self.x > self.pop_cap {
            self.rec.capped = true;
        }
        true
    }
}

/// A stored type-0 lineage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Type0Trajectory {
    /// `X_0 = 1, X_1, …`.
    pub x: Vec<u64>,
    /// `Y_1, Y_2, …`, each of length `N`.
    pub y: Vec<Vec<u64>>,
    pub horizon: u64,
    pub functionals: FunctionalRecord,
}

impl Type0Trajectory {
    /// Extinction time, if the lineage died out within the horizon.
    pub fn extinction_time(&self) -> Option<u64> {
        self.functionals
            .extinct
            .then_some(self.functionals.generations)
    }

    pub fn censored(&self) -> bool {
        !self.functionals.extinct
    }
}

/// Simulates the type-0 process until extinction, the horizon, or the cap.
pub fn simulate_type0<R: Rng + ?Sized>(
    model: &RandomEnvModel,
    horizon: u64,
    rng: &mut R,
    pop_cap: u64,
) -> Type0Trajectory {
    let mut st = Type0Stepper::new(model, pop_cap);
    let mut x = vec![1];
    let mut y = Vec::new();
    while st.generation() < horizon && st.step(rng) {
        x.push(st.x());
        y.push(st.y().to_vec());
    }
    Type0Trajectory {
        x,
        y,
        horizon,
        functionals: st.record().clone(),
    }
}

/// Recomputes the functionals from the stored sequences.
pub fn trajectory_functionals(traj: &Type0Trajectory) -> FunctionalRecord {
    let nt = traj.functionals.l.len();
    let mut rec = FunctionalRecord::start(nt);
    for (x, y) in traj.x[1..].iter().zip(&traj.y) {
        rec.absorb(*x, y);
    }
    rec.extinct = traj.x.last() == Some(&0);
    rec.capped = traj.functionals.capped;
    rec
}

/// Writes one CSV line per trajectory:
/// `replicate,T,censored,S_T,A_T,L_T1..L_TN,B_T`.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    n_types: usize,
    records: impl IntoIterator<Item = (u64, FunctionalRecord)>,
) -> std::io::Result<()> {
    write!(out, "replicate,T,censored,S_T,A_T")?;
    for j in 1..=n_types {
        write!(out, ",L_T{j}")?;
    }
    writeln!(out, ",B_T")?;
    for (r, rec) in records {
        write!(
            out,
            "{r},{},{},{},{}",
            rec.generations, !rec.extinct, rec.s, rec.a
        )?;
        for l in &rec.l {
            write!(out, ",{l}")?;
        }
        writeln!(out, ",{}", rec.b_total)?;
    }
    Ok(())
}

/// State `(X_n, Z_n)` of the full process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FullState {
    pub x: u64,
    pub z: Vec<u64>,
    /// Generation reached; less than the requested horizon only if capped.
    pub n: u64,
    pub capped: bool,
}

impl FullState {
    /// `Z_n ≠ 0`.
    pub fn z_nonzero(&self) -> bool {
        self.z.iter().any(|&v| v > 0)
    }
}

fn step_constant<R: Rng + ?Sized>(
    model: &ConstantEnvModel,
    rng: &mut R,
    z: &[u64],
    next: &mut [u64],
    buf: &mut [u64],
) {
    let nt = model.n_types();
    for (i, &zi) in z.iter().enumerate() {
        if zi == 0 {
            continue;
        }
        let out = &mut buf[..nt - i];
        model.law(i).sample_sum_into(rng, zi, out);
        for (slot, &v) in next[i..].iter_mut().zip(out.iter()) {
            *slot += v;
        }
    }
}

fn total(x: u64, z: &[u64]) -> u128 {
    x as u128 + z.iter().map(|&v| v as u128).sum::<u128>()
}

/// Exact simulation of the full process to generation `n`, starting from
/// `(X_0, Z_0) = (1, 0)`. Stops early (flagged) when the total population
/// exceeds the cap.
pub fn simulate_full<R: Rng + ?Sized>(
    model: &RandomEnvModel,
    n: u64,
    rng: &mut R,
    pop_cap: u64,
) -> FullState {
    let nt = model.n_types();
    let cst = model.constant();
    let mut x = 1u64;
    let mut z = vec![0u64; nt];
    let mut next = vec![0u64; nt];
    let mut buf0 = vec![0u64; nt + 1];
    let mut buf = vec![0u64; nt];
    for g in 0..n {
        next.iter_mut().for_each(|v| *v = 0);
        if x > 0 {
            let law = sample_environment(model, rng).law();
            law.sample_sum_into(rng, x, &mut buf0);
            next.copy_from_slice(&buf0[1..]);
        }
        step_constant(cst, rng, &z, &mut next, &mut buf);
        x = if x > 0 { buf0[0] } else { 0 };
        std::mem::swap(&mut z, &mut next);
        if total(x, &z) > pop_cap as u128 {
            return FullState {
                x,
                z,
                n: g + 1,
                capped: true,
            };
        }
    }
    FullState {
        x,
        z,
        n,
        capped: false,
    }
}

/// Exact simulation of the constant-environment process from one particle
/// of type `start` (zero-based) to generation `n`.
pub fn simulate_constant<R: Rng + ?Sized>(
    model: &ConstantEnvModel,
    start: usize,
    n: u64,
    rng: &mut R,
    pop_cap: u64,
) -> FullState {
    let nt = model.n_types();
    let mut z = vec![0u64; nt];
    z[start] = 1;
    let mut next = vec![0u64; nt];
    let mut buf = vec![0u64; nt];
    for g in 0..n {
        next.iter_mut().for_each(|v| *v = 0);
        step_constant(model, rng, &z, &mut next, &mut buf);
        std::mem::swap(&mut z, &mut next);
        if total(0, &z) > pop_cap as u128 {
            return FullState {
                x: 0,
                z,
                n: g + 1,
                capped: true,
            };
        }
        if z.iter().all(|&v| v == 0) {
            break;
        }
    }
    FullState {
        x: 0,
        z,
        n,
        capped: false,
    }
}
