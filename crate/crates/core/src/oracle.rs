//! Brute-force reference values by exhaustive enumeration of outcomes.
//!
//! Only laws with finite support can be enumerated: table laws and products
//! of deterministic and Bernoulli components. The state space grows quickly,
//! so these are meant for a handful of generations of small models.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::law::{OffspringLaw, Univariate};
use crate::linalg::{SquareMatrix, Tensor3};
use crate::model::{ConstantEnvModel, RandomEnvModel};

/// Distribution over population vectors.
pub type PopulationLaw = BTreeMap<Vec<u32>, f64>;

/// Support of a finite law as `(child counts, probability)` pairs.
pub fn support(law: &OffspringLaw) -> Result<Vec<(Vec<u32>, f64)>> {
    match law {
        OffspringLaw::Table(t) => Ok(t
            .entries()
            .iter()
            .map(|e| (e.counts.clone(), e.p))
            .collect()),
        OffspringLaw::Product(components) => {
            let mut acc: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 1.0)];
            for c in components {
                let marginal: Vec<(u32, f64)> = match *c {
                    Univariate::Deterministic { k } => vec![(k, 1.0)],
                    Univariate::Bernoulli { p } => vec![(0, 1.0 - p), (1, p)],
                    _ => {
                        return Err(Error::InvalidLaw(format!("{c:?} has infinite support")));
                    }
                };
                let mut next = Vec::with_capacity(acc.len() * marginal.len());
                for (counts, p) in &acc {
                    for &(k, pk) in &marginal {
                        let mut v = counts.clone();
                        v.push(k);
                        next.push((v, p * pk));
                    }
                }
                acc = next;
            }
            Ok(acc)
        }
    }
}

fn convolve(a: &PopulationLaw, b: &PopulationLaw) -> PopulationLaw {
    let mut out = PopulationLaw::new();
    for (x, px) in a {
        for (y, py) in b {
            let z: Vec<u32> = x.iter().zip(y).map(|(u, v)| u + v).collect();
            *out.entry(z).or_insert(0.0) += px * py;
        }
    }
    out
}

/// Law of `Z_n` started from one particle of type `start`.
pub fn population_law(model: &ConstantEnvModel, start: usize, n: u32) -> Result<PopulationLaw> {
    let nt = model.n_types();
    // One-parent offspring law of each type, padded to length N.
    let mut one: Vec<PopulationLaw> = Vec::with_capacity(nt);
    for i in 0..nt {
        let mut m = PopulationLaw::new();
        for (counts, p) in support(model.law(i))? {
            let mut v = vec![0u32; i];
            v.extend(counts);
            *m.entry(v).or_insert(0.0) += p;
        }
        one.push(m);
    }
    let zero = vec![0u32; nt];
    let mut powers: Vec<Vec<PopulationLaw>> = one
        .iter()
        .map(|_| vec![PopulationLaw::from([(zero.clone(), 1.0)])])
        .collect();
    let mut power = |j: usize, c: usize| -> PopulationLaw {
        while powers[j].len() <= c {
            let next = convolve(powers[j].last().unwrap(), &one[j]);
            powers[j].push(next);
        }
        powers[j][c].clone()
    };
    let mut start_vec = zero.clone();
    start_vec[start] = 1;
    let mut dist = PopulationLaw::from([(start_vec, 1.0)]);
    for _ in 0..n {
        let mut next = PopulationLaw::new();
        for (z, p) in &dist {
            let mut children = PopulationLaw::from([(zero.clone(), *p)]);
            for (j, &c) in z.iter().enumerate() {
                if c > 0 {
                    children = convolve(&children, &power(j, c as usize));
                }
            }
            for (v, q) in children {
                *next.entry(v).or_insert(0.0) += q;
            }
        }
        dist = next;
    }
    Ok(dist)
}

/// `1 - E[∏ s_l^{Z_nl}]`.
pub fn deficiency_of(law: &PopulationLaw, s: &[f64]) -> f64 {
    let h: f64 = law
        .iter()
        .map(|(z, p)| {
            p * z
                .iter()
                .zip(s)
                .map(|(&k, &sl)| sl.powi(k as i32))
                .product::<f64>()
        })
        .sum();
    1.0 - h
}

/// Enumerated `(Q_n(s), m(n), b(n))` for all start types.
pub struct Enumerated {
    pub q: Vec<f64>,
    pub mean: SquareMatrix,
    pub second: Tensor3,
    /// `P(Z_n ≠ 0)` per start type.
    pub nonextinction: Vec<f64>,
}

pub fn enumerate(model: &ConstantEnvModel, n: u32, s: &[f64]) -> Result<Enumerated> {
    let nt = model.n_types();
    let mut q = vec![0.0; nt];
    let mut nonextinction = vec![0.0; nt];
    let mut mean = SquareMatrix::zeros(nt);
    let mut second = Tensor3::zeros(nt);
    for i in 0..nt {
        let law = population_law(model, i, n)?;
        q[i] = deficiency_of(&law, s);
        for (z, p) in &law {
            if z.iter().any(|&k| k > 0) {
                nonextinction[i] += p;
            }
            for k in 0..nt {
                let zk = z[k] as f64;
                mean[(i, k)] += p * zk;
                for l in 0..nt {
                    let zl = z[l] as f64;
                    second[(i, k, l)] += p * (zk * zl - if k == l { zl } else { 0.0 });
                }
            }
        }
    }
    Ok(Enumerated {
        q,
        mean,
        second,
        nonextinction,
    })
}

/// `P(Z_1 ≠ 0)` for the process with one type-0 ancestor, by enumerating
/// environment states and their (finite) offspring tables.
pub fn random_env_one_step_nonextinction(model: &RandomEnvModel) -> Result<f64> {
    let mut total = 0.0;
    for (w, st) in model.weights().iter().zip(model.states()) {
        let mut p_any = 0.0;
        for (counts, p) in support(st.law())? {
            if counts[1..].iter().any(|&k| k > 0) {
                p_any += p;
            }
        }
        total += w * p_any;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_splitting_one_step() {
        let m = ConstantEnvModel::new(vec![OffspringLaw::table(
            1,
            [(vec![0], 0.5), (vec![2], 0.5)],
        )
        .unwrap()])
        .unwrap();
        let law = population_law(&m, 0, 2).unwrap();
        // Z_2 ∈ {0, 2, 4}: P(Z_2 = 4) = 1/8, P(Z_2 = 2) = 1/4.
        assert!((law[&vec![4]] - 0.125).abs() < 1e-15);
        assert!((law[&vec![2]] - 0.25).abs() < 1e-15);
        assert!((law[&vec![0]] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn infinite_support_is_rejected() {
        let law = OffspringLaw::univariate(Univariate::Poisson { lambda: 1.0 }).unwrap();
        assert!(support(&law).is_err());
    }
}
