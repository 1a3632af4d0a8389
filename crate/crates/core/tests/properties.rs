//! Property tests for laws, the exact iteration, the analysis formulas and
//! the deterministic parallel driver.

use bplab::analysis::{limit_cdf_a, limit_cdf_g, regime_exponent, regime_exponent_n};
use bplab::gf::{
    iterate_deficiency, mean_power, sandwich_check, second_moment_table, DeficiencyVector,
};
use bplab::law::{OffspringLaw, Univariate};
use bplab::model::ConstantEnvModel;
use bplab::oracle::enumerate;
use bplab::parallel::run_replicates;
use bplab::runner::results::format_number;
use proptest::prelude::*;

fn univariate() -> impl Strategy<Value = Univariate> {
    prop_oneof![
        (0u32..4).prop_map(|k| Univariate::Deterministic { k }),
        (0.0..=1.0f64).prop_map(|p| Univariate::Bernoulli { p }),
        (0.0..3.0f64).prop_map(|lambda| Univariate::Poisson { lambda }),
        (0.0..3.0f64).prop_map(|mean| Univariate::Geometric { mean }),
        (0.05..3.0f64).prop_map(|b| Univariate::LinearFractional { b }),
    ]
}

/// Table law of the given arity with up to 4 support points.
fn table(arity: usize) -> impl Strategy<Value = OffspringLaw> {
    prop::collection::vec((prop::collection::vec(0u32..3, arity), 0.05..1.0f64), 1..5).prop_map(
        move |pts| {
            let total: f64 = pts.iter().map(|p| p.1).sum();
            let mut merged = std::collections::BTreeMap::new();
            for (k, p) in pts {
                *merged.entry(k).or_insert(0.0) += p / total;
            }
            let mut entries: Vec<(Vec<u32>, f64)> = merged.into_iter().collect();
            let rest = 1.0 - entries.iter().skip(1).map(|e| e.1).sum::<f64>();
            entries[0].1 = rest;
            OffspringLaw::table(arity, entries).expect("valid table")
        },
    )
}

fn law(arity: usize) -> impl Strategy<Value = OffspringLaw> {
    prop_oneof![
        prop::collection::vec(univariate(), arity).prop_map(|c| OffspringLaw::product(c).unwrap()),
        table(arity),
    ]
}

/// Critical decomposable model with `1..=3` types: own-type component is
/// linear-fractional, geometric with mean one, or Poisson(1); the next type
/// is reached with positive mean.
fn critical_model() -> impl Strategy<Value = ConstantEnvModel> {
    (1usize..=3)
        .prop_flat_map(|n| {
            prop::collection::vec((0u8..3, 0.05..2.0f64, 0.1..1.5f64, 0.0..1.0f64), n)
        })
        .prop_map(|spec| {
            let n = spec.len();
            let laws = spec
                .iter()
                .enumerate()
                .map(|(i, &(kind, b, next, far))| {
                    let own = match kind {
                        0 => Univariate::LinearFractional { b },
                        1 => Univariate::Geometric { mean: 1.0 },
                        _ => Univariate::Poisson { lambda: 1.0 },
                    };
                    let mut comps = vec![own];
                    for j in i + 1..n {
                        let lambda = if j == i + 1 { next } else { far };
                        comps.push(Univariate::Poisson { lambda });
                    }
                    OffspringLaw::product(comps).unwrap()
                })
                .collect();
            ConstantEnvModel::new(laws).unwrap()
        })
}

/// Finite-support model of `1..=3` types (tables), for enumeration.
fn table_model() -> impl Strategy<Value = ConstantEnvModel> {
    (1usize..=3).prop_flat_map(|n| {
        let laws: Vec<_> = (0..n).map(|i| table(n - i).boxed()).collect();
        laws.prop_map(|l| ConstantEnvModel::new(l).unwrap())
    })
}

fn unit_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pgf_at_one_is_one(l in (1usize..4).prop_flat_map(law)) {
        let a = l.arity();
        prop_assert_eq!(l.pgf(&vec![1.0; a]).unwrap(), 1.0);
        prop_assert_eq!(l.deficiency(&vec![0.0; a]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_at_one_is_the_mean(l in (1usize..4).prop_flat_map(law)) {
        let m = l.mean();
        let h = 1e-8;
        for j in 0..l.arity() {
            let mut q = vec![0.0; l.arity()];
            q[j] = h;
            let slope = l.deficiency(&q).unwrap() / h;
            prop_assert!((slope - m[j]).abs() <= 1e-6, "j={} slope={} mean={}", j, slope, m[j]);
        }
    }

    #[test]
    fn table_moments_are_support_sums(l in (1usize..4).prop_flat_map(table)) {
        let OffspringLaw::Table(t) = &l else { unreachable!() };
        let a = l.arity();
        let mean = l.mean();
        let second = l.second_factorial().unwrap();
        for k in 0..a {
            let m: f64 = t.entries().iter().map(|e| e.p * e.counts[k] as f64).sum();
            prop_assert!((m - mean[k]).abs() <= 1e-15);
            for j in 0..a {
                let b: f64 = t.entries().iter().map(|e| {
                    let (x, y) = (e.counts[k] as f64, e.counts[j] as f64);
                    e.p * (x * y - if k == j { x } else { 0.0 })
                }).sum();
                prop_assert!((b - second[(k, j)]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn semigroup(model in critical_model(), s in unit_vec(3), n in 0u64..60, m in 0u64..60) {
        let s = &s[..model.n_types()];
        let whole = iterate_deficiency(&model, n + m, s).unwrap().q;
        let inner = iterate_deficiency(&model, m, s).unwrap().q;
        let outer = DeficiencyVector::from_deficiency(&model, &inner).unwrap();
        let mut d = outer;
        for _ in 0..n {
            d.step(&model);
        }
        for (a, b) in whole.iter().zip(&d.q) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn deficiency_is_monotone(model in critical_model(), s in unit_vec(3), bump in 0.0..1.0f64, l in 0usize..3, n in 0u64..40) {
        let nt = model.n_types();
        let s = s[..nt].to_vec();
        let l = l % nt;
        let mut s2 = s.clone();
        s2[l] += (1.0 - s2[l]) * bump;
        let a = iterate_deficiency(&model, n, &s).unwrap().q;
        let b = iterate_deficiency(&model, n, &s2).unwrap().q;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(y <= x);
        }
        let q0 = iterate_deficiency(&model, n, &vec![0.0; nt]).unwrap().q;
        let q1 = iterate_deficiency(&model, n + 1, &vec![0.0; nt]).unwrap().q;
        for (x, y) in q0.iter().zip(&q1) {
            prop_assert!(y <= x);
        }
    }

    #[test]
    fn linear_fractional_closed_form(b in 0.05..5.0f64, q0 in 1e-9..=1.0f64, n in 0u64..20_000) {
        let model = ConstantEnvModel::new(vec![OffspringLaw::univariate(Univariate::LinearFractional { b }).unwrap()]).unwrap();
        let mut d = DeficiencyVector::from_deficiency(&model, &[q0]).unwrap();
        for _ in 0..n {
            d.step(&model);
        }
        let exact = q0 / (1.0 + n as f64 * b * q0);
        prop_assert!((d.q[0] - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn table_models_match_enumeration(model in table_model(), s in unit_vec(3), n in 0u32..=3) {
        let s = &s[..model.n_types()];
        let e = enumerate(&model, n, s).unwrap();
        let q = iterate_deficiency(&model, n as u64, s).unwrap().q;
        for (a, b) in q.iter().zip(&e.q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(mean_power(&model, n as u64).max_abs_diff(&e.mean) <= 1e-12);
        prop_assert!(second_moment_table(&model, n as u64).max_abs_diff(&e.second) <= 1e-12);
    }

    #[test]
    fn sandwich_holds(model in critical_model(), s in unit_vec(3), n in 0u64..50) {
        let r = sandwich_check(&model, n, &s[..model.n_types()]).unwrap();
        prop_assert!(r.holds, "{:?}", r);
    }

    #[test]
    fn limit_g_is_monotone(t in prop::collection::vec(0.01..6.0f64, 1..4), l in 0usize..3, d in 0.0..3.0f64) {
        let l = l % t.len();
        let mut t2 = t.clone();
        t2[l] += d;
        prop_assert!(limit_cdf_g(&t2).unwrap() >= limit_cdf_g(&t).unwrap());
    }

    #[test]
    fn limit_g_vanishes_below_the_diagonal(t in prop::collection::vec(0.01..6.0f64, 1..4), l in 0usize..3) {
        let l = l % t.len();
        let mut t = t;
        t[l] = t[l].min((l + 1) as f64);
        prop_assert_eq!(limit_cdf_g(&t).unwrap(), 0.0);
    }

    #[test]
    fn limit_a_is_monotone(t1 in 0.0..6.0f64, t2 in 0.0..6.0f64, d1 in 0.0..3.0f64, d2 in 0.0..3.0f64) {
        if let (Ok(a), Ok(b)) = (limit_cdf_a(t1, t2), limit_cdf_a(t1 + d1, t2 + d2)) {
            prop_assert!(b >= a);
        }
        if let (Ok(a), Ok(b)) = (limit_cdf_a(t1, t2), limit_cdf_a(t1 + d1, t2)) {
            prop_assert!(b >= a);
        }
        if let (Ok(a), Ok(b)) = (limit_cdf_a(t1, t2), limit_cdf_a(t1, t2 + d2)) {
            prop_assert!(b >= a);
        }
    }

    #[test]
    fn two_type_exponent_matches_general_formula(t1 in 1.001..6.0f64, t2 in 2.001..6.0f64) {
        let a = regime_exponent(t1, t2).unwrap();
        let b = regime_exponent_n(1, &[t1, t2]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((a - t1.min(t2 - 1.0)).abs() <= 1e-12);
    }

    #[test]
    fn replicate_sums_ignore_worker_count(reps in 1u64..5000, workers in 1usize..9) {
        let f = |r: u64| ((r as f64) * 0.7311).sin() * 1e-3 + 1.0 / (1.0 + r as f64);
        let run = |w| run_replicates(reps, w, || 0.0f64, |a, r| *a += f(r), |a, b| *a += b);
        prop_assert_eq!(run(1).to_bits(), run(workers).to_bits());
    }

    #[test]
    fn formatted_numbers_keep_twelve_digits(v in prop::num::f64::NORMAL) {
        let back: f64 = format_number(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-12 * v.abs());
    }
}

#[test]
fn limit_a_tends_to_one_half_at_the_corner() {
    let mut prev = f64::INFINITY;
    for eps in [0.1, 0.01, 0.001] {
        let d = (limit_cdf_a(1.0 + eps, 2.0 + eps).unwrap() - 0.5).abs();
        assert!(d < prev);
        assert!(d <= eps);
        prev = d;
    }
}
