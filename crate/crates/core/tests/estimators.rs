//! Monte Carlo estimators against closed forms and exhaustive enumeration.

use bplab::analysis::lemma_singleterm_check;
use bplab::env_sim::FunctionalRecord;
use bplab::estimators::{
    conditional_yaglom_cdf, corollary_f, direct_nonextinction, functional_batch, hybrid_batch,
    hybrid_nonextinction, Condition, CovAccumulator, Functional, FunctionalBatchSpec, McOptions,
    TargetSpec,
};
use bplab::law::{OffspringLaw, Univariate};
use bplab::model::{ConstantEnvModel, EnvironmentState, Model, RandomEnvModel};
use bplab::oracle::random_env_one_step_nonextinction;
use bplab::Error;

fn shipped(name: &str) -> RandomEnvModel {
    let path = format!("{}/models/{name}.json", env!("CARGO_MANIFEST_DIR"));
    let m = Model::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    m.random.unwrap()
}

fn lf_single() -> ConstantEnvModel {
    ConstantEnvModel::new(vec![OffspringLaw::univariate(
        Univariate::LinearFractional { b: 1.0 },
    )
    .unwrap()])
    .unwrap()
}

fn one_state(law0: OffspringLaw, constant: ConstantEnvModel) -> RandomEnvModel {
    RandomEnvModel::new(vec![(1.0, EnvironmentState::new(law0).unwrap())], constant).unwrap()
}

fn within(value: f64, se: f64, exact: f64, k: f64) -> bool {
    (value - exact).abs() <= k * se.max(1e-15)
}

#[test]
fn accumulator_matches_two_pass_moments() {
    let data: Vec<[f64; 2]> = (0..1000)
        .map(|i| {
            let x = ((i as f64) * 0.618).fract();
            [x, 1.0 + 1e-3 * x * x]
        })
        .collect();
    let n = data.len() as f64;
    let mean = |c: usize| data.iter().map(|v| v[c]).sum::<f64>() / n;
    let (m0, m1) = (mean(0), mean(1));
    let cov = data.iter().map(|v| (v[0] - m0) * (v[1] - m1)).sum::<f64>() / (n - 1.0) / n;
    let var1 = data.iter().map(|v| (v[1] - m1).powi(2)).sum::<f64>() / (n - 1.0) / n;
    let mut whole = CovAccumulator::new(2);
    let mut parts = [
        CovAccumulator::new(2),
        CovAccumulator::new(2),
        CovAccumulator::new(2),
    ];
    for (i, v) in data.iter().enumerate() {
        whole.add(v);
        parts[i * 3 / data.len()].add(v);
    }
    let mut merged = CovAccumulator::new(2);
    for p in &parts {
        merged.merge(p);
    }
    for acc in [&whole, &merged] {
        assert!((acc.mean(1) - m1).abs() <= 1e-13);
        assert!((acc.cov_of_means(0, 1) - cov).abs() <= 1e-12 * cov.abs());
        assert!((acc.std_error(1) - var1.sqrt()).abs() <= 1e-9 * var1.sqrt());
    }
    let mut constant = CovAccumulator::new(1);
    for _ in 0..500 {
        constant.add(&[0.1]);
    }
    assert_eq!(constant.std_error(0), 0.0);
}

#[test]
fn hybrid_at_zero_horizon_is_zero() {
    let e = hybrid_nonextinction(&shipped("two-point-env"), 0, &McOptions::new(100, 1)).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.std_error, 0.0);
}

#[test]
fn single_immigrant_then_extinction_is_exact() {
    // X_1 = 0 and Z_1 = 1 surely: P(Z_n ≠ 0) = Q_{n-1}(0) = 1/n.
    let law0 = OffspringLaw::table(2, [(vec![0, 1], 1.0)]).unwrap();
    let model = one_state(law0, lf_single());
    for n in [1u64, 2, 10, 500] {
        let e = hybrid_nonextinction(&model, n, &McOptions::new(50, 3)).unwrap();
        assert!(
            (e.value - 1.0 / n as f64).abs() <= 1e-12,
            "n={n}: {}",
            e.value
        );
        assert!(e.std_error <= 1e-12);
    }
}

#[test]
fn immortal_line_with_bernoulli_immigrants() {
    // X_n ≡ 1 and one immigrant with probability p per generation:
    // P(Z_n = 0) = ∏_{k<n} (1 - p/(1+k)).
    let p = 0.3;
    let law0 = OffspringLaw::product(vec![
        Univariate::Deterministic { k: 1 },
        Univariate::Bernoulli { p },
    ])
    .unwrap();
    let model = one_state(law0, lf_single());
    for n in [1u64, 5, 32] {
        let exact = 1.0 - (0..n).map(|k| 1.0 - p / (1.0 + k as f64)).product::<f64>();
        let opts = McOptions::new(40_000, 17);
        let h = hybrid_nonextinction(&model, n, &opts).unwrap();
        assert!(
            within(h.value, h.std_error, exact, 4.0),
            "hybrid n={n}: {} ± {} vs {exact}",
            h.value,
            h.std_error
        );
        let d = direct_nonextinction(&model, n, Condition::NonZero, &opts).unwrap();
        assert!(
            within(d.value, d.std_error, exact, 4.0),
            "direct n={n}: {} ± {} vs {exact}",
            d.value,
            d.std_error
        );
        assert_eq!(d.capped_fraction, 0.0);
    }
}

fn finite_two_state() -> RandomEnvModel {
    let a = OffspringLaw::table(
        3,
        [
            (vec![0, 0, 0], 0.2),
            (vec![1, 1, 0], 0.2),
            (vec![2, 0, 0], 0.25),
            (vec![0, 0, 2], 0.15),
            (vec![1, 0, 0], 0.2),
        ],
    )
    .unwrap();
    let b = OffspringLaw::table(
        3,
        [
            (vec![1, 0, 0], 0.5),
            (vec![0, 1, 1], 0.3),
            (vec![3, 0, 0], 0.2),
        ],
    )
    .unwrap();
    let t1 =
        OffspringLaw::table(2, [(vec![0, 0], 0.4), (vec![1, 0], 0.3), (vec![2, 1], 0.3)]).unwrap();
    let t2 = OffspringLaw::table(1, [(vec![0], 0.5), (vec![2], 0.5)]).unwrap();
    let cst = ConstantEnvModel::new(vec![t1, t2]).unwrap();
    RandomEnvModel::new(
        vec![
            (0.6, EnvironmentState::new(a).unwrap()),
            (0.4, EnvironmentState::new(b).unwrap()),
        ],
        cst,
    )
    .unwrap()
}

/// `(x, y1, y2, p)` support points of one environment state.
type Support = &'static [(u32, u32, u32, f64)];

/// `P(Z_2 ≠ 0)` for [`finite_two_state`] by summing over both generations.
fn two_step_oracle() -> f64 {
    let states: [(f64, Support); 2] = [
        (
            0.6,
            &[
                (0, 0, 0, 0.2),
                (1, 1, 0, 0.2),
                (2, 0, 0, 0.25),
                (0, 0, 2, 0.15),
                (1, 0, 0, 0.2),
            ],
        ),
        (0.4, &[(1, 0, 0, 0.5), (0, 1, 1, 0.3), (3, 0, 0, 0.2)]),
    ];
    // Per-state probability that one type-0 parent has no immigrant children.
    let no_immigrants: Vec<(f64, f64)> = states
        .iter()
        .map(|(w, t)| {
            (
                *w,
                t.iter().filter(|e| e.1 == 0 && e.2 == 0).map(|e| e.3).sum(),
            )
        })
        .collect();
    let (f1, f2) = (0.4f64, 0.5f64);
    let mut extinct = 0.0;
    for (w, table) in states {
        for &(x, y1, y2, p) in table {
            let imm: f64 = no_immigrants
                .iter()
                .map(|(w2, p0)| w2 * p0.powi(x as i32))
                .sum();
            extinct += w * p * imm * f1.powi(y1 as i32) * f2.powi(y2 as i32);
        }
    }
    1.0 - extinct
}

#[test]
fn two_steps_match_enumeration() {
    let model = finite_two_state();
    let exact = two_step_oracle();
    let opts = McOptions::new(200_000, 5);
    let h = hybrid_nonextinction(&model, 2, &opts).unwrap();
    assert!(
        within(h.value, h.std_error, exact, 4.0),
        "hybrid {} ± {} vs {exact}",
        h.value,
        h.std_error
    );
    let d = direct_nonextinction(&model, 2, Condition::NonZero, &opts).unwrap();
    assert!(
        within(d.value, d.std_error, exact, 4.0),
        "direct {} ± {} vs {exact}",
        d.value,
        d.std_error
    );
}

#[test]
fn one_step_matches_table_oracle() {
    let model = finite_two_state();
    let exact = random_env_one_step_nonextinction(&model).unwrap();
    // State a: 0.2 + 0.15; state b: 0.3.
    assert!((exact - (0.6 * 0.35 + 0.4 * 0.3)).abs() <= 1e-15);
    let h = hybrid_nonextinction(&model, 1, &McOptions::new(100_000, 9)).unwrap();
    assert!(
        within(h.value, h.std_error, exact, 4.0),
        "{} ± {} vs {exact}",
        h.value,
        h.std_error
    );
}

#[test]
fn hybrid_agrees_with_direct_and_has_smaller_error() {
    let model = shipped("two-point-env");
    for n in [8u64, 64] {
        let opts = McOptions::new(20_000, 21);
        let h = hybrid_nonextinction(&model, n, &opts).unwrap();
        let d = direct_nonextinction(&model, n, Condition::NonZero, &McOptions::new(20_000, 22))
            .unwrap();
        let se = h.std_error.hypot(d.std_error);
        assert!(
            (h.value - d.value).abs() <= 3.0 * se,
            "n={n}: {} vs {}",
            h.value,
            d.value
        );
        assert!(
            h.std_error <= d.std_error,
            "n={n}: {} > {}",
            h.std_error,
            d.std_error
        );
        assert_eq!(d.capped_fraction, 0.0);
    }
}

#[test]
fn hybrid_targets_are_ordered_on_common_paths() {
    let model = shipped("two-point-env");
    let nt = model.n_types();
    let mut first = vec![1.0; nt];
    first[0] = 0.0;
    let specs = [
        TargetSpec {
            n: 50,
            q0: first,
            type0: false,
        },
        TargetSpec {
            n: 50,
            q0: vec![1.0; nt],
            type0: false,
        },
        TargetSpec {
            n: 50,
            q0: vec![1.0; nt],
            type0: true,
        },
    ];
    let batch = hybrid_batch(&model, &specs, &McOptions::new(5_000, 4)).unwrap();
    let v: Vec<f64> = (0..3).map(|i| batch.estimate(i).value).collect();
    // P(Z_n1 > 0) ≤ P(Z_n ≠ 0) ≤ P(Z_n ≠ 0 or X_n > 0).
    assert!(v[0] <= v[1] && v[1] <= v[2], "{v:?}");
}

#[test]
fn hybrid_batch_ignores_worker_count() {
    let model = shipped("two-point-env");
    let specs = [TargetSpec {
        n: 40,
        q0: vec![1.0, 1.0],
        type0: false,
    }];
    let run = |w| {
        hybrid_batch(&model, &specs, &McOptions::new(3_000, 8).workers(w))
            .unwrap()
            .estimate(0)
    };
    let a = run(1);
    for w in [2, 3, 8] {
        let b = run(w);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }
}

#[test]
fn tiny_samples_give_unreliable_conditioning() {
    let model = shipped("two-point-env");
    let r = conditional_yaglom_cdf(
        &model,
        4096,
        &[vec![1.0, 1.0]],
        Condition::FirstTypeAlive,
        &McOptions::new(3, 2),
    );
    assert!(
        matches!(r, Err(Error::UnreliableConditioning { .. })),
        "{r:?}"
    );
}

fn record(l: Vec<u128>) -> FunctionalRecord {
    let n = l.len();
    FunctionalRecord {
        generations: 3,
        extinct: true,
        capped: false,
        s: 4,
        a: 2,
        l,
        b: vec![0; n],
        b_total: 0,
    }
}

#[test]
fn no_immigrants_means_zero_f() {
    let recs = vec![record(vec![0, 0]); 10];
    let f = corollary_f(&recs, &[vec![0.3, 0.2], vec![1.0, 1.0]]);
    assert!(f.iter().all(|e| e.value == 0.0 && e.capped_fraction == 0.0));
    let recs = vec![record(vec![2, 1]), record(vec![0, 0])];
    let f = corollary_f(&recs, &[vec![0.5, 0.25]]);
    let exact = 0.5 * (1.0 - (-1.25f64).exp());
    assert!((f[0].value - exact).abs() <= 1e-15);
}

#[test]
fn f_decreases_in_the_horizon() {
    let model = shipped("two-point-env");
    let spec = FunctionalBatchSpec {
        functionals: vec![Functional::S, Functional::L],
        x_grid: vec![10.0, 100.0],
        lambdas: vec![1e-3],
        f_horizons: vec![10, 100, 1_000, 10_000],
        max_generations: 10_000_000,
        keep_records: false,
    };
    let b = functional_batch(&model, &spec, &McOptions::new(20_000, 12)).unwrap();
    assert!(
        b.f.windows(2).all(|w| w[1].value <= w[0].value),
        "{:?}",
        b.f
    );
    for tails in &b.tails {
        assert!(tails[1].value <= tails[0].value);
    }
    assert_eq!(b.excluded, 0);
}

#[test]
fn single_term_is_exact_without_a_tail() {
    let model = shipped("two-point-env");
    let v = lemma_singleterm_check(model.constant(), 2, &[], &[10, 100, 1000]).unwrap();
    assert!(v.pass);
    assert!(v.ratios.iter().all(|&(_, r)| r == 1.0));
}

#[test]
fn single_term_ratio_approaches_one() {
    let model = shipped("two-point-env");
    let v =
        lemma_singleterm_check(model.constant(), 1, &[3.0], &[100, 1000, 10_000, 100_000]).unwrap();
    assert!(v.pass, "{v:?}");
    let e = lemma_singleterm_check(model.constant(), 1, &[1.5], &[100]);
    assert!(matches!(e, Err(Error::ConditionViolated(_))));
}
