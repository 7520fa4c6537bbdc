use proptest::prelude::*;
use rsczo::diagnostics::{aggregate_metrics, median, outlier_ratio};
use rsczo::estimator::{estimate_gradient, psi_tau, vector_clip, Aggregation, DirectionalBatch};
use rsczo::harness::{parse_records_csv, records_to_csv};
use rsczo::oracle::{NoiseModel, QuadraticProblem};
use rsczo::record::{Method, RunRecord};
use rsczo::rng::StreamKey;
use rsczo::vecops::{dot, norm};

fn finite() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

fn tau() -> impl Strategy<Value = f64> {
    1e-6..1e6f64
}

proptest! {
    #[test]
    fn psi_is_odd_and_one_lipschitz(z in finite(), w in finite(), t in tau()) {
        prop_assert_eq!(psi_tau(-z, t).unwrap(), -psi_tau(z, t).unwrap());
        let gap = (psi_tau(z, t).unwrap() - psi_tau(w, t).unwrap()).abs();
        prop_assert!(gap <= (z - w).abs() * (1.0 + 1e-12));
    }

    #[test]
    fn psi_identity_inside_and_saturates_outside(z in finite(), t in tau()) {
        let c = psi_tau(z, t).unwrap();
        if z.abs() <= t {
            prop_assert_eq!(c, z);
        } else {
            prop_assert!((c.abs() - t).abs() <= 1e-12 * t);
            prop_assert_eq!(c.signum(), z.signum());
        }
    }

    #[test]
    fn vector_clip_keeps_direction(v in prop::collection::vec(finite(), 1..40), frac in 0.01..0.99f64) {
        let n = norm(&v);
        prop_assume!(n > 0.0);
        let r = frac * n;
        let c = vector_clip(&v, r).unwrap();
        prop_assert!((dot(&c, &v) / (norm(&c) * n) - 1.0).abs() <= 1e-12);
        prop_assert!(norm(&c) <= r + 1e-9);
    }

    #[test]
    fn scalar_clipped_estimate_is_bounded(
        d in 1usize..30,
        m in 1usize..20,
        t in 1e-3..10.0f64,
        seed in any::<u64>(),
        p in 1.1..2.0f64,
    ) {
        let problem = QuadraticProblem::new(d, NoiseModel::sparse_pareto(p).unwrap(), 3.0);
        let key = StreamKey::root(seed);
        let est = estimate_gradient(&problem, &problem.x0, 1e-3, m, Aggregation::ScalarClip { tau: t }, key).unwrap();
        prop_assert!(norm(&est.g) <= d as f64 * t * (1.0 + 1e-12));
        prop_assert!(est.raw_scalars.len() == m);
    }

    #[test]
    fn estimates_are_deterministic_per_key(d in 1usize..20, m in 1usize..10, seed in any::<u64>()) {
        let problem = QuadraticProblem::new(d, NoiseModel::sparse_pareto(1.5).unwrap(), 1.0);
        let key = StreamKey::root(seed).index(7);
        for agg in [Aggregation::Raw, Aggregation::VectorClip { radius: 0.5 }, Aggregation::ScalarClip { tau: 0.3 }] {
            let a = estimate_gradient(&problem, &problem.x0, 1e-3, m, agg, key).unwrap();
            let b = estimate_gradient(&problem, &problem.x0, 1e-3, m, agg, key).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn central_difference_exact_on_quadratic(d in 1usize..20, seed in any::<u64>(), mu in 1e-4..10.0f64) {
        // y = <x, u> + <zeta, u> for every mu
        let problem = QuadraticProblem::new(d, NoiseModel::sparse_pareto(1.5).unwrap(), 2.0);
        let x: Vec<f64> = (0..d).map(|i| (i as f64 * 0.7).sin()).collect();
        let key = StreamKey::root(seed);
        let batch = DirectionalBatch::sample(&problem, &x, mu, 1, key).unwrap();
        let u = batch.direction(0);
        let zeta = problem.noise_vector(rsczo::estimator::sample_key(key, 0));
        let want = dot(&x, u) + dot(&zeta, u);
        let got = batch.values()[0];
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn outlier_ratio_invariances(mut ys in prop::collection::vec(finite(), 1..50), rot in 0usize..50) {
        let base = outlier_ratio(&ys);
        let flipped: Vec<f64> = ys.iter().map(|y| -y).collect();
        prop_assert_eq!(outlier_ratio(&flipped), base);
        let k = rot % ys.len();
        ys.rotate_left(k);
        ys.reverse();
        prop_assert_eq!(outlier_ratio(&ys), base);
    }

    #[test]
    fn summary_is_seed_order_invariant(finals in prop::collection::vec(0.0..2.0f64, 1..30), rot in 0usize..30) {
        let recs: Vec<RunRecord> = finals.iter().enumerate().map(|(s, &g)| rec(s as u64, 5, g)).collect();
        let mut shuffled = recs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = aggregate_metrics(&recs, 0.1).unwrap();
        let b = aggregate_metrics(&shuffled, 0.1).unwrap();
        prop_assert_eq!(a.median_final, b.median_final);
        prop_assert_eq!(a.success_rate, b.success_rate);
        prop_assert_eq!(a.median_final, median(&finals).unwrap());
    }
}

fn rec(seed: u64, t: u64, g: f64) -> RunRecord {
    RunRecord {
        method: Method::ScalarClip,
        seed,
        t,
        grad_norm: g,
        cosine: None,
        outlier_log_ratio: None,
        clipped_fraction: 0.0,
        queries: 2 * t,
    }
}

fn any_record() -> impl Strategy<Value = RunRecord> {
    (
        prop::sample::select(Method::ALL.to_vec()),
        any::<u64>(),
        any::<u64>(),
        prop::num::f64::POSITIVE | prop::num::f64::ZERO,
        prop::option::of(-1.0..=1.0f64),
        prop::option::of(prop::num::f64::NORMAL),
        0.0..=1.0f64,
        any::<u64>(),
    )
        .prop_map(|(method, seed, t, grad_norm, cosine, outlier_log_ratio, clipped_fraction, queries)| RunRecord {
            method,
            seed,
            t,
            grad_norm,
            cosine,
            outlier_log_ratio,
            clipped_fraction,
            queries,
        })
}

proptest! {
    #[test]
    fn records_csv_round_trip(records in prop::collection::vec(any_record(), 100)) {
        let mut buf = Vec::new();
        records_to_csv(&records, &mut buf).unwrap();
        let back = parse_records_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        let mut want = records.clone();
        want.sort_by_key(|r| (r.method, r.seed, r.t));
        // stable sort on identical keys keeps input order on both sides
        prop_assert_eq!(back, want);
    }
}
