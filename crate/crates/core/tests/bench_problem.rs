use mtbo_core::bench::{
    best_feasible_curve, hartmann6, offline_transform, run_comparison, BenchmarkConfig, BiasTransform,
    HartmannProblem, Method, HARTMANN6_MINIMIZER, HARTMANN6_MINIMUM,
};
use mtbo_core::bo_loop::{run_loop, Channel, Problem};
use mtbo_core::optim::{minimize, LbfgsbConfig};
use mtbo_core::qmc::ScrambledSobol;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Direct transcription of the textbook formula, independent of the library loop order.
fn hartmann_reference(x: &[f64]) -> f64 {
    let alpha = [1.0, 1.2, 3.0, 3.2];
    let a = [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ];
    let p = [
        [1312.0, 1696.0, 5569.0, 124.0, 8283.0, 5886.0],
        [2329.0, 4135.0, 8307.0, 3736.0, 1004.0, 9991.0],
        [2348.0, 1451.0, 3522.0, 2883.0, 3047.0, 6650.0],
        [4047.0, 8828.0, 8732.0, 5743.0, 1091.0, 381.0],
    ];
    let mut s = 0.0;
    for i in 0..4 {
        let mut inner = 0.0;
        for j in 0..6 {
            let d = x[j] - p[i][j] * 1e-4;
            inner += a[i][j] * d * d;
        }
        s += alpha[i] * (-inner).exp();
    }
    -s
}

#[test]
fn hartmann_matches_reference_formula() {
    let sobol = ScrambledSobol::new(6, 3);
    for x in sobol.points(64) {
        assert!((hartmann6(&x).unwrap() - hartmann_reference(&x)).abs() < 1e-14);
    }
    // golden value at the cube centre
    let centre = hartmann6(&[0.5; 6]).unwrap();
    assert!((centre - hartmann_reference(&[0.5; 6])).abs() < 1e-15);
    assert!((centre - (-0.5053)).abs() < 5e-4, "centre value {centre}");
}

#[test]
fn hartmann_global_minimum_by_local_search() {
    assert!((hartmann6(&HARTMANN6_MINIMIZER).unwrap() - HARTMANN6_MINIMUM).abs() < 1e-5);
    let lo = vec![0.0; 6];
    let hi = vec![1.0; 6];
    let cfg = LbfgsbConfig::default();
    let mut best = f64::INFINITY;
    for x0 in ScrambledSobol::new(6, 11).points(32) {
        let m = minimize(
            |x: &[f64], g: &mut [f64]| {
                let h = 1e-6;
                let mut xp = x.to_vec();
                for i in 0..6 {
                    let xi = x[i];
                    let up = (xi + h).min(1.0);
                    let dn = (xi - h).max(0.0);
                    xp[i] = up;
                    let fu = hartmann_reference(&xp);
                    xp[i] = dn;
                    let fd = hartmann_reference(&xp);
                    xp[i] = xi;
                    g[i] = (fu - fd) / (up - dn);
                }
                hartmann_reference(x)
            },
            &x0,
            &lo,
            &hi,
            &cfg,
        );
        best = best.min(m.f);
    }
    assert!((best - HARTMANN6_MINIMUM).abs() < 1e-4, "best {best}");
}

#[test]
fn offline_channel_has_same_argmin_on_grid() {
    let p = HartmannProblem { noise_sd: 0.0, ..Default::default() };
    let pts = ScrambledSobol::new(6, 5).points(512);
    let argmin = |channel: Channel| {
        pts.iter()
            .enumerate()
            .filter(|(_, x)| p.is_feasible(x))
            .min_by(|a, b| p.raw_values(a.1, channel).unwrap().0.total_cmp(&p.raw_values(b.1, channel).unwrap().0))
            .unwrap()
            .0
    };
    assert_eq!(argmin(Channel::Online), argmin(Channel::Offline));
}

#[test]
fn noisy_evaluation_is_unbiased() {
    let p = HartmannProblem::default();
    let x = [0.4; 6];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 10_000;
    let mut sum = [0.0; 2];
    for _ in 0..n {
        let e = p.evaluate(&x, Channel::Online, &mut rng).unwrap();
        sum[0] += e.values[0];
        sum[1] += e.values[1];
        assert!(e.noise_variances.iter().all(|v| (v - 0.01).abs() < 1e-15));
    }
    let truth = [-hartmann6(&x).unwrap(), 1.25 - (6.0 * 0.16f64).sqrt()];
    for k in 0..2 {
        // 4 standard errors
        assert!((sum[k] / n as f64 - truth[k]).abs() < 4.0 * 0.1 / (n as f64).sqrt());
    }
}

proptest! {
    #[test]
    fn transform_is_monotone_and_continuous(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        for t in [BiasTransform::OBJECTIVE, BiasTransform::CONSTRAINT] {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(offline_transform(lo, &t) <= offline_transform(hi, &t));
            let eps = 1e-9;
            prop_assert!((offline_transform(t.m + eps, &t) - offline_transform(t.m - eps, &t)).abs() < 1e-8);
        }
    }

    #[test]
    fn offline_preserves_feasibility(x in proptest::collection::vec(0.0f64..1.0, 6)) {
        let p = HartmannProblem { noise_sd: 0.0, ..Default::default() };
        let (_, g_on) = p.raw_values(&x, Channel::Online).unwrap();
        let (_, g_off) = p.raw_values(&x, Channel::Offline).unwrap();
        prop_assert_eq!(g_on <= 1.25, g_off <= 1.25);
    }
}

#[test]
fn curve_is_monotone_and_uses_true_values() {
    let cfg = BenchmarkConfig { fit_restarts: 1, batches: 2, qmc_samples: 16, thompson_draws: 200, ..Default::default() };
    let problem = cfg.problem();
    let trace = run_loop(&problem, &cfg.loop_config(Method::MtgpFull, 0)).unwrap();
    let curve = best_feasible_curve(&problem, &trace);
    assert_eq!(curve.len(), 2);
    assert!(curve[1] <= curve[0]);
    let online = trace.online_points();
    let best_true = online
        .iter()
        .filter(|x| problem.is_feasible(x))
        .map(|x| hartmann6(x).unwrap())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(curve[1], best_true);
}

#[test]
fn comparison_outputs_are_consistent() {
    let cfg = BenchmarkConfig {
        replicates: 2,
        batches: 2,
        fit_restarts: 1,
        qmc_samples: 16,
        thompson_draws: 200,
        seed: 40,
        ..Default::default()
    };
    let res = run_comparison(&cfg).unwrap();
    assert!(res.failures.is_empty());
    assert_eq!(res.methods.len(), 3);
    // same seed per replicate: identical initial online batch, so identical first point
    let firsts: Vec<Vec<f64>> = res.methods.iter().map(|m| m.curves.iter().map(|c| c[0]).collect()).collect();
    assert_eq!(firsts[0], firsts[1]);
    assert_eq!(firsts[0], firsts[2]);
    let mut csv = Vec::new();
    res.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
    let summary: serde_json::Value = serde_json::from_str(&res.summary_json().unwrap()).unwrap();
    assert_eq!(summary["methods"].as_array().unwrap().len(), 3);
}

#[test]
fn config_rejects_unknown_fields() {
    assert!(serde_json::from_str::<BenchmarkConfig>(r#"{"replicates": 3, "bogus": 1}"#).is_err());
    let c: BenchmarkConfig = serde_json::from_str(r#"{"n_T": 7, "n_S": 9}"#).unwrap();
    assert_eq!((c.n_t, c.n_s), (7, 9));
    assert!(BenchmarkConfig { batches: 0, ..Default::default() }.validate().is_err());
}
