use gpo_abc::models::{simulate, stable_sample, ModelId, PriorSpec, StableScale, ThetaVector};
use gpo_abc::smc::{bpf_log_posterior, AbcConfig, Psi, SmcEvaluator};
use gpo_abc::{Evaluator, RngStream};

const THETA: [f64; 3] = [0.2, 0.96, 0.15];

fn gsv_data(t: usize, seed: u64) -> Vec<f64> {
    let theta = ThetaVector::new(ModelId::Gsv, THETA.to_vec()).unwrap();
    simulate(&theta, t, StableScale::Stable, &mut RngStream::new(seed))
        .unwrap()
        .observations
}

/// log p(y_1) by Simpson quadrature over the stationary state marginal.
fn single_observation_oracle(y: f64) -> f64 {
    let [mu, phi, sigma] = THETA;
    let sd = sigma / (1.0 - phi * phi).sqrt();
    let (lo, hi, n) = (mu - 12.0 * sd, mu + 12.0 * sd, 20_000);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| {
        let prior = (-0.5 * ((x - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let obs = (-0.5 * y * y * (-x).exp()).exp() / (2.0 * std::f64::consts::PI * x.exp()).sqrt();
        prior * obs
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    (s * h / 3.0).ln()
}

#[test]
fn single_observation_likelihood_is_unbiased() {
    let prior = PriorSpec::default_for(ModelId::Gsv);
    for y in [0.3, -1.7, 4.0] {
        let oracle = single_observation_oracle(y);
        let likelihoods: Vec<f64> = (0..200)
            .map(|s| {
                let (est, _) = bpf_log_posterior(&THETA, &[y], 200, &prior, &RngStream::new(s)).unwrap();
                est.log_likelihood.exp()
            })
            .collect();
        let mean = likelihoods.iter().sum::<f64>() / 200.0;
        let var = likelihoods.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / 199.0;
        let se = (var / 200.0).sqrt();
        let z = (mean - oracle.exp()) / se.max(1e-12 * oracle.exp());
        assert!(z.abs() < 3.5, "y = {y}: z = {z}");
    }
}

#[test]
fn estimator_variance_scales_inversely_with_particles() {
    let y = gsv_data(200, 3);
    let prior = PriorSpec::default_for(ModelId::Gsv);
    let variance = |n: usize| {
        let xs: Vec<f64> = (0..60)
            .map(|s| bpf_log_posterior(&THETA, &y, n, &prior, &RngStream::new(1000 + s)).unwrap().0.xi)
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let ratio = variance(100) / variance(400);
    assert!((2.0..8.0).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn evaluator_results_do_not_depend_on_thread_count() {
    let y = gsv_data(300, 9);
    let cfg = AbcConfig::new(0.2, Psi::Identity).unwrap();
    let ev = SmcEvaluator::abc(
        &y,
        700,
        cfg,
        PriorSpec::default_for(ModelId::Gsv),
        StableScale::Stable,
        &mut RngStream::new(2),
    )
    .unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ev.log_posterior(&THETA, &mut RngStream::new(77)).unwrap())
    };
    assert_eq!(run(1).to_bits(), run(4).to_bits());
}

#[test]
fn asv_abc_estimates_are_finite_and_prior_outside_is_neg_inf() {
    let theta = ThetaVector::new(ModelId::Asv, vec![0.2, 0.96, 0.15, 1.8]).unwrap();
    let y = simulate(&theta, 200, StableScale::Stable, &mut RngStream::new(4))
        .unwrap()
        .observations;
    let cfg = AbcConfig::new(0.1, Psi::Arctan).unwrap();
    let ev = SmcEvaluator::abc(
        &y,
        500,
        cfg,
        PriorSpec::default_for(ModelId::Asv),
        StableScale::Stable,
        &mut RngStream::new(5),
    )
    .unwrap();
    let xi = ev.log_posterior(theta.values(), &mut RngStream::new(6)).unwrap();
    assert!(xi.is_finite());
    let outside = ev.log_posterior(&[0.2, 0.96, -0.1, 1.8], &mut RngStream::new(6)).unwrap();
    assert_eq!(outside, f64::NEG_INFINITY);
}

#[test]
fn gaussian_limit_of_stable_sampler() {
    let mut rng = RngStream::new(12);
    let gamma = 0.7;
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| stable_sample(2.0, gamma, &mut rng).unwrap()).collect();
    let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
    assert!((var / (2.0 * gamma * gamma) - 1.0).abs() < 0.02);
    // Heavier tails below alpha = 2: more mass beyond five scale units.
    let tail = |alpha: f64| {
        let mut rng = RngStream::new(13);
        (0..n)
            .filter(|_| stable_sample(alpha, 1.0, &mut rng).unwrap().abs() > 5.0)
            .count()
    };
    assert!(tail(1.5) > 10 * tail(2.0).max(1));
}
