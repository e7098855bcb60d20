use rand::Rng;
use rayon::prelude::*;

use super::resample::systematic_resample;
use super::AbcConfig;
use crate::models::StateSpaceModel;
use crate::{Error, Result, RngStream};

/// Particles handled by one random substream. Fixed so output does not depend
/// on the thread count.
pub const PARTICLE_BLOCK: usize = 256;

/// How a propagated particle is scored against an observation.
#[derive(Clone, Copy, Debug)]
pub enum Weighting<'a> {
    /// `log g(y_t | x_t)`.
    Exact,
    /// `log rho(y_t; psi(yhat), eps)` with `yhat` drawn from the model.
    Abc(&'a AbcConfig),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParticleSystem {
    pub particles: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// Normalised weights.
    pub weights: Vec<f64>,
    /// Ancestor of each particle at the last step.
    pub ancestors: Vec<usize>,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalises the log-weights. Returns `log sum_i exp(lw_i)`, or `None`
    /// when no weight is positive and finite.
    fn normalise(&mut self) -> Option<f64> {
        let m = self
            .log_weights
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return None;
        }
        self.weights.clear();
        let mut s = 0.0;
        for lw in &self.log_weights {
            let w = if lw.is_nan() { 0.0 } else { (lw - m).exp() };
            self.weights.push(w);
            s += w;
        }
        for w in &mut self.weights {
            *w /= s;
        }
        Some(m + s.ln())
    }

    /// `sum_i W_i x_i`.
    pub fn weighted_mean(&self) -> f64 {
        self.particles.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }
}

#[derive(Clone, Debug)]
pub struct FilterOutput {
    /// `-inf` when the filter degenerates.
    pub log_likelihood: f64,
    /// Filtered means of the state at `t = 1..T`; truncated at degeneration.
    pub filtered_states: Vec<f64>,
    pub degenerate: bool,
    pub final_system: ParticleSystem,
}

/// Bootstrap particle filter with systematic resampling at every step.
///
/// Randomness is drawn from `stream` forked per (step, block), so results are
/// reproducible whatever the number of worker threads.
pub fn bootstrap_filter<M: StateSpaceModel>(
    model: &M,
    observations: &[f64],
    weighting: Weighting<'_>,
    n: usize,
    stream: &RngStream,
) -> Result<FilterOutput> {
    if n < 2 {
        return Err(Error::Contract(format!("need at least 2 particles, got {n}")));
    }
    if matches!(weighting, Weighting::Exact) && !model.has_tractable_density() {
        return Err(Error::Unsupported(
            "exact weighting requires an evaluable observation density".into(),
        ));
    }

    let mut sys = ParticleSystem {
        particles: vec![0.0; n],
        log_weights: vec![0.0; n],
        weights: vec![1.0 / n as f64; n],
        ancestors: (0..n).collect(),
    };
    sys.particles
        .par_chunks_mut(PARTICLE_BLOCK)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut rng = stream.fork2(0, b as u64);
            for x in chunk {
                *x = model.sample_initial(&mut rng);
            }
        });

    let mut loglik = 0.0;
    let mut filtered = Vec::with_capacity(observations.len());
    let mut previous = vec![0.0; n];
    let log_n = (n as f64).ln();

    for (i, &y) in observations.iter().enumerate() {
        let t = i as u64 + 1;
        if i > 0 {
            let u: f64 = stream.fork2(t, u64::MAX).random();
            sys.ancestors = systematic_resample(&sys.weights, n, u)?;
        }
        std::mem::swap(&mut previous, &mut sys.particles);
        let ancestors = &sys.ancestors;
        let previous = &previous;
        sys.particles
            .par_chunks_mut(PARTICLE_BLOCK)
            .zip(sys.log_weights.par_chunks_mut(PARTICLE_BLOCK))
            .enumerate()
            .for_each(|(b, (xs, lws))| {
                let mut rng = stream.fork2(t, b as u64);
                let start = b * PARTICLE_BLOCK;
                for (k, (x, lw)) in xs.iter_mut().zip(lws.iter_mut()).enumerate() {
                    let xn = model.transition(previous[ancestors[start + k]], &mut rng);
                    *x = xn;
                    *lw = match weighting {
                        Weighting::Exact => model.log_observation_density(y, xn).unwrap_or(f64::NAN),
                        Weighting::Abc(cfg) => {
                            let yhat = model.simulate_observation(xn, &mut rng);
                            cfg.log_kernel(y, cfg.psi.apply(yhat))
                        }
                    };
                }
            });
        match sys.normalise() {
            Some(lse) => {
                loglik += lse - log_n;
                filtered.push(sys.weighted_mean());
            }
            None => {
                return Ok(FilterOutput {
                    log_likelihood: f64::NEG_INFINITY,
                    filtered_states: filtered,
                    degenerate: true,
                    final_system: sys,
                });
            }
        }
    }

    Ok(FilterOutput {
        log_likelihood: loglik,
        filtered_states: filtered,
        degenerate: false,
        final_system: sys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{simulate_ssm, LinearGaussian};

    #[test]
    fn matches_kalman_filter_on_linear_gaussian_model() {
        let model = LinearGaussian::new(0.9, 0.5, 0.7).unwrap();
        let data = simulate_ssm(&model, 100, &mut RngStream::new(4));
        let exact = model.kalman_log_likelihood(&data.observations);
        let reps = 40;
        let est: Vec<f64> = (0..reps)
            .map(|r| {
                bootstrap_filter(&model, &data.observations, Weighting::Exact, 1000, &RngStream::new(r))
                    .unwrap()
                    .log_likelihood
            })
            .collect();
        let mean = est.iter().sum::<f64>() / reps as f64;
        let sd = (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        // Log of an unbiased estimator is biased low by about var/2.
        assert!((mean - exact).abs() < 3.0 * sd / (reps as f64).sqrt() + sd * sd, "{mean} vs {exact}, sd {sd}");
        assert!(sd < 1.0);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let model = LinearGaussian::new(0.9, 0.5, 0.7).unwrap();
        let data = simulate_ssm(&model, 50, &mut RngStream::new(4));
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    bootstrap_filter(&model, &data.observations, Weighting::Exact, 1500, &RngStream::new(9))
                        .unwrap()
                })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
        assert_eq!(a.filtered_states, b.filtered_states);
    }

    #[test]
    fn degenerate_filter_reports_neg_infinity() {
        struct Impossible;
        impl StateSpaceModel for Impossible {
            fn sample_initial<R: Rng + ?Sized>(&self, _: &mut R) -> f64 {
                0.0
            }
            fn transition<R: Rng + ?Sized>(&self, x: f64, _: &mut R) -> f64 {
                x
            }
            fn simulate_observation<R: Rng + ?Sized>(&self, x: f64, _: &mut R) -> f64 {
                x
            }
            fn log_observation_density(&self, y: f64, _: f64) -> Option<f64> {
                Some(if y > 0.0 { f64::NEG_INFINITY } else { 0.0 })
            }
        }
        let out = bootstrap_filter(&Impossible, &[-1.0, 1.0, -1.0], Weighting::Exact, 10, &RngStream::new(1)).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.log_likelihood, f64::NEG_INFINITY);
        assert_eq!(out.filtered_states.len(), 1);
    }

    #[test]
    fn weights_are_normalised() {
        let model = LinearGaussian::new(0.5, 1.0, 1.0).unwrap();
        let out = bootstrap_filter(&model, &[0.3, -0.2], Weighting::Exact, 600, &RngStream::new(2)).unwrap();
        let s: f64 = out.final_system.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(out.final_system.len(), 600);
    }
}
