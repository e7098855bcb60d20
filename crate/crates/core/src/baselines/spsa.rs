use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evaluator::Evaluator;
use crate::models::{ModelId, SearchBox};
use crate::serde_ext::log_value;
use crate::{Error, Result, RngStream};

const KEY_EVALUATION: u64 = 2;
const KEY_PERTURBATION: u64 = 6;

/// Coordinate in which SPSA takes its steps for one parameter component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoordinateMap {
    Identity,
    /// `atanh`, for a component in `(-1, 1)`.
    Atanh,
    /// `log`, for a positive component.
    Log,
    /// Logit of the position within `(lower, upper)`.
    Logit { lower: f64, upper: f64 },
}

impl CoordinateMap {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            CoordinateMap::Identity => x,
            CoordinateMap::Atanh => x.atanh(),
            CoordinateMap::Log => x.ln(),
            CoordinateMap::Logit { lower, upper } => {
                let s = (x - lower) / (upper - lower);
                (s / (1.0 - s)).ln()
            }
        }
    }

    pub fn inverse(self, u: f64) -> f64 {
        match self {
            CoordinateMap::Identity => u,
            CoordinateMap::Atanh => u.tanh(),
            CoordinateMap::Log => u.exp(),
            CoordinateMap::Logit { lower, upper } => lower + (upper - lower) / (1.0 + (-u).exp()),
        }
    }

    /// Maps keeping every probe inside the volatility models' parameter space.
    pub fn for_model(model: ModelId) -> Vec<Self> {
        let mut v = vec![CoordinateMap::Identity, CoordinateMap::Atanh, CoordinateMap::Log];
        if model == ModelId::Asv {
            v.push(CoordinateMap::Logit { lower: 0.0, upper: 2.0 });
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpsaConfig {
    pub a: f64,
    pub c: f64,
    #[serde(rename = "big_a")]
    pub big_a: f64,
    pub alpha_exp: f64,
    pub gamma_exp: f64,
    pub iterations: usize,
    /// One map per component; identity everywhere when empty.
    #[serde(default)]
    pub coordinates: Vec<CoordinateMap>,
}

impl Default for SpsaConfig {
    /// `a = 0.001`, `c = 0.30`, `A = 35`, exponents 0.602 and 0.101.
    fn default() -> Self {
        Self {
            a: 0.001,
            c: 0.30,
            big_a: 35.0,
            alpha_exp: 0.602,
            gamma_exp: 0.101,
            iterations: 350,
            coordinates: Vec::new(),
        }
    }
}

impl SpsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.c > 0.0) {
            return Err(Error::Config("SPSA gains a and c must be positive".into()));
        }
        if !(self.big_a >= 0.0) {
            return Err(Error::Config("SPSA stability constant A must be >= 0".into()));
        }
        for e in [self.alpha_exp, self.gamma_exp] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("SPSA exponent {e} outside (0, 1]")));
            }
        }
        Ok(())
    }

    pub fn step_gain(&self, n: usize) -> f64 {
        self.a / (self.big_a + n as f64 + 1.0).powf(self.alpha_exp)
    }

    pub fn probe_gain(&self, n: usize) -> f64 {
        self.c / (n as f64 + 1.0).powf(self.gamma_exp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpsaRow {
    /// Iterations completed.
    pub iteration: usize,
    /// Iterate after this step.
    pub theta: Vec<f64>,
    #[serde(with = "log_value")]
    pub xi_plus: f64,
    #[serde(with = "log_value")]
    pub xi_minus: f64,
    pub skipped: bool,
    /// Posterior evaluations used so far.
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpsaResult {
    pub theta0: Vec<f64>,
    pub trace: Vec<SpsaRow>,
    pub evaluations: usize,
}

impl SpsaResult {
    pub fn final_theta(&self) -> &[f64] {
        self.trace.last().map(|r| r.theta.as_slice()).unwrap_or(&self.theta0)
    }
}

/// Simultaneous-perturbation stochastic approximation ascent on the
/// log-posterior, two estimates per iteration, iterates clamped to the box.
///
/// A step is skipped when either probe estimate is not finite.
pub fn spsa_run<E: Evaluator + ?Sized>(
    evaluator: &E,
    cfg: &SpsaConfig,
    theta0: &[f64],
    bbox: &SearchBox,
    stream: &RngStream,
) -> Result<SpsaResult> {
    cfg.validate()?;
    let p = theta0.len();
    if p != bbox.dim() {
        return Err(Error::Contract(format!("start has {p} components, box has {}", bbox.dim())));
    }
    if !bbox.contains(theta0) {
        return Err(Error::Contract(format!("start {theta0:?} outside the search box")));
    }
    let maps = if cfg.coordinates.is_empty() {
        vec![CoordinateMap::Identity; p]
    } else if cfg.coordinates.len() == p {
        cfg.coordinates.clone()
    } else {
        return Err(Error::Config(format!("{} coordinate maps for {p} components", cfg.coordinates.len())));
    };
    let to_theta = |u: &[f64]| -> Vec<f64> { u.iter().zip(&maps).map(|(v, m)| m.inverse(*v)).collect() };
    let to_u = |t: &[f64]| -> Vec<f64> { t.iter().zip(&maps).map(|(v, m)| m.forward(*v)).collect() };
    let eval = |theta: &[f64], i: usize| -> f64 {
        let mut s = stream.fork2(KEY_EVALUATION, i as u64);
        match evaluator.log_posterior(theta, &mut s) {
            Ok(v) if !v.is_nan() => v,
            Ok(_) => f64::NEG_INFINITY,
            Err(e) => {
                log::warn!("SPSA evaluation {i} failed: {e}");
                f64::NEG_INFINITY
            }
        }
    };

    let mut u = to_u(theta0);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("start {theta0:?} outside the coordinate maps' domain")));
    }
    let mut trace = Vec::with_capacity(cfg.iterations);
    for n in 0..cfg.iterations {
        let an = cfg.step_gain(n);
        let cn = cfg.probe_gain(n);
        let mut rng = stream.fork2(KEY_PERTURBATION, n as u64);
        let delta: Vec<f64> = (0..p).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let plus: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + cn * d).collect();
        let minus: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x - cn * d).collect();
        let xi_plus = eval(&to_theta(&plus), 2 * n);
        let xi_minus = eval(&to_theta(&minus), 2 * n + 1);
        let skipped = !(xi_plus.is_finite() && xi_minus.is_finite());
        if skipped {
            log::warn!("SPSA iteration {n}: non-finite probe, step skipped");
        } else {
            let diff = (xi_plus - xi_minus) / (2.0 * cn);
            let mut next: Vec<f64> = u.iter().zip(&delta).map(|(x, d)| x + an * diff / d).collect();
            let mut theta = to_theta(&next);
            bbox.clamp(&mut theta);
            let back = to_u(&theta);
            // Clamping onto a face where a map diverges keeps the old coordinate.
            for (j, b) in back.iter().enumerate() {
                next[j] = if b.is_finite() { *b } else { u[j] };
            }
            u = next;
        }
        trace.push(SpsaRow {
            iteration: n + 1,
            theta: to_theta(&u),
            xi_plus,
            xi_minus,
            skipped,
            evaluations: 2 * (n + 1),
        });
    }
    Ok(SpsaResult {
        theta0: theta0.to_vec(),
        evaluations: 2 * cfg.iterations,
        trace,
    })
}
