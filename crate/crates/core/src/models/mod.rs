//! Stochastic-volatility state-space models, their priors and the
//! alpha-stable simulator.

mod prior;
mod search_box;
mod stable;

pub use prior::{ComponentPrior, PriorSpec};
pub use search_box::SearchBox;
pub use stable::{stable_sample, stable_sample_unchecked};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    /// Stochastic volatility with Gaussian log-returns.
    Gsv,
    /// Stochastic volatility with symmetric alpha-stable log-returns.
    Asv,
}

impl ModelId {
    pub fn component_names(self) -> &'static [&'static str] {
        match self {
            ModelId::Gsv => &["mu", "phi", "sigma_v"],
            ModelId::Asv => &["mu", "phi", "sigma_v", "alpha"],
        }
    }

    pub fn dim(self) -> usize {
        self.component_names().len()
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelId::Gsv => "gsv",
            ModelId::Asv => "asv",
        })
    }
}

/// How the log-volatility maps to the alpha-stable scale in the ASV model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StableScale {
    /// gamma_t = exp(x_t / 2); the alpha = 2 law has variance 2 exp(x_t).
    #[default]
    Stable,
    /// gamma_t = exp(x_t / 2) / sqrt(2); the alpha = 2 law has variance exp(x_t).
    VarianceMatched,
}

impl StableScale {
    #[inline]
    pub fn scale(self, x: f64) -> f64 {
        match self {
            StableScale::Stable => (0.5 * x).exp(),
            StableScale::VarianceMatched => (0.5 * x).exp() * std::f64::consts::FRAC_1_SQRT_2,
        }
    }
}

/// A validated parameter point for one of the SV models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    model: ModelId,
    values: Vec<f64>,
}

impl ThetaVector {
    pub fn new(model: ModelId, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.dim() {
            return Err(Error::Domain(format!(
                "{model} expects {} components, got {}",
                model.dim(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite parameter in {values:?}")));
        }
        let phi = values[1];
        if phi <= -1.0 || phi >= 1.0 {
            return Err(Error::Domain(format!("phi = {phi} outside (-1, 1)")));
        }
        if values[2] <= 0.0 {
            return Err(Error::Domain(format!("sigma_v = {} must be positive", values[2])));
        }
        if model == ModelId::Asv {
            let alpha = values[3];
            // alpha = 2 is the Gaussian member of the family and is accepted.
            if alpha <= 0.0 || alpha > 2.0 {
                return Err(Error::Domain(format!("alpha = {alpha} outside (0, 2]")));
            }
        }
        Ok(Self { model, values })
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &'static [&'static str] {
        self.model.component_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names().iter().position(|n| *n == name).map(|i| self.values[i])
    }

    pub fn mu(&self) -> f64 {
        self.values[0]
    }

    pub fn phi(&self) -> f64 {
        self.values[1]
    }

    pub fn sigma_v(&self) -> f64 {
        self.values[2]
    }

    pub fn alpha(&self) -> Option<f64> {
        self.values.get(3).copied()
    }
}

/// A scalar-state model that can be simulated and, optionally, evaluated.
pub trait StateSpaceModel: Sync {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    fn transition<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64;

    fn simulate_observation<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64;

    /// `log g(y | x)`, or `None` when the observation density is intractable.
    fn log_observation_density(&self, y: f64, x: f64) -> Option<f64>;

    fn has_tractable_density(&self) -> bool {
        self.log_observation_density(0.0, 0.0).is_some()
    }
}

/// Mean-reverting log-volatility shared by the GSV and ASV models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogVolatility {
    pub mu: f64,
    pub phi: f64,
    pub sigma_v: f64,
    stationary_sd: f64,
}

impl LogVolatility {
    pub fn new(mu: f64, phi: f64, sigma_v: f64) -> Result<Self> {
        if !(mu.is_finite() && phi.is_finite() && sigma_v.is_finite()) {
            return Err(Error::Domain("non-finite log-volatility parameter".into()));
        }
        if phi * phi >= 1.0 {
            return Err(Error::Domain(format!(
                "phi = {phi}: stationary variance undefined for phi^2 >= 1"
            )));
        }
        if sigma_v <= 0.0 {
            return Err(Error::Domain(format!("sigma_v = {sigma_v} must be positive")));
        }
        Ok(Self {
            mu,
            phi,
            sigma_v,
            stationary_sd: sigma_v / (1.0 - phi * phi).sqrt(),
        })
    }

    #[inline]
    fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu + self.stationary_sd * z
    }

    #[inline]
    fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu + self.phi * (x - self.mu) + self.sigma_v * z
    }
}

/// `log N(y; 0, exp(x))`.
#[inline]
pub fn gsv_log_obs_density(y: f64, x: f64) -> f64 {
    -HALF_LN_2PI - 0.5 * x - 0.5 * y * y * (-x).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSv {
    pub volatility: LogVolatility,
}

impl GaussianSv {
    pub fn new(mu: f64, phi: f64, sigma_v: f64) -> Result<Self> {
        Ok(Self {
            volatility: LogVolatility::new(mu, phi, sigma_v)?,
        })
    }
}

impl StateSpaceModel for GaussianSv {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.volatility.initial(rng)
    }

    fn transition<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.volatility.step(x, rng)
    }

    fn simulate_observation<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        (0.5 * x).exp() * z
    }

    fn log_observation_density(&self, y: f64, x: f64) -> Option<f64> {
        Some(gsv_log_obs_density(y, x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaStableSv {
    pub volatility: LogVolatility,
    pub alpha: f64,
    pub scale: StableScale,
}

impl AlphaStableSv {
    pub fn new(mu: f64, phi: f64, sigma_v: f64, alpha: f64, scale: StableScale) -> Result<Self> {
        stable::check_alpha(alpha)?;
        Ok(Self {
            volatility: LogVolatility::new(mu, phi, sigma_v)?,
            alpha,
            scale,
        })
    }
}

impl StateSpaceModel for AlphaStableSv {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.volatility.initial(rng)
    }

    fn transition<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.volatility.step(x, rng)
    }

    fn simulate_observation<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        stable_sample_unchecked(self.alpha, self.scale.scale(x), rng)
    }

    fn log_observation_density(&self, _y: f64, _x: f64) -> Option<f64> {
        None
    }
}

/// `x_{t+1} = phi x_t + sigma_v eta_t`, `y_t = x_t + sigma_e e_t`.
///
/// Not one of the SV models; its likelihood is available in closed form from
/// the Kalman filter, which makes it the reference model for filter checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussian {
    pub phi: f64,
    pub sigma_v: f64,
    pub sigma_e: f64,
}

impl LinearGaussian {
    pub fn new(phi: f64, sigma_v: f64, sigma_e: f64) -> Result<Self> {
        if phi * phi >= 1.0 || sigma_v <= 0.0 || sigma_e <= 0.0 {
            return Err(Error::Domain(format!(
                "invalid linear-Gaussian parameters ({phi}, {sigma_v}, {sigma_e})"
            )));
        }
        Ok(Self { phi, sigma_v, sigma_e })
    }

    pub fn stationary_variance(&self) -> f64 {
        self.sigma_v * self.sigma_v / (1.0 - self.phi * self.phi)
    }

    /// Exact log-likelihood of `y_{1:T}` by the Kalman filter.
    pub fn kalman_log_likelihood(&self, y: &[f64]) -> f64 {
        let q = self.sigma_v * self.sigma_v;
        let r = self.sigma_e * self.sigma_e;
        // Filtered moments of x_0.
        let (mut m, mut p) = (0.0, self.stationary_variance());
        let mut ll = 0.0;
        for &obs in y {
            let m_pred = self.phi * m;
            let p_pred = self.phi * self.phi * p + q;
            let s = p_pred + r;
            let innov = obs - m_pred;
            ll += -HALF_LN_2PI - 0.5 * s.ln() - 0.5 * innov * innov / s;
            let gain = p_pred / s;
            m = m_pred + gain * innov;
            p = (1.0 - gain) * p_pred;
        }
        ll
    }
}

impl StateSpaceModel for LinearGaussian {
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.stationary_variance().sqrt() * z
    }

    fn transition<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.phi * x + self.sigma_v * z
    }

    fn simulate_observation<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        x + self.sigma_e * z
    }

    fn log_observation_density(&self, y: f64, x: f64) -> Option<f64> {
        let e = (y - x) / self.sigma_e;
        Some(-HALF_LN_2PI - self.sigma_e.ln() - 0.5 * e * e)
    }
}

/// A concrete SV model built from a parameter point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SvModel {
    Gsv(GaussianSv),
    Asv(AlphaStableSv),
}

impl SvModel {
    pub fn from_values(model: ModelId, values: &[f64], scale: StableScale) -> Result<Self> {
        let theta = ThetaVector::new(model, values.to_vec())?;
        Self::from_theta(&theta, scale)
    }

    pub fn from_theta(theta: &ThetaVector, scale: StableScale) -> Result<Self> {
        match theta.model() {
            ModelId::Gsv => Ok(SvModel::Gsv(GaussianSv::new(
                theta.mu(),
                theta.phi(),
                theta.sigma_v(),
            )?)),
            ModelId::Asv => Ok(SvModel::Asv(AlphaStableSv::new(
                theta.mu(),
                theta.phi(),
                theta.sigma_v(),
                theta.alpha().expect("validated"),
                scale,
            )?)),
        }
    }
}

/// Simulated path: `states` holds `x_0..x_T`, `observations` holds `y_1..y_T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub states: Vec<f64>,
    pub observations: Vec<f64>,
}

pub fn simulate_ssm<M: StateSpaceModel, R: Rng + ?Sized>(model: &M, length: usize, rng: &mut R) -> Simulation {
    let mut states = Vec::with_capacity(length + 1);
    let mut observations = Vec::with_capacity(length);
    let mut x = model.sample_initial(rng);
    states.push(x);
    for _ in 0..length {
        x = model.transition(x, rng);
        states.push(x);
        observations.push(model.simulate_observation(x, rng));
    }
    Simulation { states, observations }
}

/// Simulate `length` observations from the SV model at `theta`.
pub fn simulate<R: Rng + ?Sized>(
    theta: &ThetaVector,
    length: usize,
    scale: StableScale,
    rng: &mut R,
) -> Result<Simulation> {
    if length == 0 {
        return Err(Error::Domain("simulation length must be at least 1".into()));
    }
    Ok(match SvModel::from_theta(theta, scale)? {
        SvModel::Gsv(m) => simulate_ssm(&m, length, rng),
        SvModel::Asv(m) => simulate_ssm(&m, length, rng),
    })
}
