use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kendall::kendall_tau_to_correlation;
use super::residuals::{filtered_residuals, probability_transform, EmpiricalCdf};
use super::tcopula::fit_t_copula_dof;
use super::var::{backtest, Backtest, CopulaModel, ResidualSimulation};
use crate::gpo::{extract_laplace, gpo_run, GpoConfig, LaplacePosterior};
use crate::models::{ModelId, PriorSpec, SearchBox, StableScale};
use crate::smc::{perturb_observations, AbcConfig, SmcEvaluator};
use crate::{Error, Result, RngStream};

const KEY_PERTURB_FIT: u64 = 10;
const KEY_GPO: u64 = 11;
const KEY_PERTURB_FILTER: u64 = 12;
const KEY_FILTER: u64 = 13;
const KEY_MARGIN: u64 = 30;
const KEY_VAR: u64 = 20;

/// Which log-volatility scales the simulated residuals at period `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolatilityTiming {
    /// `xhat_t`, the filtered estimate using data up to and including `t`.
    #[default]
    Filtered,
    /// `mu + phi (xhat_{t-1} - mu)`, using data up to `t - 1` only.
    Predictive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSettings {
    pub prior: PriorSpec,
    pub search_box: SearchBox,
    pub particles: usize,
    /// `None` runs the exact filter, which needs the Gaussian model.
    pub abc: Option<AbcConfig>,
    #[serde(default)]
    pub scale: StableScale,
    pub gpo: GpoConfig,
}

impl MarginSettings {
    pub fn model(&self) -> ModelId {
        self.prior.model()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub margin: MarginSettings,
    /// Leading observations used for estimation; the rest are held out.
    pub estimation_length: usize,
    pub level: f64,
    /// Equal weights when absent.
    pub weights: Option<Vec<f64>>,
    pub simulations: usize,
    pub dof_bounds: (f64, f64),
    #[serde(default)]
    pub volatility: VolatilityTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginFit {
    pub asset: String,
    pub model: ModelId,
    pub theta: Vec<f64>,
    pub laplace: LaplacePosterior,
    /// Filtered log-volatility over the whole series.
    pub log_volatility: Vec<f64>,
    /// Residuals over the estimation period.
    pub residuals: Vec<f64>,
    pub evaluations: usize,
}

impl MarginFit {
    pub fn empirical_cdf(&self) -> Result<EmpiricalCdf> {
        EmpiricalCdf::new(&self.residuals)
    }

    fn volatility_at(&self, t: usize, timing: VolatilityTiming) -> f64 {
        match timing {
            VolatilityTiming::Filtered => self.log_volatility[t],
            VolatilityTiming::Predictive => {
                let (mu, phi) = (self.theta[0], self.theta[1]);
                mu + phi * (self.log_volatility[t - 1] - mu)
            }
        }
    }
}

/// Fits one margin on `y[..estimation_length]` and filters the whole series
/// at the MAP estimate.
pub fn fit_margin(
    asset: &str,
    y: &[f64],
    estimation_length: usize,
    settings: &MarginSettings,
    stream: &RngStream,
) -> Result<MarginFit> {
    if estimation_length < 2 || estimation_length > y.len() {
        return Err(Error::Config(format!(
            "estimation length {estimation_length} invalid for a series of {}",
            y.len()
        )));
    }
    let est = &y[..estimation_length];
    let evaluator = match settings.abc {
        Some(cfg) => SmcEvaluator::abc(
            est,
            settings.particles,
            cfg,
            settings.prior.clone(),
            settings.scale,
            &mut stream.fork(KEY_PERTURB_FIT),
        )?,
        None => SmcEvaluator::exact(est.to_vec(), settings.particles, settings.prior.clone())?,
    };
    let (state, model) = gpo_run(&evaluator, &settings.search_box, &settings.gpo, &stream.fork(KEY_GPO))?;
    let laplace = extract_laplace(&model, &settings.search_box, &settings.gpo.map_direct)?;
    let theta = laplace.theta_map.clone();

    let filter = match settings.abc {
        Some(cfg) => {
            let perturbed = perturb_observations(y, &cfg, &mut stream.fork(KEY_PERTURB_FILTER));
            crate::smc::smc_abc_log_posterior(
                &theta,
                &perturbed,
                settings.particles,
                &cfg,
                &settings.prior,
                settings.scale,
                &stream.fork(KEY_FILTER),
            )?
        }
        None => crate::smc::bpf_log_posterior(&theta, y, settings.particles, &settings.prior, &stream.fork(KEY_FILTER))?,
    };
    let (estimate, xhat) = filter;
    if estimate.degenerate || xhat.len() != y.len() {
        return Err(Error::Numerical(format!("filter degenerated at the MAP estimate for {asset}")));
    }
    let residuals = filtered_residuals(est, &xhat[..estimation_length])?;
    Ok(MarginFit {
        asset: asset.to_string(),
        model: settings.model(),
        theta,
        laplace,
        log_volatility: xhat,
        residuals,
        evaluations: state.evaluations(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarRecord {
    /// Index into the full series.
    pub t: usize,
    pub var: f64,
    pub realised: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub margins: Vec<MarginFit>,
    pub copula: CopulaModel,
    pub weights: Vec<f64>,
    pub level: f64,
    pub series: Vec<VarRecord>,
    pub backtest: Backtest,
}

/// Copula from the margins' estimation-period residuals.
pub fn fit_copula(margins: &[MarginFit], dof_bounds: (f64, f64)) -> Result<CopulaModel> {
    let names: Vec<String> = margins.iter().map(|m| m.asset.clone()).collect();
    let columns = margins
        .iter()
        .map(|m| probability_transform(&m.residuals))
        .collect::<Result<Vec<_>>>()?;
    let (r, repaired) = kendall_tau_to_correlation(&columns, &names)?;
    let t = columns[0].len();
    let rows: Vec<Vec<f64>> = (0..t).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let dof = fit_t_copula_dof(&rows, &r, dof_bounds.0, dof_bounds.1)?;
    Ok(CopulaModel {
        assets: names,
        correlation: (0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect(),
        dof: dof.nu,
        dof_on_boundary: dof.on_boundary,
        repaired,
    })
}

/// Margins in parallel, copula fit, VaR over the held-out periods, back-test.
pub fn run_var_pipeline(assets: &[(String, Vec<f64>)], cfg: &PipelineConfig, stream: &RngStream) -> Result<PipelineResult> {
    let d = assets.len();
    if d < 2 {
        return Err(Error::Config("the copula stage needs at least two assets".into()));
    }
    let t_all = assets[0].1.len();
    if assets.iter().any(|(_, y)| y.len() != t_all) {
        return Err(Error::Contract("asset series must be aligned".into()));
    }
    if cfg.estimation_length >= t_all {
        return Err(Error::Config("no held-out periods after the estimation window".into()));
    }
    let weights = cfg.weights.clone().unwrap_or_else(|| vec![1.0 / d as f64; d]);
    if weights.len() != d || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config("portfolio weights must match the assets and sum to 1".into()));
    }
    let margins: Vec<MarginFit> = assets
        .par_iter()
        .enumerate()
        .map(|(j, (name, y))| {
            log::info!("fitting margin {name}");
            fit_margin(name, y, cfg.estimation_length, &cfg.margin, &stream.fork2(KEY_MARGIN, j as u64))
        })
        .collect::<Result<_>>()?;
    let copula = fit_copula(&margins, cfg.dof_bounds)?;
    let cdfs = margins.iter().map(MarginFit::empirical_cdf).collect::<Result<Vec<_>>>()?;
    let sim = ResidualSimulation::new(&copula, &cdfs, cfg.simulations, &stream.fork(KEY_VAR))?;

    let mut series = Vec::with_capacity(t_all - cfg.estimation_length);
    for t in cfg.estimation_length..t_all {
        let xhat: Vec<f64> = margins.iter().map(|m| m.volatility_at(t, cfg.volatility)).collect();
        let var = sim.value_at_risk(&xhat, &weights, cfg.level)?;
        let realised: f64 = assets.iter().zip(&weights).map(|((_, y), w)| w * y[t]).sum();
        series.push(VarRecord {
            t,
            var,
            realised,
            violation: false,
        });
    }
    let var: Vec<f64> = series.iter().map(|r| r.var).collect();
    let realised: Vec<f64> = series.iter().map(|r| r.realised).collect();
    let bt = backtest(&var, &realised, cfg.level)?;
    for (r, f) in series.iter_mut().zip(&bt.flags) {
        r.violation = *f;
    }
    Ok(PipelineResult {
        margins,
        copula,
        weights,
        level: cfg.level,
        series,
        backtest: bt,
    })
}
