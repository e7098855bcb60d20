//! Run configuration: a TOML document with one optional section per stage.
//!
//! Missing values are filled in by [`RunConfig::resolve`]; the resolved
//! document is written back into every run directory and reproduces the run
//! when passed to `--config` again.

use std::path::{Path, PathBuf};

use gpo_abc::baselines::{CoordinateMap, PmhConfig, SpsaConfig};
use gpo_abc::copula::VolatilityTiming;
use gpo_abc::gpo::{AcquisitionConfig, GpoConfig, JitterBoundary};
use gpo_abc::models::{ComponentPrior, ModelId, PriorSpec, SearchBox, StableScale};
use gpo_abc::optim::DirectBudget;
use gpo_abc::smc::{AbcConfig, AbcKernel, Psi};
use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Overridden by `--seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpo: Option<GpoSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmh: Option<PmhSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spsa: Option<SpsaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<VarSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtest: Option<BacktestSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export: Option<ExportSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_model")]
    pub id: ModelId,
    #[serde(default)]
    pub scale: StableScale,
    /// One entry per component; the built-in prior when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<ComponentPrior>>,
    /// `[lower, upper]` per component; the built-in box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_box: Option<Vec<[f64; 2]>>,
}

fn default_model() -> ModelId {
    ModelId::Gsv
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            id: default_model(),
            scale: StableScale::default(),
            prior: None,
            search_box: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// `y_t = 100 (log s_t - log s_{t-1})`.
    Prices,
    Returns,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSection {
    Simulated {
        /// Generating model; `model.id` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelId>,
        theta: Vec<f64>,
        length: usize,
        #[serde(default = "one")]
        assets: usize,
    },
    Csv {
        path: PathBuf,
        mode: InputMode,
        #[serde(default = "default_date_column")]
        date_column: String,
        columns: Vec<String>,
    },
}

fn one() -> usize {
    1
}

fn default_date_column() -> String {
    "date".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_particles")]
    pub particles: usize,
    /// ABC tolerance; the exact filter is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Psi>,
}

fn default_particles() -> usize {
    2000
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            particles: default_particles(),
            epsilon: None,
            psi: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpoSection {
    pub initial_design: usize,
    pub iterations: usize,
    pub refit_interval: usize,
    pub hyper_restarts: usize,
    pub zeta: f64,
    /// Diagonal of the jitter covariance; `0.01` per component when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_variance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ei_threshold: Option<f64>,
    pub jitter_boundary: JitterBoundary,
    pub acquisition_evaluations: usize,
    pub map_evaluations: usize,
}

impl Default for GpoSection {
    fn default() -> Self {
        let d = GpoConfig::default_for_dim(1);
        Self {
            initial_design: d.initial_design,
            iterations: d.iterations,
            refit_interval: d.refit_interval,
            hyper_restarts: d.hyper_restarts,
            zeta: d.acquisition.zeta,
            jitter_variance: None,
            ei_threshold: None,
            jitter_boundary: d.acquisition.boundary,
            acquisition_evaluations: d.acquisition.direct.max_evaluations,
            map_evaluations: d.map_direct.max_evaluations,
        }
    }
}

impl GpoSection {
    pub fn to_config(&self, dim: usize) -> GpoConfig {
        GpoConfig {
            initial_design: self.initial_design,
            iterations: self.iterations,
            refit_interval: self.refit_interval,
            hyper_restarts: self.hyper_restarts,
            acquisition: AcquisitionConfig {
                zeta: self.zeta,
                jitter_variance: self.jitter_variance.clone().unwrap_or_else(|| vec![0.01; dim]),
                ei_threshold: self.ei_threshold,
                boundary: self.jitter_boundary,
                direct: DirectBudget::evaluations(self.acquisition_evaluations),
            },
            map_direct: DirectBudget::evaluations(self.map_evaluations),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmhSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_covariance: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpsaSection {
    pub a: f64,
    pub c: f64,
    pub big_a: f64,
    pub alpha_exp: f64,
    pub gamma_exp: f64,
    pub iterations: usize,
    /// Start point; the PMH start point when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Vec<CoordinateMap>>,
}

impl Default for SpsaSection {
    fn default() -> Self {
        let d = SpsaConfig::default();
        Self {
            a: d.a,
            c: d.c,
            big_a: d.big_a,
            alpha_exp: d.alpha_exp,
            gamma_exp: d.gamma_exp,
            iterations: d.iterations,
            theta0: None,
            coordinates: None,
        }
    }
}

impl SpsaSection {
    pub fn to_config(&self) -> SpsaConfig {
        SpsaConfig {
            a: self.a,
            c: self.c,
            big_a: self.big_a,
            alpha_exp: self.alpha_exp,
            gamma_exp: self.gamma_exp,
            iterations: self.iterations,
            coordinates: self.coordinates.clone().unwrap_or_default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub replicates: usize,
    /// Also run the exact filter as the reference (Gaussian model only).
    pub reference: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            replicates: 1,
            reference: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarSection {
    /// Two thirds of the series when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation_length: Option<usize>,
    pub level: f64,
    /// Equal weights when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub simulations: usize,
    pub dof_bounds: [f64; 2],
    pub volatility: VolatilityTiming,
}

impl Default for VarSection {
    fn default() -> Self {
        Self {
            estimation_length: None,
            level: 0.99,
            weights: None,
            simulations: 100_000,
            dof_bounds: [2.1, 100.0],
            volatility: VolatilityTiming::Filtered,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    /// CSV with `var` and `realised` columns, as written by `var-pipeline`.
    pub input: PathBuf,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSection {
    /// Run directory to read.
    pub input: PathBuf,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
}

fn default_grid() -> usize {
    201
}

/// Model-level objects built from a resolved configuration.
#[derive(Clone, Debug)]
pub struct ModelSetup {
    pub model: ModelId,
    pub scale: StableScale,
    pub prior: PriorSpec,
    pub search_box: SearchBox,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn model_setup(&self) -> Result<ModelSetup, CliError> {
        let m = &self.model;
        let prior = match &m.prior {
            Some(c) => PriorSpec::new(m.id, c.clone())?,
            None => PriorSpec::default_for(m.id),
        };
        let search_box = match &m.search_box {
            Some(b) => SearchBox::from_pairs(&b.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>())?,
            None => SearchBox::default_for(m.id),
        };
        prior.check_box(&search_box)?;
        Ok(ModelSetup {
            model: m.id,
            scale: m.scale,
            prior,
            search_box,
        })
    }

    pub fn abc_config(&self) -> Result<Option<AbcConfig>, CliError> {
        let f = self.filter.clone().unwrap_or_default();
        match f.epsilon {
            None => Ok(None),
            Some(epsilon) => {
                let cfg = AbcConfig {
                    epsilon,
                    psi: f.psi.unwrap_or_else(|| Psi::default_for(self.model.id)),
                    kernel: AbcKernel::Gaussian,
                };
                cfg.validate()?;
                Ok(Some(cfg))
            }
        }
    }

    pub fn pmh_config(&self) -> PmhConfig {
        let d = PmhConfig::default_for(self.model.id);
        let s = self.pmh.clone().unwrap_or_default();
        PmhConfig {
            theta0: s.theta0.unwrap_or(d.theta0),
            proposal_covariance: s.proposal_covariance.unwrap_or(d.proposal_covariance),
            iterations: s.iterations.unwrap_or(d.iterations),
            burnin: s.burnin.unwrap_or(d.burnin),
        }
    }

    /// Fills every default the command depends on, validates, and fixes the seed.
    pub fn resolve(mut self, command: Command, seed_override: Option<u64>) -> Result<Self, CliError> {
        self.seed = Some(seed_override.or(self.seed).unwrap_or(0));
        let setup = self.model_setup()?;
        let dim = setup.model.dim();
        self.model.prior = Some(setup.prior.components().to_vec());
        self.model.search_box = Some(
            setup
                .search_box
                .lower()
                .iter()
                .zip(setup.search_box.upper())
                .map(|(l, u)| [*l, *u])
                .collect(),
        );

        let needs_data = !matches!(command, Command::Backtest | Command::ExportPlotData);
        let needs_filter = !matches!(command, Command::Simulate | Command::Backtest | Command::ExportPlotData);
        if needs_data && self.data.is_none() {
            return Err(invalid(format!("`{}` needs a [data] section", command.name())));
        }
        if let Some(DataSection::Simulated { model, theta, length, assets }) = &mut self.data {
            let m = *model.get_or_insert(setup.model);
            if theta.len() != m.dim() {
                return Err(invalid(format!("data theta needs {} components for {m}", m.dim())));
            }
            if *length == 0 || *assets == 0 {
                return Err(invalid("simulated data needs a positive length and asset count"));
            }
        }
        if needs_filter {
            let filter = self.filter.get_or_insert_with(FilterSection::default);
            if filter.particles == 0 {
                return Err(invalid("filter.particles must be positive"));
            }
            if filter.epsilon.is_some() && filter.psi.is_none() {
                filter.psi = Some(Psi::default_for(setup.model));
            }
            self.abc_config()?;
            if self.abc_config()?.is_none() && setup.model != ModelId::Gsv {
                return Err(invalid(format!(
                    "{} has no evaluable observation density; set filter.epsilon",
                    setup.model
                )));
            }
        }
        if matches!(
            command,
            Command::InferGpo | Command::EpsilonSweep | Command::VarPipeline
        ) {
            let g = self.gpo.get_or_insert_with(GpoSection::default);
            g.jitter_variance.get_or_insert_with(|| vec![0.01; dim]);
            g.to_config(dim).validate(dim)?;
        }
        match command {
            Command::InferPmh => {
                let cfg = self.pmh_config();
                if cfg.theta0.len() != dim {
                    return Err(invalid(format!("pmh.theta0 needs {dim} components")));
                }
                cfg.validate()?;
                self.pmh = Some(PmhSection {
                    theta0: Some(cfg.theta0),
                    proposal_covariance: Some(cfg.proposal_covariance),
                    iterations: Some(cfg.iterations),
                    burnin: Some(cfg.burnin),
                });
            }
            Command::InferSpsa => {
                let theta0 = self.pmh_config().theta0;
                let s = self.spsa.get_or_insert_with(SpsaSection::default);
                s.theta0.get_or_insert(theta0);
                s.coordinates.get_or_insert_with(|| CoordinateMap::for_model(setup.model));
                s.to_config().validate()?;
                let theta0 = s.theta0.as_ref().expect("filled");
                if theta0.len() != dim || !setup.search_box.contains(theta0) {
                    return Err(invalid("spsa.theta0 must lie inside the search box"));
                }
            }
            Command::EpsilonSweep => {
                let s = self.sweep.get_or_insert_with(SweepSection::default);
                if s.epsilons.is_empty() || s.replicates == 0 {
                    return Err(invalid("sweep needs at least one epsilon and one replicate"));
                }
                for &e in &s.epsilons {
                    AbcConfig::new(e, Psi::Identity)?;
                }
                if s.reference && setup.model != ModelId::Gsv {
                    return Err(invalid("the exact-filter reference needs the Gaussian model"));
                }
            }
            Command::VarPipeline => {
                let v = self.var.get_or_insert_with(VarSection::default);
                if !(v.level > 0.0 && v.level < 1.0) {
                    return Err(invalid("var.level must lie in (0, 1)"));
                }
                if v.simulations < 1000 {
                    return Err(invalid("var.simulations must be at least 1000"));
                }
                if !(v.dof_bounds[0] > 2.0 && v.dof_bounds[0] < v.dof_bounds[1]) {
                    return Err(invalid("var.dof_bounds must satisfy 2 < lower < upper"));
                }
            }
            Command::Backtest => {
                let b = self
                    .backtest
                    .as_ref()
                    .ok_or_else(|| invalid("`backtest` needs a [backtest] section"))?;
                if !(b.level > 0.0 && b.level < 1.0) {
                    return Err(invalid("backtest.level must lie in (0, 1)"));
                }
            }
            Command::ExportPlotData => {
                let e = self
                    .export
                    .as_ref()
                    .ok_or_else(|| invalid("`export-plot-data` needs an [export] section"))?;
                if e.grid_points < 2 {
                    return Err(invalid("export.grid_points must be at least 2"));
                }
            }
            Command::Simulate | Command::InferGpo => {}
        }
        Ok(self)
    }
}
