//! Gaussian-process optimisation of noisy log-posterior estimates: initial
//! design, EI acquisition, hyperparameter refits and Laplace extraction.

mod acquisition;
mod laplace;

pub use acquisition::{
    expected_improvement, expected_improvement_from, incumbent, propose_next, AcquisitionConfig, JitterBoundary, Proposal,
    SIGMA_FLOOR,
};
pub use laplace::{extract_laplace, repair_curvature, LaplacePosterior};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluator::Evaluator;
use crate::gp::{
    estimate_hyperparameters, initial_hyperparameters, GpHyperparameters, GpModel, HyperBounds, SurrogateDataset,
};
use crate::models::SearchBox;
use crate::optim::{latin_hypercube, DirectBudget};
use crate::serde_ext::{float_digest, log_value};
use crate::{Error, Result, RngStream};

/// Substream keys; every random draw is tied to an evaluation or iteration
/// index so a resumed run continues exactly where it stopped.
const KEY_DESIGN: u64 = 1;
const KEY_EVALUATION: u64 = 2;
const KEY_HYPER: u64 = 3;
const KEY_JITTER: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpoConfig {
    /// Size `L` of the Latin hypercube design.
    pub initial_design: usize,
    /// Acquisition iterations `K` after the design.
    pub iterations: usize,
    /// Hyperparameters are re-estimated every this many iterations.
    pub refit_interval: usize,
    /// Random restarts of the initial hyperparameter fit.
    #[serde(default = "default_restarts")]
    pub hyper_restarts: usize,
    pub acquisition: AcquisitionConfig,
    /// Budget for maximising the final surrogate mean.
    #[serde(default)]
    pub map_direct: DirectBudget,
}

fn default_restarts() -> usize {
    5
}

impl GpoConfig {
    /// `L = 50`, `K = 450`, refit every 25 iterations, `zeta = 0.01`, `Sigma = 0.01 I`.
    pub fn default_for_dim(p: usize) -> Self {
        Self {
            initial_design: 50,
            iterations: 450,
            refit_interval: 25,
            hyper_restarts: default_restarts(),
            acquisition: AcquisitionConfig::default_for_dim(p),
            map_direct: DirectBudget::default(),
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.initial_design < 2 {
            return Err(Error::Config("initial design needs at least 2 points".into()));
        }
        if self.refit_interval == 0 {
            return Err(Error::Config("refit interval must be positive".into()));
        }
        if self.map_direct.max_evaluations == 0 {
            return Err(Error::Config("DIRECT budget must be positive".into()));
        }
        self.acquisition.validate(p)
    }

    pub fn total_evaluations(&self) -> usize {
        self.initial_design + self.iterations
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Design,
    Acquisition,
}

/// One posterior evaluation of the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// One-based evaluation index.
    pub k: usize,
    pub phase: Phase,
    pub theta: Vec<f64>,
    #[serde(with = "log_value")]
    pub xi: f64,
    /// EI of the maximiser that produced this point.
    pub ei: Option<f64>,
    /// Digest of the hyperparameters in force after this evaluation.
    pub hyper_hash: Option<String>,
    pub mu_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpoRunState {
    /// Evaluations completed.
    pub iteration: usize,
    pub dataset: SurrogateDataset,
    pub hyperparameters: Option<GpHyperparameters>,
    pub mu_max: Option<f64>,
    pub trace: Vec<TraceRecord>,
    pub refit_interval: usize,
    /// True when the EI threshold ended the run before `K` iterations.
    pub stopped_early: bool,
}

impl GpoRunState {
    pub fn new(refit_interval: usize) -> Self {
        Self {
            iteration: 0,
            dataset: SurrogateDataset::new(),
            hyperparameters: None,
            mu_max: None,
            trace: Vec::new(),
            refit_interval,
            stopped_early: false,
        }
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

pub fn hyper_digest(h: &GpHyperparameters) -> String {
    float_digest(&h.to_log())
}

fn evaluate<E: Evaluator + ?Sized>(evaluator: &E, theta: &[f64], stream: &RngStream, k: usize) -> (f64, Option<String>) {
    let mut s = stream.fork2(KEY_EVALUATION, k as u64);
    match evaluator.log_posterior(theta, &mut s) {
        Ok(v) if v.is_nan() => {
            log::warn!("evaluation {k} returned NaN; treated as -inf");
            (f64::NEG_INFINITY, Some("NaN estimate".into()))
        }
        Ok(v) => (v, None),
        Err(e) => {
            log::warn!("evaluation {k} at {theta:?} failed: {e}");
            (f64::NEG_INFINITY, Some(e.to_string()))
        }
    }
}

/// Runs the GPO loop from scratch.
pub fn gpo_run<E: Evaluator + ?Sized>(
    evaluator: &E,
    bbox: &SearchBox,
    cfg: &GpoConfig,
    stream: &RngStream,
) -> Result<(GpoRunState, GpModel)> {
    gpo_resume(GpoRunState::new(cfg.refit_interval), evaluator, bbox, cfg, stream, &mut |_| Ok(()))
}

/// Continues a run from `state`; `checkpoint` is called after every
/// evaluation. Resuming with the same stream reproduces an uninterrupted run.
pub fn gpo_resume<E: Evaluator + ?Sized>(
    mut state: GpoRunState,
    evaluator: &E,
    bbox: &SearchBox,
    cfg: &GpoConfig,
    stream: &RngStream,
    checkpoint: &mut dyn FnMut(&GpoRunState) -> Result<()>,
) -> Result<(GpoRunState, GpModel)> {
    let p = bbox.dim();
    cfg.validate(p)?;
    if state.iteration != state.trace.len() || state.iteration != state.dataset.len() {
        return Err(Error::State("run state trace and dataset disagree".into()));
    }
    let l = cfg.initial_design;
    let bounds = HyperBounds::for_box(bbox);

    if state.iteration < l {
        let design = latin_hypercube(l, bbox, &mut stream.fork(KEY_DESIGN));
        let start = state.iteration;
        let results: Vec<(f64, Option<String>)> = design[start..]
            .par_iter()
            .enumerate()
            .map(|(i, theta)| evaluate(evaluator, theta, stream, start + i))
            .collect();
        for (i, (xi, error)) in results.into_iter().enumerate() {
            let theta = design[start + i].clone();
            state.dataset.push(theta.clone(), xi)?;
            state.iteration += 1;
            state.trace.push(TraceRecord {
                k: state.iteration,
                phase: Phase::Design,
                theta,
                xi,
                ei: None,
                hyper_hash: None,
                mu_max: None,
                error,
            });
            if state.iteration < l {
                checkpoint(&state)?;
            }
        }
    }

    let hyp = match state.hyperparameters.clone() {
        Some(h) => h,
        None => {
            let init = initial_hyperparameters(&state.dataset, bbox)?;
            let fit = estimate_hyperparameters(
                &state.dataset,
                &init,
                &bounds,
                cfg.hyper_restarts,
                &mut stream.fork2(KEY_HYPER, l as u64),
            )?;
            fit.hyperparameters
        }
    };
    let mut model = GpModel::fit(&state.dataset, hyp.clone())?;
    if state.hyperparameters.is_none() {
        state.hyperparameters = Some(hyp.clone());
        state.mu_max = Some(incumbent(&model));
        if let Some(last) = state.trace.last_mut() {
            last.hyper_hash = Some(hyper_digest(&hyp));
            last.mu_max = state.mu_max;
        }
        checkpoint(&state)?;
    }

    let end = cfg.total_evaluations();
    while state.iteration < end && !state.stopped_early {
        let k = state.iteration;
        let mu_max = state.mu_max.unwrap_or_else(|| incumbent(&model));
        let proposal = propose_next(
            &model,
            mu_max,
            bbox,
            &cfg.acquisition,
            &mut stream.fork2(KEY_JITTER, k as u64),
        )?;
        if let Some(t) = cfg.acquisition.ei_threshold {
            if proposal.ei < t {
                log::info!("stopping after {k} evaluations: EI {:e} below {t:e}", proposal.ei);
                state.stopped_early = true;
                checkpoint(&state)?;
                break;
            }
        }
        let (xi, error) = evaluate(evaluator, &proposal.theta, stream, k);
        state.dataset.push(proposal.theta.clone(), xi)?;
        state.iteration += 1;

        let mut hyp = state.hyperparameters.clone().expect("set after design");
        if (state.iteration - l) % state.refit_interval == 0 {
            let fit = estimate_hyperparameters(
                &state.dataset,
                &hyp,
                &bounds,
                cfg.hyper_restarts,
                &mut stream.fork2(KEY_HYPER, state.iteration as u64),
            )?;
            hyp = fit.hyperparameters;
        }
        model = GpModel::fit(&state.dataset, hyp.clone())?;
        state.mu_max = Some(incumbent(&model));
        state.trace.push(TraceRecord {
            k: state.iteration,
            phase: Phase::Acquisition,
            theta: proposal.theta,
            xi,
            ei: Some(proposal.ei),
            hyper_hash: Some(hyper_digest(&hyp)),
            mu_max: state.mu_max,
            error,
        });
        state.hyperparameters = Some(hyp);
        checkpoint(&state)?;
    }
    Ok((state, model))
}
