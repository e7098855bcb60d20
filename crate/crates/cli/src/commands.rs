//! Subcommand implementations. Each takes the resolved configuration and
//! writes its artifacts into the run directory.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use gpo_abc::baselines::{pmh_run, spsa_run, PmhResult};
use gpo_abc::copula::{run_var_pipeline, MarginSettings, PipelineConfig, PipelineResult};
use gpo_abc::gp::GpHyperparameters;
use gpo_abc::gpo::{extract_laplace, gpo_resume, GpoConfig, GpoRunState, LaplacePosterior, TraceRecord};
use gpo_abc::models::ModelId;
use gpo_abc::smc::{AbcConfig, SmcEvaluator};
use gpo_abc::RngStream;
use serde::{Deserialize, Serialize};

use crate::config::{ModelSetup, RunConfig};
use crate::data::{load, LoadedData, ReturnSeries};
use crate::output::{fmt_f64, RunDir};
use crate::{CliError, Command};

const KEY_DATA: u64 = 1;
const KEY_PERTURB: u64 = 2;
const KEY_RUN: u64 = 3;

pub fn dispatch(command: Command, cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    log::info!("{} with seed {}", command.name(), cfg.seed.unwrap_or_default());
    match command {
        Command::Simulate => simulate_cmd(cfg, dir),
        Command::InferGpo => infer_gpo(cfg, dir),
        Command::InferPmh => infer_pmh(cfg, dir),
        Command::InferSpsa => infer_spsa(cfg, dir),
        Command::EpsilonSweep => epsilon_sweep(cfg, dir),
        Command::VarPipeline => var_pipeline(cfg, dir),
        Command::Backtest => backtest_cmd(cfg, dir),
        Command::ExportPlotData => export_plot_data(cfg, dir),
    }
}

fn master(cfg: &RunConfig) -> RngStream {
    RngStream::new(cfg.seed.expect("resolved seed"))
}

fn load_data(cfg: &RunConfig, setup: &ModelSetup) -> Result<LoadedData, CliError> {
    let section = cfg.data.as_ref().expect("resolved data section");
    load(section, setup.model, setup.scale, Path::new("."), &master(cfg).fork(KEY_DATA))
}

fn single_series(cfg: &RunConfig, setup: &ModelSetup) -> Result<ReturnSeries, CliError> {
    let mut data = load_data(cfg, setup)?.series;
    if data.len() != 1 {
        return Err(CliError::Config(format!(
            "this command takes one series, the data section provides {}",
            data.len()
        )));
    }
    Ok(data.remove(0))
}

fn particles(cfg: &RunConfig) -> usize {
    cfg.filter.as_ref().map(|f| f.particles).expect("resolved filter section")
}

fn evaluator(
    y: &[f64],
    setup: &ModelSetup,
    n: usize,
    abc: Option<AbcConfig>,
    perturb: &RngStream,
) -> Result<SmcEvaluator, CliError> {
    Ok(match abc {
        Some(a) => SmcEvaluator::abc(y, n, a, setup.prior.clone(), setup.scale, &mut perturb.clone())?,
        None => SmcEvaluator::exact(y.to_vec(), n, setup.prior.clone())?,
    })
}

fn component_names(model: ModelId) -> Vec<String> {
    model.component_names().iter().map(|s| s.to_string()).collect()
}

fn simulate_cmd(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let data = load_data(cfg, &setup)?;
    let mut rows = Vec::new();
    for (j, s) in data.series.iter().enumerate() {
        for (t, (date, y)) in s.dates.iter().zip(&s.returns).enumerate() {
            let x = data.states.as_ref().map(|st| fmt_f64(st[j][t])).unwrap_or_default();
            rows.push(vec![date.clone(), s.asset.clone(), x, fmt_f64(*y)]);
        }
    }
    dir.write_csv("simulation.csv", &["date", "asset", "x", "y"], rows)
}

#[derive(Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub model: ModelId,
    pub components: Vec<String>,
    pub evaluations: usize,
    pub stopped_early: bool,
    pub particles: usize,
    pub epsilon: Option<f64>,
    pub hyperparameters: Option<GpHyperparameters>,
    pub laplace: LaplacePosterior,
}

fn trace_lines(trace: &[TraceRecord]) -> Result<String, CliError> {
    let mut out = String::new();
    for r in trace {
        out.push_str(&serde_json::to_string(r).map_err(|e| CliError::Output(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// `state.json` left by an earlier run of the same configuration; the run
/// directory discards it when the configuration changes.
fn saved_state(dir: &RunDir) -> Option<GpoRunState> {
    let text = std::fs::read_to_string(dir.path("state.json")).ok()?;
    serde_json::from_str(&text).ok()
}

fn infer_gpo(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let series = single_series(cfg, &setup)?;
    let abc = cfg.abc_config()?;
    let n = particles(cfg);
    let stream = master(cfg);
    let ev = evaluator(&series.returns, &setup, n, abc, &stream.fork(KEY_PERTURB))?;
    let gpo = cfg.gpo.as_ref().expect("resolved gpo section").to_config(setup.model.dim());

    let state = match saved_state(dir) {
        Some(s) => {
            log::info!("resuming after {} evaluations", s.iteration);
            s
        }
        None => GpoRunState::new(gpo.refit_interval),
    };
    dir.write_text("trace.ndjson", &trace_lines(&state.trace)?)?;
    let mut written = state.trace.len();
    let mut checkpoint = |s: &GpoRunState| -> gpo_abc::Result<()> {
        let io = |e: CliError| gpo_abc::Error::State(e.to_string());
        dir.write_json("state.json", s).map_err(io)?;
        if s.trace.len() > written {
            let lines = trace_lines(&s.trace[written..]).map_err(io)?;
            append(&dir.path("trace.ndjson"), &lines).map_err(io)?;
            written = s.trace.len();
        }
        Ok(())
    };
    let (state, model) = gpo_resume(state, &ev, &setup.search_box, &gpo, &stream.fork(KEY_RUN), &mut checkpoint)?;
    dir.write_json("state.json", &state)?;
    dir.write_text("trace.ndjson", &trace_lines(&state.trace)?)?;
    let laplace = extract_laplace(&model, &setup.search_box, &gpo.map_direct)?;
    dir.write_json(
        "posterior.json",
        &PosteriorRecord {
            model: setup.model,
            components: component_names(setup.model),
            evaluations: state.evaluations(),
            stopped_early: state.stopped_early,
            particles: n,
            epsilon: abc.map(|a| a.epsilon),
            hyperparameters: state.hyperparameters.clone(),
            laplace,
        },
    )
}

fn append(path: &Path, text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct PmhSummary<'a> {
    model: ModelId,
    components: Vec<String>,
    particles: usize,
    epsilon: Option<f64>,
    evaluations: usize,
    burnin: usize,
    acceptance_rate: f64,
    posterior_mean: &'a [f64],
    posterior_sd: &'a [f64],
    posterior_covariance: &'a [Vec<f64>],
}

fn infer_pmh(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let series = single_series(cfg, &setup)?;
    let abc = cfg.abc_config()?;
    let n = particles(cfg);
    let stream = master(cfg);
    let ev = evaluator(&series.returns, &setup, n, abc, &stream.fork(KEY_PERTURB))?;
    let result: PmhResult = pmh_run(&ev, &cfg.pmh_config(), &stream.fork(KEY_RUN))?;

    let names = component_names(setup.model);
    let mut header: Vec<&str> = vec!["iteration"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["xi", "accepted"]);
    dir.write_csv(
        "chain.csv",
        &header,
        result.chain.iter().map(|r| {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(r.xi));
            row.push(r.accepted.to_string());
            row
        }),
    )?;
    dir.write_json(
        "pmh.json",
        &PmhSummary {
            model: setup.model,
            components: names,
            particles: n,
            epsilon: abc.map(|a| a.epsilon),
            evaluations: result.evaluations,
            burnin: result.burnin,
            acceptance_rate: result.acceptance_rate,
            posterior_mean: &result.posterior_mean,
            posterior_sd: &result.posterior_sd,
            posterior_covariance: &result.posterior_covariance,
        },
    )
}

fn infer_spsa(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let series = single_series(cfg, &setup)?;
    let abc = cfg.abc_config()?;
    let n = particles(cfg);
    let stream = master(cfg);
    let ev = evaluator(&series.returns, &setup, n, abc, &stream.fork(KEY_PERTURB))?;
    let section = cfg.spsa.as_ref().expect("resolved spsa section");
    let theta0 = section.theta0.clone().expect("resolved start");
    let result = spsa_run(&ev, &section.to_config(), &theta0, &setup.search_box, &stream.fork(KEY_RUN))?;

    let names = component_names(setup.model);
    let mut header: Vec<&str> = vec!["iteration", "evaluations"];
    header.extend(names.iter().map(String::as_str));
    header.extend(["xi_plus", "xi_minus", "skipped"]);
    dir.write_csv(
        "spsa.csv",
        &header,
        result.trace.iter().map(|r| {
            let mut row = vec![r.iteration.to_string(), r.evaluations.to_string()];
            row.extend(r.theta.iter().map(|v| fmt_f64(*v)));
            row.extend([fmt_f64(r.xi_plus), fmt_f64(r.xi_minus), r.skipped.to_string()]);
            row
        }),
    )?;
    dir.write_json(
        "spsa.json",
        &serde_json::json!({
            "model": setup.model,
            "components": names,
            "particles": n,
            "epsilon": abc.map(|a| a.epsilon),
            "evaluations": result.evaluations,
            "theta0": theta0,
            "final_theta": result.final_theta(),
        }),
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    /// `None` for the exact-filter reference.
    pub epsilon: Option<f64>,
    pub replicate: usize,
    pub evaluations: usize,
    /// Missing when the surrogate curvature at the MAP was irreparable.
    pub laplace: Option<LaplacePosterior>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Box-scaled Euclidean distance to the replicate's reference MAP.
    pub distance_to_reference: Option<f64>,
}

fn sweep_record(
    epsilon: Option<f64>,
    replicate: usize,
    evaluations: usize,
    laplace: gpo_abc::Result<LaplacePosterior>,
    reference: Option<&[f64]>,
    widths: &[f64],
) -> SweepRecord {
    match laplace {
        Ok(l) => {
            let distance = match (epsilon, reference) {
                (None, _) => Some(0.0),
                (Some(_), Some(t)) => Some(
                    l.theta_map
                        .iter()
                        .zip(t)
                        .zip(widths)
                        .map(|((a, b), w)| ((a - b) / w).powi(2))
                        .sum::<f64>()
                        .sqrt(),
                ),
                (Some(_), None) => None,
            };
            SweepRecord {
                epsilon,
                replicate,
                evaluations,
                laplace: Some(l),
                error: None,
                distance_to_reference: distance,
            }
        }
        Err(e) => {
            log::warn!("replicate {replicate}, epsilon {epsilon:?}: {e}");
            SweepRecord {
                epsilon,
                replicate,
                evaluations,
                laplace: None,
                error: Some(e.to_string()),
                distance_to_reference: None,
            }
        }
    }
}

fn gpo_laplace(
    y: &[f64],
    setup: &ModelSetup,
    n: usize,
    abc: Option<AbcConfig>,
    gpo: &GpoConfig,
    stream: &RngStream,
) -> Result<(gpo_abc::Result<LaplacePosterior>, usize), CliError> {
    let ev = evaluator(y, setup, n, abc, &stream.fork(KEY_PERTURB))?;
    let (state, model) = gpo_resume(
        GpoRunState::new(gpo.refit_interval),
        &ev,
        &setup.search_box,
        gpo,
        &stream.fork(KEY_RUN),
        &mut |_| Ok(()),
    )?;
    Ok((extract_laplace(&model, &setup.search_box, &gpo.map_direct), state.evaluations()))
}

fn epsilon_sweep(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let series = single_series(cfg, &setup)?;
    let n = particles(cfg);
    let sweep = cfg.sweep.as_ref().expect("resolved sweep section");
    let gpo = cfg.gpo.as_ref().expect("resolved gpo section").to_config(setup.model.dim());
    let psi = cfg.filter.as_ref().and_then(|f| f.psi).unwrap_or_else(|| gpo_abc::smc::Psi::default_for(setup.model));
    let widths = setup.search_box.widths();
    let runs = master(cfg).fork(KEY_RUN);

    let mut records = Vec::new();
    for r in 0..sweep.replicates {
        let replicate = runs.fork(r as u64);
        let reference = if sweep.reference {
            let (laplace, evaluations) = gpo_laplace(&series.returns, &setup, n, None, &gpo, &replicate.fork(0))?;
            let record = sweep_record(None, r, evaluations, laplace, None, &widths);
            let map = record.laplace.as_ref().map(|l| l.theta_map.clone());
            records.push(record);
            map
        } else {
            None
        };
        for (i, &epsilon) in sweep.epsilons.iter().enumerate() {
            log::info!("replicate {r}, epsilon {epsilon}");
            let abc = AbcConfig::new(epsilon, psi)?;
            let (laplace, evaluations) =
                gpo_laplace(&series.returns, &setup, n, Some(abc), &gpo, &replicate.fork(i as u64 + 1))?;
            records.push(sweep_record(Some(epsilon), r, evaluations, laplace, reference.as_deref(), &widths));
        }
    }
    dir.write_json("sweep.json", &records)?;
    let names = component_names(setup.model);
    let rows = records.iter().filter_map(|rec| rec.laplace.as_ref().map(|l| (rec, l))).flat_map(|(rec, l)| {
        names.iter().enumerate().map(move |(i, name)| {
            vec![
                rec.epsilon.map(fmt_f64).unwrap_or_default(),
                rec.replicate.to_string(),
                name.clone(),
                fmt_f64(l.theta_map[i]),
                fmt_f64(l.marginal_sd[i]),
                rec.distance_to_reference.map(fmt_f64).unwrap_or_default(),
            ]
        })
    });
    dir.write_csv(
        "sweep.csv",
        &["epsilon", "replicate", "component", "map", "sd", "distance_to_reference"],
        rows,
    )
}

#[derive(Serialize)]
struct MarginRecord<'a> {
    asset: &'a str,
    model: ModelId,
    components: Vec<String>,
    theta: &'a [f64],
    laplace: &'a LaplacePosterior,
    evaluations: usize,
    sorted_residuals: Vec<f64>,
}

fn var_pipeline(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let setup = cfg.model_setup()?;
    let data = load_data(cfg, &setup)?;
    if data.series.len() < 2 {
        return Err(CliError::Config("var-pipeline needs at least two assets".into()));
    }
    let t = data.series[0].returns.len();
    let v = cfg.var.as_ref().expect("resolved var section");
    let pipeline = PipelineConfig {
        margin: MarginSettings {
            prior: setup.prior.clone(),
            search_box: setup.search_box.clone(),
            particles: particles(cfg),
            abc: cfg.abc_config()?,
            scale: setup.scale,
            gpo: cfg.gpo.as_ref().expect("resolved gpo section").to_config(setup.model.dim()),
        },
        estimation_length: v.estimation_length.unwrap_or(2 * t / 3),
        level: v.level,
        weights: v.weights.clone(),
        simulations: v.simulations,
        dof_bounds: (v.dof_bounds[0], v.dof_bounds[1]),
        volatility: v.volatility,
    };
    let assets: Vec<(String, Vec<f64>)> = data.series.iter().map(|s| (s.asset.clone(), s.returns.clone())).collect();
    let result: PipelineResult = run_var_pipeline(&assets, &pipeline, &master(cfg).fork(KEY_RUN))?;

    let margins = result
        .margins
        .iter()
        .map(|m| {
            let mut sorted = m.residuals.clone();
            sorted.sort_by(f64::total_cmp);
            MarginRecord {
                asset: &m.asset,
                model: m.model,
                components: component_names(m.model),
                theta: &m.theta,
                laplace: &m.laplace,
                evaluations: m.evaluations,
                sorted_residuals: sorted,
            }
        })
        .collect::<Vec<_>>();
    dir.write_json(
        "copula.json",
        &serde_json::json!({
            "margins": margins,
            "copula": result.copula,
            "weights": result.weights,
            "level": result.level,
            "estimation_length": pipeline.estimation_length,
            "volatility": pipeline.volatility,
        }),
    )?;
    let dates = &data.series[0].dates;
    dir.write_csv(
        "var.csv",
        &["date", "var", "realised", "violation"],
        result.series.iter().map(|r| {
            vec![
                dates[r.t].clone(),
                fmt_f64(r.var),
                fmt_f64(r.realised),
                r.violation.to_string(),
            ]
        }),
    )?;
    dir.write_json(
        "backtest.json",
        &BacktestRecord {
            level: result.level,
            periods: result.backtest.periods,
            violations: result.backtest.violations,
            expected: result.backtest.expected,
        },
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub level: f64,
    pub periods: usize,
    pub violations: usize,
    pub expected: f64,
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], path: &Path, name: &str) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no column named '{name}'", path.display())))
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    match cell {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => cell
            .parse()
            .map_err(|_| CliError::Data(format!("{}: line {line}: invalid number '{cell}'", path.display()))),
    }
}

fn backtest_cmd(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let b = cfg.backtest.as_ref().expect("resolved backtest section");
    let (header, rows) = read_table(&b.input)?;
    let vi = column(&header, &b.input, "var")?;
    let ri = column(&header, &b.input, "realised")?;
    let date = header.iter().position(|h| h == "date");
    let mut var = Vec::with_capacity(rows.len());
    let mut realised = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        var.push(parse_cell(&row[vi], &b.input, i + 2)?);
        realised.push(parse_cell(&row[ri], &b.input, i + 2)?);
    }
    let bt = gpo_abc::copula::backtest(&var, &realised, b.level)?;
    dir.write_csv(
        "backtest.csv",
        &["date", "var", "realised", "violation"],
        rows.iter().zip(&bt.flags).enumerate().map(|(i, (row, f))| {
            vec![
                date.map(|d| row[d].clone()).unwrap_or_else(|| (i + 1).to_string()),
                fmt_f64(var[i]),
                fmt_f64(realised[i]),
                f.to_string(),
            ]
        }),
    )?;
    dir.write_json(
        "backtest.json",
        &BacktestRecord {
            level: b.level,
            periods: bt.periods,
            violations: bt.violations,
            expected: bt.expected,
        },
    )
}

fn export_plot_data(cfg: &RunConfig, dir: &RunDir) -> Result<(), CliError> {
    let e = cfg.export.as_ref().expect("resolved export section");
    if !e.input.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", e.input.display())));
    }
    let input = RunDir::create(&e.input)?;
    let mut written = Vec::new();

    let mut names: Option<Vec<String>> = None;
    if input.exists("posterior.json") {
        let text = read(&input.path("posterior.json"))?;
        let p: PosteriorRecord = serde_json::from_str(&text).map_err(|err| CliError::Data(err.to_string()))?;
        names = Some(p.components.clone());
        dir.write_csv(
            "posterior_curves.csv",
            &["component", "x", "density"],
            laplace_curves(&p.laplace, &p.components, e.grid_points),
        )?;
        written.push("posterior_curves.csv");
    }
    if input.exists("trace.ndjson") {
        let f = std::fs::File::open(input.path("trace.ndjson")).map_err(|err| CliError::io(&input.path("trace.ndjson"), err))?;
        let mut rows = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for line in std::io::BufReader::new(f).lines() {
            let line = line.map_err(|err| CliError::io(&input.path("trace.ndjson"), err))?;
            let r: TraceRecord = serde_json::from_str(&line).map_err(|err| CliError::Data(err.to_string()))?;
            best = best.max(r.xi);
            for (i, v) in r.theta.iter().enumerate() {
                let component = names.as_ref().and_then(|n| n.get(i).cloned()).unwrap_or_else(|| i.to_string());
                rows.push(vec![
                    r.k.to_string(),
                    component,
                    fmt_f64(*v),
                    fmt_f64(r.xi),
                    fmt_f64(best),
                    r.mu_max.map(fmt_f64).unwrap_or_default(),
                ]);
            }
        }
        dir.write_csv(
            "gpo_trace.csv",
            &["evaluation", "component", "value", "xi", "best_xi", "surrogate_max"],
            rows,
        )?;
        written.push("gpo_trace.csv");
    }
    if input.exists("chain.csv") {
        let burnin = input
            .exists("pmh.json")
            .then(|| read(&input.path("pmh.json")))
            .transpose()?
            .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
            .and_then(|v| v["burnin"].as_u64())
            .unwrap_or(0) as usize;
        let (header, rows) = read_table(&input.path("chain.csv"))?;
        let comps = &header[1..header.len() - 2];
        let mut out = Vec::new();
        for (c, name) in comps.iter().enumerate() {
            let values = rows
                .iter()
                .skip(burnin)
                .enumerate()
                .map(|(i, r)| parse_cell(&r[c + 1], &input.path("chain.csv"), i + 2))
                .collect::<Result<Vec<_>, _>>()?;
            for (x, d) in histogram(&values, 50) {
                out.push(vec![name.clone(), fmt_f64(x), fmt_f64(d)]);
            }
        }
        dir.write_csv("pmh_density.csv", &["component", "x", "density"], out)?;
        written.push("pmh_density.csv");
    }
    if input.exists("spsa.csv") {
        let (header, rows) = read_table(&input.path("spsa.csv"))?;
        let comps = &header[2..header.len() - 3];
        let out = rows.iter().flat_map(|r| {
            comps
                .iter()
                .enumerate()
                .map(move |(c, name)| vec![r[1].clone(), name.clone(), r[c + 2].clone()])
        });
        dir.write_csv("spsa_trace.csv", &["evaluations", "component", "value"], out)?;
        written.push("spsa_trace.csv");
    }
    if input.exists("sweep.json") {
        let records: Vec<SweepRecord> =
            serde_json::from_str(&read(&input.path("sweep.json"))?).map_err(|err| CliError::Data(err.to_string()))?;
        let mut by_eps: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &records {
            if let Some(d) = r.distance_to_reference {
                by_eps.entry(r.epsilon.map(fmt_f64).unwrap_or_default()).or_default().push(d);
            }
        }
        dir.write_csv(
            "sweep_distance.csv",
            &["epsilon", "replicates", "mean_distance"],
            by_eps.into_iter().map(|(eps, d)| {
                vec![eps, d.len().to_string(), fmt_f64(d.iter().sum::<f64>() / d.len() as f64)]
            }),
        )?;
        written.push("sweep_distance.csv");
    }
    if input.exists("var.csv") {
        let (header, rows) = read_table(&input.path("var.csv"))?;
        let idx = ["date", "var", "realised", "violation"]
            .iter()
            .map(|n| column(&header, &input.path("var.csv"), n))
            .collect::<Result<Vec<_>, _>>()?;
        dir.write_csv(
            "var_series.csv",
            &["date", "var", "realised", "violation"],
            rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()),
        )?;
        written.push("var_series.csv");
    }
    if written.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds no run artifacts to export",
            e.input.display()
        )));
    }
    dir.write_json("export.json", &serde_json::json!({ "files": written }))
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Gaussian marginal densities on `mean +- 4 sd`.
fn laplace_curves(p: &LaplacePosterior, names: &[String], points: usize) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let (m, s) = (p.theta_map[i], p.marginal_sd[i]);
        for k in 0..points {
            let x = m - 4.0 * s + 8.0 * s * k as f64 / (points - 1) as f64;
            rows.push(vec![name.clone(), fmt_f64(x), fmt_f64(p.marginal_density(i, x))]);
        }
    }
    rows
}

/// Bin centres and normalised densities.
fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let total = values.len() as f64 * width;
    counts
        .iter()
        .enumerate()
        .map(|(b, c)| (lo + (b as f64 + 0.5) * width, *c as f64 / total))
        .collect()
}
