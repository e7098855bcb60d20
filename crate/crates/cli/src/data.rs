//! Return series from CSV files or from the models themselves.

use std::path::Path;

use chrono::NaiveDate;
use gpo_abc::models::{simulate, ModelId, StableScale, ThetaVector};
use gpo_abc::RngStream;

use crate::config::{DataSection, InputMode};
use crate::CliError;

/// One asset's observations, aligned with `dates`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries {
    pub asset: String,
    /// ISO dates for CSV input, one-based period indices for simulated data.
    pub dates: Vec<String>,
    pub returns: Vec<f64>,
}

fn data_error(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {msg}", path.display()))
}

/// Reads a header-row CSV with a date column and one column per asset.
///
/// Dates must parse as `YYYY-MM-DD` and be strictly increasing. In price
/// mode prices must be positive and the result has one row fewer.
pub fn ingest_csv(path: &Path, date_column: &str, columns: &[String], mode: InputMode) -> Result<Vec<ReturnSeries>, CliError> {
    if columns.is_empty() {
        return Err(CliError::Config("data.columns must name at least one column".into()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_error(path, e))?;
    let headers = reader.headers().map_err(|e| data_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| data_error(path, format!("no column named '{name}'")))
    };
    let date_idx = find(date_column)?;
    let value_idx = columns.iter().map(|c| find(c)).collect::<Result<Vec<_>, _>>()?;

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (i, record) in reader.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let record = record.map_err(|e| data_error(path, e))?;
        let raw = record.get(date_idx).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|_| data_error(path, format!("line {line}: cannot parse date '{raw}'")))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(data_error(path, format!("line {line}: date {date} does not follow {prev}")));
            }
        }
        dates.push(date);
        for (j, &idx) in value_idx.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("").trim();
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| data_error(path, format!("line {line}: missing or invalid value '{cell}' in '{}'", columns[j])))?;
            if mode == InputMode::Prices && v <= 0.0 {
                return Err(data_error(path, format!("line {line}: non-positive price {v} in '{}'", columns[j])));
            }
            values[j].push(v);
        }
    }

    let dates: Vec<String> = dates.iter().map(|d| d.format("%Y-%m-%d").to_string()).collect();
    let (dates, values) = match mode {
        InputMode::Returns => (dates, values),
        InputMode::Prices => {
            if dates.len() < 2 {
                return Err(data_error(path, "price mode needs at least two rows"));
            }
            let returns = values.iter().map(|s| log_returns(s)).collect();
            (dates[1..].to_vec(), returns)
        }
    };
    if dates.is_empty() {
        return Err(data_error(path, "no data rows"));
    }
    Ok(columns
        .iter()
        .zip(values)
        .map(|(name, returns)| ReturnSeries {
            asset: name.clone(),
            dates: dates.clone(),
            returns,
        })
        .collect())
}

/// `100 (log s_t - log s_{t-1})`.
pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect()
}

/// Simulated series also carry their latent log-volatility.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub series: Vec<ReturnSeries>,
    pub states: Option<Vec<Vec<f64>>>,
}

/// Loads the `[data]` section; simulated assets use `stream.fork(j)`.
pub fn load(section: &DataSection, default_model: ModelId, scale: StableScale, base: &Path, stream: &RngStream) -> Result<LoadedData, CliError> {
    match section {
        DataSection::Csv {
            path,
            mode,
            date_column,
            columns,
        } => {
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            Ok(LoadedData {
                series: ingest_csv(&path, date_column, columns, *mode)?,
                states: None,
            })
        }
        DataSection::Simulated {
            model,
            theta,
            length,
            assets,
        } => {
            let theta = ThetaVector::new(model.unwrap_or(default_model), theta.clone())?;
            let mut series = Vec::with_capacity(*assets);
            let mut states = Vec::with_capacity(*assets);
            for j in 0..*assets {
                let sim = simulate(&theta, *length, scale, &mut stream.fork(j as u64))?;
                series.push(ReturnSeries {
                    asset: if *assets == 1 { "y".into() } else { format!("asset{}", j + 1) },
                    dates: (1..=*length).map(|t| t.to_string()).collect(),
                    returns: sim.observations,
                });
                states.push(sim.states[1..].to_vec());
            }
            Ok(LoadedData {
                series,
                states: Some(states),
            })
        }
    }
}
