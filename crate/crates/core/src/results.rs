//! `timeseries.csv` and `summary.json` output, plus recomputing a summary
//! from a written time series.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! summary recomputed from the CSV matches the JSON bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario_file::ScenarioFile;
use crate::sim::{ScenarioResult, Summary};

const AXES: [&str; 3] = ["x", "y", "z"];

pub fn csv_header(dim: usize) -> Vec<String> {
    let mut cols = vec!["epoch".to_string(), "agent".to_string()];
    cols.extend(AXES[..dim].iter().map(|a| format!("true_{a}")));
    cols.extend(AXES[..dim].iter().map(|a| format!("est_{a}")));
    cols.extend(["formation_error", "cov_trace", "mst_connected", "tokens"].map(String::from));
    cols
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidScenario(format!("i/o: {e}"))
}

/// One row per (epoch, agent); agents are 1-based.
pub fn write_timeseries<W: Write>(result: &ScenarioResult, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(csv_header(result.dim)).map_err(io_err)?;
    let d = result.dim;
    for rec in &result.records {
        let tokens = rec.tokens.bitstring();
        for agent in 0..result.agents {
            let mut row = vec![rec.epoch.to_string(), (agent + 1).to_string()];
            row.extend(
                rec.positions[agent * d..(agent + 1) * d]
                    .iter()
                    .map(f64::to_string),
            );
            row.extend(
                rec.estimates[agent * d..(agent + 1) * d]
                    .iter()
                    .map(f64::to_string),
            );
            row.push(rec.formation_error.to_string());
            row.push(rec.cov_trace.to_string());
            row.push(rec.mst_connected().to_string());
            row.push(tokens.clone());
            w.write_record(&row).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn timeseries_string(result: &ScenarioResult) -> Result<String> {
    let mut buf = Vec::new();
    write_timeseries(result, &mut buf)?;
    String::from_utf8(buf).map_err(io_err)
}

/// Recomputes the run summary from a time series written by [`write_timeseries`].
pub fn summary_from_timeseries<R: Read>(input: R) -> Result<Summary> {
    let mut reader = csv::ReaderBuilder::new().from_reader(input);
    let headers = reader.headers().map_err(io_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidScenario(format!("timeseries is missing column `{name}`")))
    };
    let (epoch_col, fe_col, cov_col, conn_col) = (
        col("epoch")?,
        col("formation_error")?,
        col("cov_trace")?,
        col("mst_connected")?,
    );
    let parse_f = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidScenario(format!("bad number `{s}`")))
    };

    let mut series: Vec<(f64, f64, bool)> = Vec::new();
    let mut last_epoch = None;
    for row in reader.records() {
        let row = row.map_err(io_err)?;
        let epoch = row[epoch_col].to_string();
        if last_epoch.as_deref() == Some(epoch.as_str()) {
            continue;
        }
        let connected = match &row[conn_col] {
            "true" => true,
            "false" => false,
            other => return Err(Error::InvalidScenario(format!("bad boolean `{other}`"))),
        };
        series.push((parse_f(&row[fe_col])?, parse_f(&row[cov_col])?, connected));
        last_epoch = Some(epoch);
    }
    Ok(Summary::from_series(&series))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: String,
    pub summary: Summary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// Seed taken from the `FORMNET_SEED` environment variable, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_env_override: Option<u64>,
    pub config: ScenarioFile,
    pub runs: Vec<RunSummary>,
}

impl SummaryFile {
    pub fn new(
        config: ScenarioFile,
        seed: u64,
        seed_env_override: Option<u64>,
        results: &[&ScenarioResult],
    ) -> Self {
        SummaryFile {
            tool: "formnet".into(),
            version: crate::VERSION.into(),
            seed,
            seed_env_override,
            config,
            runs: results
                .iter()
                .map(|r| RunSummary {
                    strategy: r.strategy.clone(),
                    summary: r.summary.clone(),
                    warnings: r.warnings.clone(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}
