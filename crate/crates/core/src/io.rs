//! Dataset ingestion, key=value configuration files, run manifests and
//! output rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::AreTable;
use crate::error::{Error, Result};
use crate::estimation::{CellOutcome, FitGrid, FitResult};
use crate::models::Model;
use crate::simulation::{Contamination, LambdaCheck, SimPlan, SimReport};
use crate::table::FrequencyTable;

pub const DROSOPHILA_RUN1: &str = include_str!("../data/drosophila_run1.csv");
pub const DROSOPHILA_RUN2: &str = include_str!("../data/drosophila_run2.csv");

/// Datasets compiled into the binary, addressable as `builtin:<name>`.
pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "drosophila-run1" => Some(DROSOPHILA_RUN1),
        "drosophila-run2" => Some(DROSOPHILA_RUN2),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    /// `x,count` rows.
    Frequency,
    /// One observation per line.
    Raw,
    /// Decided by the number of fields on the first data line.
    Auto,
}

impl DataFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "frequency" | "freq" => Ok(DataFormat::Frequency),
            "raw" => Ok(DataFormat::Raw),
            "auto" => Ok(DataFormat::Auto),
            other => Err(Error::invalid(format!("unknown data format '{other}'"))),
        }
    }
}

fn parse_u64(field: &str, line: usize, what: &str) -> Result<u64> {
    let field = field.trim();
    if field.starts_with('-') {
        return Err(Error::Parse {
            line,
            message: format!("negative {what} '{field}'"),
        });
    }
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} '{field}'"),
    })
}

/// Parses dataset text. Blank lines and `#` comments are skipped; a first
/// line that does not parse as numbers is taken as a header.
pub fn parse_dataset(text: &str, format: DataFormat) -> Result<FrequencyTable> {
    let mut rows = Vec::new();
    let mut format = format;
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split(',').map(str::trim).collect();
        if !seen_data && fields.iter().any(|f| f.parse::<i128>().is_err()) && fields.iter().all(|f| {
            f.chars().next().is_some_and(|c| c.is_alphabetic() || c == '_')
        }) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        if format == DataFormat::Auto {
            format = match fields.len() {
                1 => DataFormat::Raw,
                2 => DataFormat::Frequency,
                k => {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected 1 or 2 fields, found {k}"),
                    })
                }
            };
        }
        match (format, fields.as_slice()) {
            (DataFormat::Frequency, [x, c]) => rows.push((parse_u64(x, line, "support point")?, parse_u64(c, line, "count")?)),
            (DataFormat::Raw, [x]) => rows.push((parse_u64(x, line, "observation")?, 1)),
            (_, f) => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} field(s), found {}", if format == DataFormat::Raw { 1 } else { 2 }, f.len()),
                })
            }
        }
    }
    FrequencyTable::from_counts(rows)
}

/// Reads a dataset from a path or a `builtin:` alias.
pub fn ingest(source: &str, format: DataFormat) -> Result<FrequencyTable> {
    parse_dataset(&read_source(source)?, format)
}

pub fn read_source(source: &str) -> Result<String> {
    if let Some(name) = source.strip_prefix("builtin:") {
        return builtin(name)
            .map(str::to_string)
            .ok_or_else(|| Error::invalid(format!("unknown builtin dataset '{name}'")));
    }
    Ok(std::fs::read_to_string(Path::new(source))?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `key = value` lines; `#` starts a comment. Keys may not repeat.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected key = value, found '{content}'"),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key '{k}'"),
            });
        }
    }
    Ok(out)
}

/// Comma-separated reals.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("invalid number '{s}'")))
        })
        .collect()
}

const PLAN_KEYS: [&str; 10] = [
    "model",
    "theta_true",
    "n",
    "replicates",
    "alpha",
    "lambda",
    "epsilon",
    "location",
    "seed",
    "lambdas",
];

/// Plan file with the fields of [`SimPlan`]; `epsilon` and `location`
/// together describe contamination. An optional `lambdas` list requests a
/// lambda-independence check and is returned separately.
pub fn parse_plan(text: &str) -> Result<(SimPlan, Option<Vec<f64>>)> {
    let kv = parse_key_values(text)?;
    let line_of = |key: &str| {
        text.lines()
            .position(|l| l.split('=').next().is_some_and(|k| k.trim() == key))
            .map_or(0, |p| p + 1)
    };
    if let Some(unknown) = kv.keys().find(|k| !PLAN_KEYS.contains(&k.as_str())) {
        return Err(Error::Parse {
            line: line_of(unknown),
            message: format!("unknown plan key '{unknown}'"),
        });
    }
    fn num<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str, line: usize) -> Result<Option<T>> {
        kv.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid value '{v}' for {key}"),
                })
            })
            .transpose()
    }
    let required = |key: &str| Error::Parse {
        line: 0,
        message: format!("missing plan key '{key}'"),
    };
    let model = Model::from_name(kv.get("model").ok_or_else(|| required("model"))?)?;
    let epsilon: Option<f64> = num(&kv, "epsilon", line_of("epsilon"))?;
    let location: Option<u64> = num(&kv, "location", line_of("location"))?;
    let contamination = match (epsilon, location) {
        (Some(epsilon), Some(location)) => Some(Contamination { epsilon, location }),
        (None, None) => None,
        _ => {
            return Err(Error::Parse {
                line: line_of("epsilon").max(line_of("location")),
                message: "epsilon and location must be given together".into(),
            })
        }
    };
    let theta_true: Option<f64> = num(&kv, "theta_true", line_of("theta_true"))?;
    let n: Option<u64> = num(&kv, "n", line_of("n"))?;
    let replicates: Option<usize> = num(&kv, "replicates", line_of("replicates"))?;
    let alpha: Option<f64> = num(&kv, "alpha", line_of("alpha"))?;
    let lambda: Option<f64> = num(&kv, "lambda", line_of("lambda"))?;
    let seed: Option<u64> = num(&kv, "seed", line_of("seed"))?;
    let plan = SimPlan {
        model,
        theta_true: theta_true.ok_or_else(|| required("theta_true"))?,
        n: n.ok_or_else(|| required("n"))?,
        replicates: replicates.ok_or_else(|| required("replicates"))?,
        alpha: alpha.ok_or_else(|| required("alpha"))?,
        lambda: lambda.unwrap_or(0.0),
        contamination,
        seed: seed.ok_or_else(|| required("seed"))?,
    };
    let lambdas = kv.get("lambdas").map(|v| parse_list(v)).transpose()?;
    Ok((plan, lambdas))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: BTreeMap<String, String>,
    pub dataset: Option<DatasetInfo>,
    pub tool_version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>, dataset: Option<DatasetInfo>) -> Self {
        let timestamp_unix = std::env::var("SOURCE_DATE_EPOCH")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or_else(|| {
                std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0)
            });
        Self {
            command: command.to_string(),
            parameters,
            dataset,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix,
        }
    }

    fn comment_lines(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# command: {}", self.command);
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "# {k}: {v}");
        }
        if let Some(d) = &self.dataset {
            let _ = writeln!(s, "# dataset: {} sha256={}", d.source, d.sha256);
        }
        let _ = writeln!(s, "# version: {}", self.tool_version);
        let _ = writeln!(s, "# timestamp_unix: {}", self.timestamp_unix);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

impl OutputFormat {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "text" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub manifest: RunManifest,
    pub result: T,
}

fn json<T: Serialize>(manifest: &RunManifest, result: &T) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope {
        manifest: manifest.clone(),
        result,
    })
    .expect("results serialize");
    s.push('\n');
    s
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Fit rendering. `decimals` applies to the text format only.
pub fn render_fit(fit: &FitResult, manifest: &RunManifest, format: OutputFormat, decimals: usize) -> String {
    match format {
        OutputFormat::Json => json(manifest, fit),
        OutputFormat::Csv => {
            let mut s = manifest.comment_lines();
            s.push_str("theta_hat,std_error,objective,grad_norm,iterations,seeds_tried,converged\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                fit.theta_hat,
                opt(fit.std_error),
                fit.objective,
                fit.grad_norm,
                fit.iterations,
                fit.seeds_tried,
                fit.converged
            );
            s
        }
        OutputFormat::Text => {
            let mut s = manifest.comment_lines();
            let _ = writeln!(s, "theta_hat   {:.*}", decimals, fit.theta_hat);
            if let Some(se) = fit.std_error {
                let _ = writeln!(s, "std_error   {:.*}", decimals, se);
            }
            let _ = writeln!(s, "objective   {:e}", fit.objective);
            let _ = writeln!(s, "grad_norm   {:e} (scale {:e})", fit.grad_norm, fit.grad_scale);
            let _ = writeln!(s, "iterations  {}", fit.iterations);
            let _ = writeln!(s, "seeds       {}", fit.seeds_tried);
            s
        }
    }
}

fn cell_text(cell: &CellOutcome, decimals: usize) -> String {
    match cell {
        CellOutcome::Fitted(f) => format!("{:.*}", decimals, f.theta_hat),
        CellOutcome::Inadmissible { .. } => "--".into(),
        CellOutcome::NotConverged { .. } => "n/c".into(),
        CellOutcome::Failed { .. } => "err".into(),
    }
}

fn cell_state(cell: &CellOutcome) -> &'static str {
    match cell {
        CellOutcome::Fitted(_) => "fitted",
        CellOutcome::Inadmissible { .. } => "inadmissible",
        CellOutcome::NotConverged { .. } => "not_converged",
        CellOutcome::Failed { .. } => "failed",
    }
}

pub fn render_grid(grid: &FitGrid, manifest: &RunManifest, format: OutputFormat, decimals: usize) -> String {
    match format {
        OutputFormat::Json => json(manifest, grid),
        OutputFormat::Csv => {
            let mut s = manifest.comment_lines();
            s.push_str("lambda,alpha,state,theta_hat,objective,grad_norm,iterations\n");
            for (i, lambda) in grid.lambdas.iter().enumerate() {
                for (j, alpha) in grid.alphas.iter().enumerate() {
                    let cell = &grid.cells[i][j];
                    let (t, o, g, it) = match cell {
                        CellOutcome::Fitted(f) => (
                            f.theta_hat.to_string(),
                            f.objective.to_string(),
                            f.grad_norm.to_string(),
                            f.iterations.to_string(),
                        ),
                        _ => Default::default(),
                    };
                    let _ = writeln!(s, "{lambda},{alpha},{},{t},{o},{g},{it}", cell_state(cell));
                }
            }
            s
        }
        OutputFormat::Text => {
            let mut s = manifest.comment_lines();
            let width = (decimals + 4).max(6);
            let _ = write!(s, "{:>6}", "lambda");
            for a in &grid.alphas {
                let _ = write!(s, " {:>width$}", format!("a={a}"));
            }
            s.push('\n');
            for (i, lambda) in grid.lambdas.iter().enumerate() {
                let _ = write!(s, "{:>6}", lambda);
                for cell in &grid.cells[i] {
                    let _ = write!(s, " {:>width$}", cell_text(cell, decimals));
                }
                s.push('\n');
            }
            s
        }
    }
}

pub fn render_are(table: &AreTable, manifest: &RunManifest, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(manifest, table),
        OutputFormat::Csv => {
            let mut s = manifest.comment_lines();
            s.push_str("theta,alpha,are_percent\n");
            for (theta, row) in table.thetas.iter().zip(&table.values) {
                for (alpha, v) in table.alphas.iter().zip(row) {
                    let _ = writeln!(s, "{theta},{alpha},{v}");
                }
            }
            s
        }
        OutputFormat::Text => {
            let mut s = manifest.comment_lines();
            let _ = write!(s, "{:>8}", "theta");
            for a in &table.alphas {
                let _ = write!(s, " {:>7}", a);
            }
            s.push('\n');
            for (theta, row) in table.thetas.iter().zip(&table.values) {
                let _ = write!(s, "{:>8}", theta);
                for v in row {
                    let _ = write!(s, " {:>7.2}", v);
                }
                s.push('\n');
            }
            s
        }
    }
}

fn report_pairs(r: &SimReport) -> Vec<(&'static str, String)> {
    vec![
        ("model", r.plan.model.to_string()),
        ("theta_true", r.plan.theta_true.to_string()),
        ("n", r.plan.n.to_string()),
        ("replicates", r.plan.replicates.to_string()),
        ("alpha", r.plan.alpha.to_string()),
        ("lambda", r.plan.lambda.to_string()),
        ("successes", r.successes.to_string()),
        ("failure_count", r.failure_count.to_string()),
        ("inadmissible", r.inadmissible.to_string()),
        ("not_converged", r.not_converged.to_string()),
        ("mean_theta_hat", r.mean_theta_hat.to_string()),
        ("sd_theta_hat", opt(r.sd_theta_hat)),
        ("empirical_var_scaled", opt(r.empirical_var_scaled)),
        ("theoretical_sandwich", r.theoretical_sandwich.to_string()),
        ("normality_stat", opt(r.normality.map(|t| t.statistic))),
        ("normality_p", opt(r.normality.map(|t| t.p_value))),
    ]
}

pub fn render_report(report: &SimReport, manifest: &RunManifest, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(manifest, report),
        OutputFormat::Csv => {
            let pairs = report_pairs(report);
            let mut s = manifest.comment_lines();
            s.push_str(&pairs.iter().map(|p| p.0).collect::<Vec<_>>().join(","));
            s.push('\n');
            s.push_str(&pairs.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join(","));
            s.push('\n');
            s
        }
        OutputFormat::Text => {
            let mut s = manifest.comment_lines();
            for (k, v) in report_pairs(report) {
                let _ = writeln!(s, "{k:<22}{}", if v.is_empty() { "undefined" } else { &v });
            }
            if let Some(v) = report.empirical_var_scaled {
                let rel = (v - report.theoretical_sandwich) / report.theoretical_sandwich;
                let _ = writeln!(s, "{:<22}{:+.4}", "var_rel_error", rel);
            }
            s
        }
    }
}

pub fn render_lambda_check(check: &LambdaCheck, manifest: &RunManifest, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => json(manifest, check),
        OutputFormat::Csv => {
            let mut s = manifest.comment_lines();
            s.push_str("lambda,empirical_var_scaled,mean_theta_hat\n");
            for (r, v) in check.reports.iter().zip(&check.variances) {
                let _ = writeln!(s, "{},{v},{}", r.plan.lambda, r.mean_theta_hat);
            }
            s
        }
        OutputFormat::Text => {
            let mut s = manifest.comment_lines();
            for (r, v) in check.reports.iter().zip(&check.variances) {
                let _ = writeln!(s, "lambda {:>6}  var {:.5}  mean {:.5}", r.plan.lambda, v, r.mean_theta_hat);
            }
            let _ = writeln!(
                s,
                "max relative difference {:.4} vs band {:.4}: {}",
                check.max_rel_diff,
                check.noise_band,
                if check.within_band { "within" } else { "outside" }
            );
            s
        }
    }
}
