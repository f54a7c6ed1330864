//! CSV and JSON rendering. Floats are written in their shortest
//! round-trip decimal form.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use mlmc_core::mlmc::TableRates;
use mlmc_core::validation::OracleOutcome;
use mlmc_core::{LevelEstimate, MlmcResult};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONVERGE_HEADER: &str =
    "level,h,N,mean_Y,var_Y,mean_P,var_P,kurt_Y,cost,consistency_se,alpha_hat,beta_hat";

pub const PRICE_HEADER: &str =
    "run,seed,estimate,levels,total_cost,eps,bias_estimate,stat_error,converged,allocations";

pub const VALIDATE_HEADER: &str = "check,passed,statistic,threshold,detail";

/// One row of a convergence table.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergeRow {
    pub level: u32,
    pub h: f64,
    #[serde(flatten)]
    pub estimate: LevelEstimate,
    /// `None` on the first row.
    pub consistency_se: Option<f64>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn converge_csv(rows: &[ConvergeRow], rates: &TableRates) -> String {
    let mut s = String::from(CONVERGE_HEADER);
    s.push('\n');
    for r in rows {
        let e = &r.estimate;
        let fields = [
            r.level.to_string(),
            num(r.h),
            e.n_samples.to_string(),
            num(e.mean_y()),
            num(e.var_y()),
            num(e.mean_p()),
            num(e.var_p()),
            num(e.kurtosis_y()),
            e.cost.to_string(),
            opt(r.consistency_se),
            String::new(),
            String::new(),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    let alpha = rates.alpha.as_ref().map(|f| f.exponent);
    let beta = rates.beta.as_ref().map(|f| f.exponent);
    s.push_str(&format!("-1,,,,,,,,,,{},{}\n", opt(alpha), opt(beta)));
    s
}

pub fn price_csv(runs: &[(u64, MlmcResult)]) -> String {
    let mut s = String::from(PRICE_HEADER);
    s.push('\n');
    for (i, (seed, r)) in runs.iter().enumerate() {
        let allocations: Vec<String> = r.allocations.iter().map(u64::to_string).collect();
        let fields = [
            i.to_string(),
            seed.to_string(),
            num(r.estimate),
            r.levels.to_string(),
            r.total_cost.to_string(),
            num(r.eps),
            num(r.bias_estimate),
            num(r.stat_error),
            r.converged.to_string(),
            allocations.join(";"),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn validate_csv(outcomes: &[OracleOutcome]) -> String {
    let mut s = String::from(VALIDATE_HEADER);
    s.push('\n');
    for o in outcomes {
        let detail = o.detail.replace('"', "'");
        s.push_str(&format!(
            "{},{},{},{},\"{detail}\"\n",
            o.name,
            o.passed,
            num(o.statistic),
            num(o.threshold)
        ));
    }
    s
}

#[derive(Debug, Serialize)]
pub struct VersionInfo {
    pub package: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl VersionInfo {
    pub fn new(with_timestamp: bool) -> Self {
        Self {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            timestamp: with_timestamp.then(|| chrono::Utc::now().to_rfc3339()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct JsonReport<'a, R: Serialize, F: Serialize> {
    pub config: &'a RunConfig,
    pub results: R,
    pub fits: F,
    pub version: VersionInfo,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialise output: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `text` to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let io_err = |source: io::Error| CliError::Io {
        path: path.map_or("<stdout>".into(), |p| p.display().to_string()),
        source,
    };
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(io_err)?);
            w.write_all(text.as_bytes()).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(io_err)?;
            out.flush().map_err(io_err)
        }
    }
}
