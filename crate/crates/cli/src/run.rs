//! The `converge`, `price` and `validate` commands.

use mlmc_core::mlmc::{consistency_statistic, fit_table_rates, TableRates};
use mlmc_core::stats::DEFAULT_FIT_LEVELS;
use mlmc_core::validation::{self, OracleOutcome, SuiteSizes};
use mlmc_core::{convergence_table, mlmc_run, LevelGrid, MlmcResult, RunError};
use serde::Serialize;

use crate::config::{Mode, OutputFormat, RunConfig};
use crate::error::CliError;
use crate::output::{self, ConvergeRow, JsonReport, VersionInfo};

/// Fits over the default asymptotic levels when the table covers at least
/// three of them, otherwise over every level above the base.
pub fn table_rates(rows: &[ConvergeRow], base_level: u32) -> TableRates {
    let table: Vec<_> = rows.iter().map(|r| r.estimate.clone()).collect();
    let in_default = table
        .iter()
        .filter(|e| DEFAULT_FIT_LEVELS.contains(&e.level) && e.level > base_level)
        .count();
    if in_default >= 3 {
        fit_table_rates(&table, DEFAULT_FIT_LEVELS, base_level)
    } else {
        fit_table_rates(&table, 0..=u32::MAX, base_level)
    }
}

/// Builds the rows of a convergence table.
pub fn converge_rows(cfg: &RunConfig) -> Result<(Vec<ConvergeRow>, TableRates), CliError> {
    let problem = cfg.problem()?;
    let base = problem.base_level();
    if cfg.levels.start < base {
        return Err(CliError::Config(format!(
            "observation times need levels >= {base}, got {}",
            cfg.levels
        )));
    }
    let table = convergence_table(&problem, cfg.levels.range(), cfg.samples, cfg.seed)?;
    let mut rows: Vec<ConvergeRow> = Vec::with_capacity(table.len());
    for (i, est) in table.iter().enumerate() {
        let consistency_se = (i > 0 && est.level > base)
            .then(|| consistency_statistic(&table[i - 1], est));
        rows.push(ConvergeRow {
            level: est.level,
            h: LevelGrid::new(est.level, cfg.model.horizon)?.h(),
            estimate: est.clone(),
            consistency_se,
        });
    }
    let rates = table_rates(&rows, base);
    Ok((rows, rates))
}

pub fn run_converge(cfg: &RunConfig, timestamp: bool) -> Result<(), CliError> {
    let (rows, rates) = converge_rows(cfg)?;
    let text = match cfg.format {
        OutputFormat::Csv => output::converge_csv(&rows, &rates),
        OutputFormat::Json => output::to_json(&JsonReport {
            config: cfg,
            results: &rows,
            fits: &rates,
            version: VersionInfo::new(timestamp),
        })?,
    };
    output::emit(cfg.out.as_deref(), &text)
}

#[derive(Debug, Serialize)]
struct PriceRun<'a> {
    seed: u64,
    #[serde(flatten)]
    result: &'a MlmcResult,
}

#[derive(Debug, Serialize)]
struct PriceSummary {
    runs: usize,
    mean_estimate: f64,
    mean_cost: f64,
    failed: usize,
}

/// Runs the adaptive estimator `repeat` times with seeds `seed, seed + 1, ...`.
/// Runs that hit the maximum level are kept with `converged = false`.
pub fn price_runs(cfg: &RunConfig) -> Result<Vec<(u64, MlmcResult)>, CliError> {
    let problem = cfg.problem()?;
    let eps = cfg
        .eps
        .ok_or_else(|| CliError::Config("price mode needs eps".into()))?;
    (0..u64::from(cfg.repeat))
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i);
            let driver = cfg.driver(&problem.payoff, seed);
            match mlmc_run(&problem, eps, &driver) {
                Ok(r) => Ok((seed, r)),
                Err(RunError::LevelLimit(partial)) => Ok((seed, *partial)),
                Err(RunError::Failed(e)) => Err(CliError::Numerical(e)),
            }
        })
        .collect()
}

pub fn run_price(cfg: &RunConfig, timestamp: bool) -> Result<(), CliError> {
    let runs = price_runs(cfg)?;
    let failed = runs.iter().filter(|(_, r)| !r.converged).count();
    let text = match cfg.format {
        OutputFormat::Csv => output::price_csv(&runs),
        OutputFormat::Json => {
            let results: Vec<PriceRun> = runs
                .iter()
                .map(|(seed, result)| PriceRun { seed: *seed, result })
                .collect();
            let n = runs.len() as f64;
            let summary = PriceSummary {
                runs: runs.len(),
                mean_estimate: runs.iter().map(|(_, r)| r.estimate).sum::<f64>() / n,
                mean_cost: runs.iter().map(|(_, r)| r.total_cost as f64).sum::<f64>() / n,
                failed,
            };
            output::to_json(&JsonReport {
                config: cfg,
                results,
                fits: summary,
                version: VersionInfo::new(timestamp),
            })?
        }
    };
    output::emit(cfg.out.as_deref(), &text)?;
    if failed > 0 {
        return Err(CliError::LevelLimit(format!(
            "{failed} of {} runs stopped at the maximum level",
            runs.len()
        )));
    }
    Ok(())
}

/// Oracle sizes: `samples` replaces the default bridge-test sample counts
/// when it was set explicitly.
pub fn validate_outcomes(cfg: &RunConfig, samples: Option<u64>) -> Result<Vec<OracleOutcome>, CliError> {
    let mut sizes = SuiteSizes::default();
    if let Some(n) = samples {
        sizes.ks_draws = n as usize;
        sizes.crossing_trials = n as usize;
    }
    Ok(validation::run_all(cfg.seed, sizes)?)
}

pub fn run_validate(cfg: &RunConfig, samples: Option<u64>, timestamp: bool) -> Result<(), CliError> {
    let outcomes = validate_outcomes(cfg, samples)?;
    for o in &outcomes {
        eprintln!("{o}");
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if cfg.out.is_some() {
        let text = match cfg.format {
            OutputFormat::Csv => output::validate_csv(&outcomes),
            OutputFormat::Json => output::to_json(&JsonReport {
                config: cfg,
                results: &outcomes,
                fits: (),
                version: VersionInfo::new(timestamp),
            })?,
        };
        output::emit(cfg.out.as_deref(), &text)?;
    }
    if failed > 0 {
        return Err(CliError::ValidationFailed(failed));
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, samples_flag: Option<u64>, timestamp: bool) -> Result<(), CliError> {
    cfg.validate()?;
    match cfg.mode {
        Some(Mode::Converge) => run_converge(cfg, timestamp),
        Some(Mode::Price) => run_price(cfg, timestamp),
        Some(Mode::Validate) => run_validate(cfg, samples_flag, timestamp),
        None => Err(CliError::Config("no mode selected".into())),
    }
}
