//! Multilevel estimation: per-level sampling, optimal sample allocation and
//! the adaptive driver.
//!
//! Samples of a level are processed in fixed chunks of [`CHUNK`] consecutive
//! indices. Chunk accumulators are merged in index order, so estimates are
//! bit-identical for any number of worker threads.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::brownian::{sample_selected_increments_into, LevelGrid};
use crate::error::{Error, Result};
use crate::model::ScalarSdeModel;
use crate::payoffs::PayoffSpec;
use crate::schemes::{simulate_into, CoupledPathRecord, Scheme};
use crate::stats::{fit_rate, RateFit, RunningMoments, DEFAULT_FIT_LEVELS};
use crate::stream::StreamKey;

/// Samples per work item.
pub const CHUNK: u64 = 1024;

/// Relative error of `V_l` above which a level is flagged.
pub const VARIANCE_WARNING_THRESHOLD: f64 = 0.1;

/// A model, a payoff and a time-stepping scheme.
#[derive(Debug, Clone)]
pub struct MlmcProblem {
    pub model: ScalarSdeModel,
    pub payoff: PayoffSpec,
    pub scheme: Scheme,
    base_level: u32,
}

impl MlmcProblem {
    pub fn new(model: ScalarSdeModel, payoff: PayoffSpec, scheme: Scheme) -> Result<Self> {
        payoff.validate(&model)?;
        let base_level = payoff.base_level(model.horizon())?;
        Ok(Self {
            model,
            payoff,
            scheme,
            base_level,
        })
    }

    /// Coarsest level of the telescoping sum; its estimator is the fine
    /// payoff alone.
    pub fn base_level(&self) -> u32 {
        self.base_level
    }
}

/// Timesteps per coupled sample: fine plus coarse.
pub fn cost_per_sample(level: u32) -> u64 {
    if level == 0 {
        1
    } else {
        (1u64 << level) + (1u64 << (level - 1))
    }
}

/// Accumulated samples of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub level: u32,
    pub n_samples: u64,
    /// Moments of `Y = P^f_l - P^c_{l-1}` (of `P^f` alone at the base level).
    pub y: RunningMoments,
    /// Moments of the fine payoff `P^f_l`.
    pub p: RunningMoments,
    /// Moments of the coarse payoff `P^c_{l-1}`; all zero at level 0.
    pub p_coarse: RunningMoments,
    /// Timesteps executed.
    pub cost: u64,
    pub variance_warning: bool,
}

impl LevelEstimate {
    fn empty(level: u32) -> Self {
        Self {
            level,
            n_samples: 0,
            y: RunningMoments::new(),
            p: RunningMoments::new(),
            p_coarse: RunningMoments::new(),
            cost: 0,
            variance_warning: false,
        }
    }

    pub fn mean_y(&self) -> f64 {
        self.y.mean()
    }

    pub fn var_y(&self) -> f64 {
        self.y.variance()
    }

    pub fn mean_p(&self) -> f64 {
        self.p.mean()
    }

    pub fn var_p(&self) -> f64 {
        self.p.variance()
    }

    pub fn mean_p_coarse(&self) -> f64 {
        self.p_coarse.mean()
    }

    pub fn kurtosis_y(&self) -> f64 {
        self.y.kurtosis()
    }

    pub fn cost_per_sample(&self) -> u64 {
        cost_per_sample(self.level)
    }

    fn absorb(&mut self, m: &ChunkMoments) {
        self.y = self.y.merge(&m.y);
        self.p = self.p.merge(&m.p);
        self.p_coarse = self.p_coarse.merge(&m.p_coarse);
        self.n_samples = self.y.count();
        self.cost = self.n_samples * cost_per_sample(self.level);
        let rel = self.y.variance_relative_error();
        self.variance_warning = rel > VARIANCE_WARNING_THRESHOLD;
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct ChunkMoments {
    y: RunningMoments,
    p: RunningMoments,
    p_coarse: RunningMoments,
}

impl ChunkMoments {
    fn merge(&self, other: &Self) -> Self {
        Self {
            y: self.y.merge(&other.y),
            p: self.p.merge(&other.p),
            p_coarse: self.p_coarse.merge(&other.p_coarse),
        }
    }
}

fn sample_chunk(
    problem: &MlmcProblem,
    grid: &LevelGrid,
    key: &StreamKey,
    range: std::ops::Range<u64>,
) -> Result<ChunkMoments> {
    let mut stream = key.stream(range.start);
    let mut rec = CoupledPathRecord::default();
    let mut m = ChunkMoments::default();
    let level = grid.level();
    let telescoping = level > problem.base_level;
    let draws = problem.payoff.draws();
    for sample in range {
        let wrap = |source: Error| Error::InvalidSample {
            level,
            sample,
            source: Box::new(source),
        };
        stream.reset(sample);
        sample_selected_increments_into(&mut stream, grid, &mut rec.increments, draws);
        simulate_into(&problem.model, grid, problem.scheme, &mut rec).map_err(wrap)?;
        let pair = problem.payoff.evaluate(&rec).map_err(wrap)?;
        let diff = if telescoping { pair.difference() } else { pair.fine };
        if !diff.is_finite() || !pair.fine.is_finite() {
            return Err(wrap(Error::NonFinite {
                what: "payoff",
                x: pair.fine,
                t: grid.horizon(),
            }));
        }
        m.y.push(diff);
        m.p.push(pair.fine);
        m.p_coarse.push(pair.coarse);
    }
    Ok(m)
}

/// Draws samples `start..start + count` of `level` and returns their moments.
fn sample_range(
    problem: &MlmcProblem,
    level: u32,
    start: u64,
    count: u64,
    seed: u64,
) -> Result<ChunkMoments> {
    if level < problem.base_level {
        return Err(Error::InvalidParameter(format!(
            "level {level} is below the payoff's base level {}",
            problem.base_level
        )));
    }
    let grid = LevelGrid::new(level, problem.model.horizon())?;
    let key = StreamKey::new(seed, level);
    let end = start + count;
    let n_chunks = count.div_ceil(CHUNK);
    let parts: Vec<ChunkMoments> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = start + c * CHUNK;
            let hi = (lo + CHUNK).min(end);
            sample_chunk(problem, &grid, &key, lo..hi)
        })
        .collect::<Result<_>>()?;
    Ok(parts
        .iter()
        .fold(ChunkMoments::default(), |acc, part| acc.merge(part)))
}

/// Estimates level `level` from `n` coupled samples.
pub fn estimate_level(problem: &MlmcProblem, level: u32, n: u64, seed: u64) -> Result<LevelEstimate> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples per level, got {n}"
        )));
    }
    let mut est = LevelEstimate::empty(level);
    extend_level(problem, &mut est, n, seed)?;
    Ok(est)
}

/// Adds `extra` samples to `est`, continuing its sample indices.
pub fn extend_level(problem: &MlmcProblem, est: &mut LevelEstimate, extra: u64, seed: u64) -> Result<()> {
    if extra == 0 {
        return Ok(());
    }
    let moments = sample_range(problem, est.level, est.n_samples, extra, seed)?;
    est.absorb(&moments);
    if est.variance_warning {
        log::warn!(
            "level {}: relative error of the variance estimate is {:.3} (kurtosis {:.1}, N = {})",
            est.level,
            est.y.variance_relative_error(),
            est.kurtosis_y(),
            est.n_samples
        );
    }
    Ok(())
}

/// Sample counts minimising `sum V_l / N_l` at fixed cost, sized for a
/// statistical error of `eps^2 / 2`. Every level gets at least `min_count`.
pub fn optimal_allocation(
    variances: &[f64],
    costs: &[f64],
    eps: f64,
    min_count: u64,
) -> Result<Vec<u64>> {
    if variances.len() != costs.len() {
        return Err(Error::InvalidParameter(
            "variances and costs differ in length".into(),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    if variances.iter().any(|v| !(*v >= 0.0)) || costs.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidParameter(
            "variances must be >= 0 and costs > 0".into(),
        ));
    }
    let total: f64 = variances
        .iter()
        .zip(costs)
        .map(|(v, c)| (v * c).sqrt())
        .sum();
    Ok(variances
        .iter()
        .zip(costs)
        .map(|(v, c)| {
            let n = (2.0 / (eps * eps) * (v / c).sqrt() * total).ceil();
            (n as u64).max(min_count)
        })
        .collect())
}

/// Settings of the adaptive driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcConfig {
    /// Assumed weak order of convergence.
    pub alpha: f64,
    /// Multiplier on the extrapolated bias.
    pub bias_safety: f64,
    pub n_warm: u64,
    pub l_min: u32,
    pub l_max: u32,
    pub seed: u64,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            bias_safety: 1.0,
            n_warm: 10_000,
            l_min: 2,
            l_max: 14,
            seed: 0,
        }
    }
}

impl MlmcConfig {
    /// Defaults for a payoff family. Barrier and digital estimators only
    /// reach weak order `1 - δ`, so their bias estimate gets a margin.
    pub fn for_payoff(payoff: &PayoffSpec) -> Self {
        Self {
            bias_safety: if payoff.is_discontinuous() { 1.5 } else { 1.0 },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmcResult {
    /// Sum of the level estimates.
    pub estimate: f64,
    /// Finest level used.
    pub levels: u32,
    pub base_level: u32,
    /// `N_l` for levels `base_level..=levels`.
    pub allocations: Vec<u64>,
    pub level_estimates: Vec<LevelEstimate>,
    pub total_cost: u64,
    pub eps: f64,
    pub bias_estimate: f64,
    /// `sqrt(sum V_l / N_l)`.
    pub stat_error: f64,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Failed(#[from] Error),
    #[error("bias test still failing at the maximum level {}", .0.levels)]
    LevelLimit(Box<MlmcResult>),
}

fn summarize(
    levels: &[LevelEstimate],
    base_level: u32,
    eps: f64,
    bias_estimate: f64,
    converged: bool,
) -> MlmcResult {
    MlmcResult {
        estimate: levels.iter().map(LevelEstimate::mean_y).sum(),
        levels: levels.last().map_or(base_level, |l| l.level),
        base_level,
        allocations: levels.iter().map(|l| l.n_samples).collect(),
        total_cost: levels.iter().map(|l| l.cost).sum(),
        eps,
        bias_estimate,
        stat_error: levels
            .iter()
            .map(|l| l.var_y() / l.n_samples as f64)
            .sum::<f64>()
            .sqrt(),
        converged,
        level_estimates: levels.to_vec(),
    }
}

/// Adaptive multilevel estimate with root-mean-square error target `eps`.
///
/// Starts with `n_warm` samples on levels up to `l_min`, tops up each level
/// to its optimal allocation, and adds levels until the extrapolated bias
/// `safety * |Y_L| / (2^alpha - 1)` is at most `eps / sqrt(2)`.
pub fn mlmc_run(problem: &MlmcProblem, eps: f64, config: &MlmcConfig) -> std::result::Result<MlmcResult, RunError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")).into());
    }
    if !(config.alpha >= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "alpha must be >= 1/2, got {}",
            config.alpha
        ))
        .into());
    }
    if config.n_warm < 2 {
        return Err(Error::InvalidParameter("n_warm must be at least 2".into()).into());
    }
    let base = problem.base_level();
    let l_min = config.l_min.max(base);
    if config.l_max < l_min {
        return Err(Error::InvalidParameter(format!(
            "l_max {} below the starting level {l_min}",
            config.l_max
        ))
        .into());
    }
    let seed = config.seed;
    let bias_target = eps / std::f64::consts::SQRT_2;
    let bias_scale = config.bias_safety / (2f64.powf(config.alpha) - 1.0);

    let mut levels = (base..=l_min)
        .map(|l| estimate_level(problem, l, config.n_warm, seed))
        .collect::<Result<Vec<_>>>()?;

    loop {
        let variances: Vec<f64> = levels.iter().map(LevelEstimate::var_y).collect();
        let costs: Vec<f64> = levels.iter().map(|l| l.cost_per_sample() as f64).collect();
        let targets = optimal_allocation(&variances, &costs, eps, config.n_warm)?;

        let mut extended = false;
        for (est, &target) in levels.iter_mut().zip(&targets) {
            let missing = target.saturating_sub(est.n_samples);
            if missing > 0 {
                // overshoot by 1% to avoid long tails of tiny top-ups
                let extra = missing.max(est.n_samples / 100);
                extend_level(problem, est, extra, seed)?;
                extended = true;
            }
        }
        if extended {
            continue;
        }

        let finest = levels.last().expect("at least one level");
        let bias = if finest.level > base {
            bias_scale * finest.mean_y().abs()
        } else {
            f64::INFINITY
        };
        if bias <= bias_target {
            return Ok(summarize(&levels, base, eps, bias, true));
        }
        let next = finest.level + 1;
        if next > config.l_max {
            return Err(RunError::LevelLimit(Box::new(summarize(
                &levels, base, eps, bias, false,
            ))));
        }
        log::debug!("adding level {next}: bias estimate {bias:.3e} > {bias_target:.3e}");
        levels.push(estimate_level(problem, next, config.n_warm, seed)?);
    }
}

/// Independent fixed-size estimates on each level of `levels`.
pub fn convergence_table(
    problem: &MlmcProblem,
    levels: RangeInclusive<u32>,
    n: u64,
    seed: u64,
) -> Result<Vec<LevelEstimate>> {
    if n < 100 {
        return Err(Error::InvalidParameter(format!(
            "convergence tables need at least 100 samples per level, got {n}"
        )));
    }
    levels.map(|l| estimate_level(problem, l, n, seed)).collect()
}

/// `|E[P_l] - E[P_{l-1}] - E[Y_l]|` in units of its combined standard error.
pub fn consistency_statistic(coarser: &LevelEstimate, finer: &LevelEstimate) -> f64 {
    let gap = (finer.mean_p() - coarser.mean_p() - finer.mean_y()).abs();
    let se = (finer.p.std_error().powi(2) + coarser.p.std_error().powi(2) + finer.y.std_error().powi(2))
        .sqrt();
    if se == 0.0 {
        if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        gap / se
    }
}

/// `|E[P^c_l] - E[P^f_{l-1}]|` in units of its combined standard error;
/// the two expectations agree when fine and coarse estimators are coupled
/// consistently.
pub fn coupling_statistic(coarser: &LevelEstimate, finer: &LevelEstimate) -> f64 {
    let gap = (finer.mean_p_coarse() - coarser.mean_p()).abs();
    let se = (finer.p_coarse.std_error().powi(2) + coarser.p.std_error().powi(2)).sqrt();
    if se == 0.0 {
        if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        gap / se
    }
}

/// Rates fitted to a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRates {
    /// Weak rate from `|E[Y_l]|`.
    pub alpha: Option<RateFit>,
    /// Variance rate from `V_l`.
    pub beta: Option<RateFit>,
}

/// Fits `alpha` and `beta` over the table levels inside `range` (excluding
/// the base level). A fit is `None` when it is undefined, e.g. with
/// vanishing variances.
pub fn fit_table_rates(table: &[LevelEstimate], range: RangeInclusive<u32>, base_level: u32) -> TableRates {
    let rows: Vec<&LevelEstimate> = table
        .iter()
        .filter(|e| range.contains(&e.level) && e.level > base_level)
        .collect();
    let levels: Vec<u32> = rows.iter().map(|e| e.level).collect();
    let means: Vec<f64> = rows.iter().map(|e| e.mean_y().abs()).collect();
    let vars: Vec<f64> = rows.iter().map(|e| e.var_y()).collect();
    TableRates {
        alpha: fit_rate(&levels, &means).ok(),
        beta: fit_rate(&levels, &vars).ok(),
    }
}

/// [`fit_table_rates`] over the default asymptotic range.
pub fn fit_default_rates(table: &[LevelEstimate], base_level: u32) -> TableRates {
    fit_table_rates(table, DEFAULT_FIT_LEVELS, base_level)
}
