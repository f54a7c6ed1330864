//! Oracle suites for the Brownian-bridge samplers, the normal distribution
//! helpers and the strong order of the time-stepping schemes.
//!
//! Each check returns an [`OracleOutcome`] rather than panicking so that the
//! command-line front end can report every result.

use serde::Serialize;

use crate::brownian::{conditional_minimum, crossing_probability, sample_coupled_increments_into, LevelGrid};
use crate::error::Result;
use crate::model::{gbm_exact_terminal, gbm_model, GbmParams, ScalarSdeModel};
use crate::payoffs::{AsianTreatment, PayoffSpec};
use crate::schemes::{euler_step, milstein_step, simulate_coupled, Scheme};
use crate::stats::{fit_rate, normal_cdf, normal_inv_cdf};
use crate::stream::StreamKey;
use crate::brownian::CoupledIncrements;

/// Result of one oracle check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub name: String,
    pub statistic: f64,
    /// Pass bound on `statistic`; see `detail` for its direction.
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for OracleOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.detail
        )
    }
}

// Domain tags keep oracle streams apart from the level estimators.
const KS_DOMAIN: u64 = 0x6b73_0000_0000;
const CROSSING_DOMAIN: u64 = 0x6372_0000_0000;
const STRONG_DOMAIN: u64 = 0x7374_0000_0000;

/// 1% critical value of the Kolmogorov statistic, scaled by `sqrt(n)`.
pub const KS_CRITICAL_1PCT: f64 = 1.628;

/// Endpoints and parameters of one bridge interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeCase {
    pub s_left: f64,
    pub s_right: f64,
    pub vol: f64,
    pub h: f64,
    pub barrier: f64,
}

/// Intervals used by the bridge oracles: endpoints on both sides of each
/// other, near and far from the barrier, and a long interval.
pub const BRIDGE_CASES: [BridgeCase; 5] = [
    BridgeCase { s_left: 1.0, s_right: 1.0, vol: 0.2, h: 1.0 / 64.0, barrier: 0.97 },
    BridgeCase { s_left: 1.0, s_right: 0.98, vol: 0.2, h: 1.0 / 64.0, barrier: 0.96 },
    BridgeCase { s_left: 0.9, s_right: 1.05, vol: 0.3, h: 0.1, barrier: 0.88 },
    BridgeCase { s_left: 1.2, s_right: 1.1, vol: 0.5, h: 0.25, barrier: 0.95 },
    BridgeCase { s_left: 0.86, s_right: 0.87, vol: 0.2, h: 1.0 / 256.0, barrier: 0.85 },
];

/// Law of the bridge minimum: `P(min <= m) = exp(-2 (a-m)(b-m) / (vol^2 h))`.
pub fn bridge_minimum_cdf(case: &BridgeCase, m: f64) -> f64 {
    let lo = case.s_left.min(case.s_right);
    if m >= lo {
        1.0
    } else {
        (-2.0 * (case.s_left - m) * (case.s_right - m) / (case.vol * case.vol * case.h)).exp()
    }
}

/// Kolmogorov-Smirnov test of [`conditional_minimum`] against
/// [`bridge_minimum_cdf`].
pub fn ks_conditional_minimum(case: &BridgeCase, n: usize, seed: u64, index: u64) -> Result<OracleOutcome> {
    let mut stream = StreamKey::with_domain(seed, KS_DOMAIN + index).stream(0);
    let mut draws = (0..n)
        .map(|_| conditional_minimum(case.s_left, case.s_right, case.vol, case.h, stream.uniform_open()))
        .collect::<Result<Vec<f64>>>()?;
    draws.sort_by(f64::total_cmp);
    let nf = n as f64;
    let d = draws
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let f = bridge_minimum_cdf(case, m);
            (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
        })
        .fold(0.0, f64::max);
    let critical = KS_CRITICAL_1PCT / nf.sqrt();
    Ok(OracleOutcome {
        name: format!("bridge minimum KS #{index}"),
        statistic: d,
        threshold: critical,
        passed: d < critical,
        detail: format!("D = {d:.5} vs 1% critical {critical:.5}, n = {n}"),
    })
}

/// Continuity correction for discretely monitored Brownian minima,
/// `-ζ(1/2)/sqrt(2π)`.
pub const DISCRETE_MONITORING_SHIFT: f64 = 0.582_597_157_939_010_7;

/// Whether one brute-force bridge path crosses the barrier. The path is
/// built from `steps` Gaussian increments pinned to the right endpoint, and
/// the barrier is shifted to correct for monitoring only at grid points.
fn bridge_path_crosses(case: &BridgeCase, steps: usize, normals: &mut impl FnMut() -> f64) -> bool {
    let dt = case.h / steps as f64;
    let sd = dt.sqrt();
    let shifted = case.barrier + DISCRETE_MONITORING_SHIFT * case.vol * sd;
    // walk, then pin: X_k = a + (k/m)(b - a) + vol (W_k - (k/m) W_m)
    let mut walk = Vec::with_capacity(steps + 1);
    walk.push(0.0);
    let mut w = 0.0;
    for _ in 0..steps {
        w += sd * normals();
        walk.push(w);
    }
    let total = w;
    walk.iter().enumerate().any(|(k, &wk)| {
        let frac = k as f64 / steps as f64;
        let x = case.s_left + frac * (case.s_right - case.s_left) + case.vol * (wk - frac * total);
        x <= shifted
    })
}

/// Sub-steps of the brute-force crossing check.
pub const CROSSING_SUBSTEPS: usize = 1024;

/// Compares a crossing-probability formula with brute-force frequencies.
/// `formula` is injectable so that tests can confirm a broken formula is
/// caught.
pub fn crossing_frequency_check_with<F>(
    case: &BridgeCase,
    trials: usize,
    seed: u64,
    index: u64,
    formula: F,
) -> Result<OracleOutcome>
where
    F: Fn(f64, f64, f64, f64, f64) -> Result<f64>,
{
    let p = formula(case.s_left, case.s_right, case.vol, case.h, case.barrier)?;
    let mut stream = StreamKey::with_domain(seed, CROSSING_DOMAIN + index).stream(0);
    let mut normals = || stream.standard_normal();
    let hits = (0..trials)
        .filter(|_| bridge_path_crosses(case, CROSSING_SUBSTEPS, &mut normals))
        .count();
    let freq = hits as f64 / trials as f64;
    let se = (p.clamp(0.0, 1.0) * (1.0 - p.clamp(0.0, 1.0)) / trials as f64).sqrt();
    let z = if se > 0.0 {
        (freq - p).abs() / se
    } else if freq == p {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(OracleOutcome {
        name: format!("crossing frequency #{index}"),
        statistic: z,
        threshold: 3.0,
        passed: (0.0..=1.0).contains(&p) && z <= 3.0,
        detail: format!("formula {p:.5}, brute force {freq:.5}, {z:.2} SE, {trials} trials"),
    })
}

pub fn crossing_frequency_check(case: &BridgeCase, trials: usize, seed: u64, index: u64) -> Result<OracleOutcome> {
    crossing_frequency_check_with(case, trials, seed, index, crossing_probability)
}

/// `|Φ(Φ⁻¹(p)) - p| <= 1e-9` over `p ∈ [1e-12, 1 - 1e-12]` and
/// `|Φ⁻¹(Φ(x)) - x| <= 1e-7` for `x ∈ {-3, -1, 0, 1, 3}`.
pub fn normal_round_trips() -> Result<OracleOutcome> {
    let mut worst_p: f64 = 0.0;
    for i in 0..=2400 {
        let lp = -12.0 + 12.0 * i as f64 / 2400.0;
        for p in [10f64.powf(lp), 1.0 - 10f64.powf(lp)] {
            if p <= 0.0 || p >= 1.0 || !(1e-12..=1.0 - 1e-12).contains(&p) {
                continue;
            }
            worst_p = worst_p.max((normal_cdf(normal_inv_cdf(p)?) - p).abs());
        }
    }
    let mut worst_x: f64 = 0.0;
    for x in [-3.0, -1.0, 0.0, 1.0, 3.0] {
        worst_x = worst_x.max((normal_inv_cdf(normal_cdf(x))? - x).abs());
    }
    Ok(OracleOutcome {
        name: "normal round trips".into(),
        statistic: worst_p,
        threshold: 1e-9,
        passed: worst_p <= 1e-9 && worst_x <= 1e-7,
        detail: format!("max |Φ(Φ⁻¹(p)) - p| = {worst_p:.2e}, max |Φ⁻¹(Φ(x)) - x| = {worst_x:.2e}"),
    })
}

/// Mean absolute terminal error against the exact GBM solution per level.
pub fn strong_errors(
    params: GbmParams,
    scheme: Scheme,
    levels: std::ops::RangeInclusive<u32>,
    samples: u64,
    seed: u64,
) -> Result<Vec<(u32, f64)>> {
    let model = gbm_model(params)?;
    let key = StreamKey::with_domain(seed, STRONG_DOMAIN);
    let mut incs = CoupledIncrements::default();
    levels
        .map(|level| {
            let grid = LevelGrid::new(level, params.horizon)?;
            let h = grid.h();
            let mut stream = key.stream(0);
            let mut total = 0.0;
            for sample in 0..samples {
                stream.reset(sample * 64 + u64::from(level));
                sample_coupled_increments_into(&mut stream, &grid, &mut incs);
                let mut s = model.s0();
                for (n, &dw) in incs.fine.iter().enumerate() {
                    let t = grid.time(n);
                    s = match scheme {
                        Scheme::Milstein => milstein_step(&model, s, t, h, dw)?,
                        Scheme::Euler => euler_step(&model, s, t, h, dw)?,
                    };
                }
                let w: f64 = incs.fine.iter().sum();
                total += (s - gbm_exact_terminal(params, w)).abs();
            }
            Ok((level, total / samples as f64))
        })
        .collect()
}

/// Fitted strong order of `scheme` on levels `levels`.
pub fn strong_order_check(
    scheme: Scheme,
    levels: std::ops::RangeInclusive<u32>,
    samples: u64,
    seed: u64,
) -> Result<OracleOutcome> {
    let params = GbmParams::new(0.05, 0.2, 1.0, 1.0)?;
    let errors = strong_errors(params, scheme, levels, samples, seed)?;
    let (ls, es): (Vec<u32>, Vec<f64>) = errors.iter().copied().unzip();
    let fit = fit_rate(&ls, &es)?;
    let (lo, hi) = match scheme {
        Scheme::Milstein => (0.75, 1.25),
        Scheme::Euler => (0.4, 0.6),
    };
    Ok(OracleOutcome {
        name: format!("{scheme} strong order"),
        statistic: fit.exponent,
        threshold: lo,
        passed: (lo..=hi).contains(&fit.exponent),
        detail: format!("slope {:.3}, band [{lo}, {hi}]", fit.exponent),
    })
}

/// Runs the payoff estimators on a zero-volatility model. Continuous
/// payoffs must give identical fine and coarse values (no drift, so both
/// schemes are exact); barrier and digital estimators must refuse with an
/// error instead of producing NaN.
pub fn zero_volatility_smoke() -> Result<OracleOutcome> {
    let model: ScalarSdeModel = gbm_model(GbmParams::new(0.0, 0.0, 1.0, 1.0)?)?;
    let continuous = [
        PayoffSpec::european_call(0.9, 1.0),
        PayoffSpec::asian_call(0.9, AsianTreatment::BridgeIntegral),
        PayoffSpec::asian_call(0.9, AsianTreatment::Trapezoidal),
        PayoffSpec::lookback_floating(),
    ];
    let discontinuous = [PayoffSpec::down_and_out_call(1.0, 0.85), PayoffSpec::digital(1.0)];
    let mut stream = StreamKey::with_domain(0, STRONG_DOMAIN + 1).stream(0);
    let mut mismatches = 0usize;
    let mut unexpected_ok = 0usize;
    for level in 0..4 {
        let grid = LevelGrid::new(level, 1.0)?;
        for scheme in [Scheme::Milstein, Scheme::Euler] {
            let mut incs = CoupledIncrements::default();
            sample_coupled_increments_into(&mut stream, &grid, &mut incs);
            let rec = simulate_coupled(&model, &grid, incs, scheme)?;
            for payoff in &continuous {
                let pair = payoff.evaluate(&rec)?;
                if level > 0 && pair.fine != pair.coarse {
                    mismatches += 1;
                }
            }
            for payoff in &discontinuous {
                if payoff.evaluate(&rec).is_ok() {
                    unexpected_ok += 1;
                }
            }
        }
    }
    let failures = mismatches + unexpected_ok;
    Ok(OracleOutcome {
        name: "zero volatility smoke".into(),
        statistic: failures as f64,
        threshold: 0.0,
        passed: failures == 0,
        detail: format!("{mismatches} fine/coarse mismatches, {unexpected_ok} discontinuous payoffs evaluated without error"),
    })
}

/// Sizes of the oracle runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteSizes {
    pub ks_draws: usize,
    pub crossing_trials: usize,
    pub strong_samples: u64,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        Self {
            ks_draws: 100_000,
            crossing_trials: 100_000,
            strong_samples: 10_000,
        }
    }
}

/// Every oracle of this module.
pub fn run_all(seed: u64, sizes: SuiteSizes) -> Result<Vec<OracleOutcome>> {
    let mut out = Vec::new();
    for (i, case) in BRIDGE_CASES.iter().enumerate() {
        out.push(ks_conditional_minimum(case, sizes.ks_draws, seed, i as u64)?);
    }
    for (i, case) in BRIDGE_CASES.iter().enumerate() {
        out.push(crossing_frequency_check(case, sizes.crossing_trials, seed, i as u64)?);
    }
    out.push(normal_round_trips()?);
    for scheme in [Scheme::Milstein, Scheme::Euler] {
        out.push(strong_order_check(scheme, 4..=9, sizes.strong_samples, seed)?);
    }
    out.push(zero_volatility_smoke()?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_cdf_is_a_distribution() {
        let case = BRIDGE_CASES[2];
        assert_eq!(bridge_minimum_cdf(&case, case.s_left), 1.0);
        assert!(bridge_minimum_cdf(&case, -10.0) < 1e-12);
        let a = bridge_minimum_cdf(&case, 0.8);
        let b = bridge_minimum_cdf(&case, 0.85);
        assert!(a < b);
    }

    #[test]
    fn ks_detects_a_wrong_law() {
        // draws from a different volatility must be rejected
        let case = BRIDGE_CASES[0];
        let wrong = BridgeCase { vol: case.vol * 1.1, ..case };
        let mut stream = StreamKey::with_domain(1, 99).stream(0);
        let mut draws: Vec<f64> = (0..20_000)
            .map(|_| conditional_minimum(wrong.s_left, wrong.s_right, wrong.vol, wrong.h, stream.uniform_open()).unwrap())
            .collect();
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let d = draws
            .iter()
            .enumerate()
            .map(|(i, &m)| (bridge_minimum_cdf(&case, m) - (i + 1) as f64 / n).abs())
            .fold(0.0, f64::max);
        assert!(d > KS_CRITICAL_1PCT / n.sqrt());
    }

    #[test]
    fn ks_passes_on_small_sample() {
        for (i, case) in BRIDGE_CASES.iter().enumerate() {
            let out = ks_conditional_minimum(case, 5_000, 3, i as u64).unwrap();
            assert!(out.passed, "{out}");
        }
    }

    #[test]
    fn round_trips_pass() {
        let out = normal_round_trips().unwrap();
        assert!(out.passed, "{out}");
    }

    #[test]
    fn strong_errors_shrink() {
        let p = GbmParams::new(0.05, 0.2, 1.0, 1.0).unwrap();
        let e = strong_errors(p, Scheme::Milstein, 2..=5, 500, 1).unwrap();
        assert!(e.windows(2).all(|w| w[1].1 < w[0].1));
    }

    #[test]
    fn smoke_passes() {
        let out = zero_volatility_smoke().unwrap();
        assert!(out.passed, "{out}");
    }
}
