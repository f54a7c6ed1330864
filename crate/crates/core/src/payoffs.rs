//! Coupled payoff estimators.
//!
//! Each estimator turns one [`CoupledPathRecord`] into a fine value at level
//! `l` and a coarse value at level `l - 1`. The coarse value is built so that
//! its expectation equals the expectation of the fine value one level down;
//! without that the telescoping sum would be biased.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::brownian::{
    coarse_bridge_integral, conditional_minimum, crossing_probability, crossing_probability_up,
    DrawSet, MAX_LEVEL,
};
use crate::error::{Error, Result};
use crate::model::ScalarSdeModel;
use crate::schemes::CoupledPathRecord;
use crate::stats::normal_cdf;

/// Payoff of the values at the observation times.
pub type ObservationFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Payoff of two path functionals, e.g. `(average, terminal)`.
pub type PairFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Payoff of the terminal value.
pub type TerminalFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    DownAndOut,
    UpAndOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AsianTreatment {
    /// Integrates the Brownian interpolant, including the bridge integrals.
    BridgeIntegral,
    /// Trapezoidal average of the discrete path.
    Trapezoidal,
}

/// The supported option families. The payoff functions are assumed Lipschitz.
#[derive(Clone)]
pub enum PayoffSpec {
    /// `f(S(T_1), ..., S(T_M))` for sorted observation times in `(0, T]`.
    European { f: ObservationFn, times: Vec<f64> },
    /// `f(average, terminal)` with the average integrating the interpolant.
    AsianT1 { f: PairFn },
    /// `f(average, terminal)` with a trapezoidal average.
    AsianT2 { f: PairFn },
    /// `f(terminal, minimum)`.
    Lookback { f: PairFn },
    /// `f(S(T))` knocked out when the path crosses `barrier`.
    Barrier {
        f: TerminalFn,
        barrier: f64,
        kind: BarrierKind,
    },
    /// `1{S(T) > strike}`.
    Digital { strike: f64 },
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::European { times, .. } => {
                f.debug_struct("European").field("times", times).finish_non_exhaustive()
            }
            Self::AsianT1 { .. } => f.write_str("AsianT1"),
            Self::AsianT2 { .. } => f.write_str("AsianT2"),
            Self::Lookback { .. } => f.write_str("Lookback"),
            Self::Barrier { barrier, kind, .. } => f
                .debug_struct("Barrier")
                .field("barrier", barrier)
                .field("kind", kind)
                .finish_non_exhaustive(),
            Self::Digital { strike } => f.debug_struct("Digital").field("strike", strike).finish(),
        }
    }
}

fn call(strike: f64) -> impl Fn(f64) -> f64 + Copy {
    move |s| (s - strike).max(0.0)
}

impl PayoffSpec {
    pub fn european<F>(f: F, times: Vec<f64>) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::European {
            f: Arc::new(f),
            times,
        }
    }

    /// `(S(T) - K)^+`.
    pub fn european_call(strike: f64, horizon: f64) -> Self {
        let payoff = call(strike);
        Self::european(move |v| payoff(v[v.len() - 1]), vec![horizon])
    }

    /// `f = c` regardless of the path.
    pub fn constant(value: f64, horizon: f64) -> Self {
        Self::european(move |_| value, vec![horizon])
    }

    /// `(average - K)^+`.
    pub fn asian_call(strike: f64, treatment: AsianTreatment) -> Self {
        let payoff = call(strike);
        let f: PairFn = Arc::new(move |avg, _| payoff(avg));
        match treatment {
            AsianTreatment::BridgeIntegral => Self::AsianT1 { f },
            AsianTreatment::Trapezoidal => Self::AsianT2 { f },
        }
    }

    /// Floating-strike lookback call `S(T) - min S`.
    pub fn lookback_floating() -> Self {
        Self::Lookback {
            f: Arc::new(|terminal, minimum| terminal - minimum),
        }
    }

    pub fn down_and_out_call(strike: f64, barrier: f64) -> Self {
        Self::Barrier {
            f: Arc::new(call(strike)),
            barrier,
            kind: BarrierKind::DownAndOut,
        }
    }

    pub fn up_and_out_call(strike: f64, barrier: f64) -> Self {
        Self::Barrier {
            f: Arc::new(call(strike)),
            barrier,
            kind: BarrierKind::UpAndOut,
        }
    }

    pub fn digital(strike: f64) -> Self {
        Self::Digital { strike }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::European { .. } => "european",
            Self::AsianT1 { .. } => "asian_t1",
            Self::AsianT2 { .. } => "asian_t2",
            Self::Lookback { .. } => "lookback",
            Self::Barrier { .. } => "barrier",
            Self::Digital { .. } => "digital",
        }
    }

    /// Barrier and digital payoffs are discontinuous functionals of the path.
    pub fn is_discontinuous(&self) -> bool {
        matches!(self, Self::Barrier { .. } | Self::Digital { .. })
    }

    /// Checks the payoff parameters against a model.
    pub fn validate(&self, model: &ScalarSdeModel) -> Result<()> {
        match self {
            Self::European { times, .. } => {
                if times.is_empty() {
                    return Err(Error::InvalidParameter("no observation times".into()));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidParameter(
                        "observation times must be strictly increasing".into(),
                    ));
                }
                if times
                    .iter()
                    .any(|&t| !(t > 0.0) || t > model.horizon() * (1.0 + 1e-12))
                {
                    return Err(Error::InvalidParameter(format!(
                        "observation times must lie in (0, {}]",
                        model.horizon()
                    )));
                }
                self.base_level(model.horizon()).map(|_| ())
            }
            Self::Barrier { barrier, kind, .. } => {
                let ok = match kind {
                    BarrierKind::DownAndOut => *barrier < model.s0(),
                    BarrierKind::UpAndOut => *barrier > model.s0(),
                };
                if !barrier.is_finite() || !ok {
                    return Err(Error::InvalidParameter(format!(
                        "barrier {barrier} on the wrong side of s0 = {} for {kind:?}",
                        model.s0()
                    )));
                }
                Ok(())
            }
            Self::Digital { strike } if !strike.is_finite() => Err(Error::InvalidParameter(
                format!("strike must be finite, got {strike}"),
            )),
            _ => Ok(()),
        }
    }

    /// Coarsest level whose grid contains every observation time. Zero for
    /// all families other than [`PayoffSpec::European`].
    pub fn base_level(&self, horizon: f64) -> Result<u32> {
        let Self::European { times, .. } = self else {
            return Ok(0);
        };
        'levels: for level in 0..=MAX_LEVEL {
            let h = horizon / (1u64 << level) as f64;
            for &t in times {
                if observation_index(t, h).is_none() {
                    continue 'levels;
                }
            }
            return Ok(level);
        }
        Err(Error::Misaligned {
            time: times[0],
            level: MAX_LEVEL,
        })
    }

    /// Random blocks the estimator reads beyond the fine increments.
    pub fn draws(&self) -> DrawSet {
        DrawSet {
            uniforms: matches!(self, Self::Lookback { .. }),
            bridge_integrals: matches!(self, Self::AsianT1 { .. }),
        }
    }

    /// Evaluates the coupled pair on one record.
    #[inline]
    pub fn evaluate(&self, rec: &CoupledPathRecord) -> Result<PayoffPair> {
        match self {
            Self::European { f, times } => european_pair(rec, f.as_ref(), times),
            Self::AsianT1 { f } => asian_t1_pair(rec, f.as_ref()),
            Self::AsianT2 { f } => asian_t2_pair(rec, f.as_ref()),
            Self::Lookback { f } => lookback_pair(rec, f.as_ref()),
            Self::Barrier { f, barrier, kind } => barrier_pair(rec, f.as_ref(), *barrier, *kind),
            Self::Digital { strike } => digital_pair(rec, *strike),
        }
    }
}

/// Fine payoff at level `l` and coarse payoff at level `l - 1` for one
/// sample. The coarse member is zero at level 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffPair {
    pub fine: f64,
    pub coarse: f64,
}

impl PayoffPair {
    pub fn difference(&self) -> f64 {
        self.fine - self.coarse
    }
}

fn observation_index(t: f64, h: f64) -> Option<usize> {
    let x = t / h;
    let idx = x.round();
    ((x - idx).abs() <= (8.0 * f64::EPSILON * x).max(1e-9)).then_some(idx as usize)
}

fn observation_indices(rec: &CoupledPathRecord, times: &[f64]) -> Result<Vec<usize>> {
    let h = rec.h();
    times
        .iter()
        .map(|&t| {
            observation_index(t, h)
                .filter(|&i| i <= rec.n_steps())
                .ok_or(Error::Misaligned {
                    time: t,
                    level: rec.level,
                })
        })
        .collect()
}

pub fn european_pair(
    rec: &CoupledPathRecord,
    f: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
    times: &[f64],
) -> Result<PayoffPair> {
    if let [t] = times {
        // single observation: skip the index buffer
        let n = observation_index(*t, rec.h())
            .filter(|&i| i <= rec.n_steps())
            .ok_or(Error::Misaligned {
                time: *t,
                level: rec.level,
            })?;
        let fine = f(&[rec.fine_values[n]]);
        let coarse = if rec.has_coarse() {
            f(&[rec.coarse_at(n)])
        } else {
            0.0
        };
        return Ok(PayoffPair { fine, coarse });
    }
    let idx = observation_indices(rec, times)?;
    let values: Vec<f64> = idx.iter().map(|&n| rec.fine_values[n]).collect();
    let fine = f(&values);
    let coarse = if rec.has_coarse() {
        let values: Vec<f64> = idx.iter().map(|&n| rec.coarse_at(n)).collect();
        f(&values)
    } else {
        0.0
    };
    Ok(PayoffPair { fine, coarse })
}

fn fine_trapezoid_sum(rec: &CoupledPathRecord) -> f64 {
    let h = rec.h();
    rec.fine_values
        .windows(2)
        .map(|w| 0.5 * h * (w[0] + w[1]))
        .sum()
}

fn coarse_trapezoid_sum(rec: &CoupledPathRecord) -> f64 {
    let hc = 2.0 * rec.h();
    rec.coarse_values
        .windows(2)
        .map(|w| 0.5 * hc * (w[0] + w[1]))
        .sum()
}

pub fn asian_t1_pair(
    rec: &CoupledPathRecord,
    f: &(dyn Fn(f64, f64) -> f64 + Send + Sync),
) -> Result<PayoffPair> {
    let incs = &rec.increments;
    let bridge: f64 = rec
        .fine_vols
        .iter()
        .zip(&incs.bridge_integrals)
        .map(|(b, i)| b * i)
        .sum();
    let fine = f(
        (fine_trapezoid_sum(rec) + bridge) / rec.horizon,
        rec.fine_terminal(),
    );
    if !rec.has_coarse() {
        return Ok(PayoffPair { fine, coarse: 0.0 });
    }
    let h = rec.h();
    let coarse_bridge: f64 = (0..rec.coarse_interpolated.len())
        .map(|k| {
            let (n, m) = (2 * k, 2 * k + 1);
            let ic = coarse_bridge_integral(
                incs.bridge_integrals[n],
                incs.bridge_integrals[m],
                incs.fine[n],
                incs.fine[m],
                h,
            );
            rec.coarse_vols[n] * ic
        })
        .sum();
    let coarse = f(
        (coarse_trapezoid_sum(rec) + coarse_bridge) / rec.horizon,
        rec.coarse_terminal(),
    );
    Ok(PayoffPair { fine, coarse })
}

pub fn asian_t2_pair(
    rec: &CoupledPathRecord,
    f: &(dyn Fn(f64, f64) -> f64 + Send + Sync),
) -> Result<PayoffPair> {
    let fine = f(fine_trapezoid_sum(rec) / rec.horizon, rec.fine_terminal());
    let coarse = if rec.has_coarse() {
        f(coarse_trapezoid_sum(rec) / rec.horizon, rec.coarse_terminal())
    } else {
        0.0
    };
    Ok(PayoffPair { fine, coarse })
}

/// Sampled minimum of the fine path over `[0, T]`.
pub fn fine_minimum(rec: &CoupledPathRecord) -> Result<f64> {
    let h = rec.h();
    let u = &rec.increments.uniforms;
    let mut min = f64::INFINITY;
    for (n, w) in rec.fine_values.windows(2).enumerate() {
        min = min.min(conditional_minimum(w[0], w[1], rec.fine_vols[n], h, u[n])?);
    }
    Ok(min)
}

/// Sampled minimum of the coarse interpolant, reusing the fine uniforms on
/// each fine-step subinterval.
pub fn coarse_minimum(rec: &CoupledPathRecord) -> Result<f64> {
    let h = rec.h();
    let u = &rec.increments.uniforms;
    let mut min = f64::INFINITY;
    for (n, (&vol, &un)) in rec.coarse_vols.iter().zip(u).enumerate().take(rec.n_steps()) {
        let m = conditional_minimum(rec.coarse_at(n), rec.coarse_at(n + 1), vol, h, un)?;
        min = min.min(m);
    }
    Ok(min)
}

pub fn lookback_pair(
    rec: &CoupledPathRecord,
    f: &(dyn Fn(f64, f64) -> f64 + Send + Sync),
) -> Result<PayoffPair> {
    let fine = f(rec.fine_terminal(), fine_minimum(rec)?);
    let coarse = if rec.has_coarse() {
        f(rec.coarse_terminal(), coarse_minimum(rec)?)
    } else {
        0.0
    };
    Ok(PayoffPair { fine, coarse })
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn survival_step(
    left: f64,
    right: f64,
    vol: f64,
    h: f64,
    barrier: f64,
    kind: BarrierKind,
    step: usize,
    what: &'static str,
) -> Result<f64> {
    if vol == 0.0 {
        return Err(Error::ZeroVolatility { what, step });
    }
    let p = match kind {
        BarrierKind::DownAndOut => crossing_probability(left, right, vol, h, barrier)?,
        BarrierKind::UpAndOut => crossing_probability_up(left, right, vol, h, barrier)?,
    };
    Ok(1.0 - p)
}

pub fn barrier_pair(
    rec: &CoupledPathRecord,
    f: &(dyn Fn(f64) -> f64 + Send + Sync),
    barrier: f64,
    kind: BarrierKind,
) -> Result<PayoffPair> {
    let h = rec.h();
    let mut fine_survival = 1.0;
    for (n, w) in rec.fine_values.windows(2).enumerate() {
        fine_survival *= survival_step(w[0], w[1], rec.fine_vols[n], h, barrier, kind, n, "barrier fine path")?;
    }
    let fine = f(rec.fine_terminal()) * fine_survival;
    if !rec.has_coarse() {
        return Ok(PayoffPair { fine, coarse: 0.0 });
    }
    let mut coarse_survival = 1.0;
    for n in 0..rec.n_steps() {
        coarse_survival *= survival_step(
            rec.coarse_at(n),
            rec.coarse_at(n + 1),
            rec.coarse_vols[n],
            h,
            barrier,
            kind,
            n,
            "barrier coarse path",
        )?;
    }
    let coarse = f(rec.coarse_terminal()) * coarse_survival;
    Ok(PayoffPair { fine, coarse })
}

/// Digital payoff smoothed by conditioning on the path one fine step before
/// maturity (fine) or on the first half of the last coarse step (coarse).
pub fn digital_pair(rec: &CoupledPathRecord, strike: f64) -> Result<PayoffPair> {
    let n = rec.n_steps();
    let h = rec.h();
    let sqrt_h = h.sqrt();

    let last = n - 1;
    let b = rec.fine_vols[last];
    if b == 0.0 {
        return Err(Error::ZeroVolatility {
            what: "digital fine conditioning node",
            step: last,
        });
    }
    let fine = normal_cdf((rec.fine_values[last] + rec.fine_drifts[last] * h - strike) / (b.abs() * sqrt_h));
    if !rec.has_coarse() {
        return Ok(PayoffPair { fine, coarse: 0.0 });
    }

    let node = n - 2;
    let bc = rec.coarse_vols[node];
    if bc == 0.0 {
        return Err(Error::ZeroVolatility {
            what: "digital coarse conditioning node",
            step: node,
        });
    }
    let ac = rec.coarse_drifts[node];
    let dw = rec.increments.fine[node];
    let coarse = normal_cdf(
        (rec.coarse_at(node) + 2.0 * ac * h + bc * dw - strike) / (bc.abs() * sqrt_h),
    );
    Ok(PayoffPair { fine, coarse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{sample_coupled_increments, CoupledIncrements, LevelGrid};
    use crate::model::{gbm_model, GbmParams};
    use crate::schemes::{simulate_coupled, Scheme};
    use crate::stream::StreamKey;
    use proptest::prelude::*;

    fn gbm(mu: f64, sigma: f64) -> ScalarSdeModel {
        gbm_model(GbmParams::new(mu, sigma, 1.0, 1.0).unwrap()).unwrap()
    }

    fn record(model: &ScalarSdeModel, level: u32, seed: u64) -> CoupledPathRecord {
        let grid = LevelGrid::new(level, model.horizon()).unwrap();
        let incs = sample_coupled_increments(&mut StreamKey::new(seed, level).stream(0), &grid);
        simulate_coupled(model, &grid, incs, Scheme::Milstein).unwrap()
    }

    fn zero_record(model: &ScalarSdeModel, level: u32) -> CoupledPathRecord {
        let grid = LevelGrid::new(level, model.horizon()).unwrap();
        let n = grid.n_steps();
        let incs = CoupledIncrements {
            fine: vec![0.0; n],
            coarse: vec![0.0; grid.coarse_steps()],
            uniforms: vec![0.5; n],
            bridge_integrals: vec![0.0; n],
        };
        simulate_coupled(model, &grid, incs, Scheme::Milstein).unwrap()
    }

    #[test]
    fn european_degenerate_and_flat() {
        let m = gbm(0.0, 0.0);
        let identity = PayoffSpec::european(|v| v[0], vec![1.0]);
        let pair = identity.evaluate(&record(&m, 3, 1)).unwrap();
        assert_eq!(pair, PayoffPair { fine: 1.0, coarse: 1.0 });
        assert_eq!(pair.difference(), 0.0);

        let m = gbm(0.05, 0.2);
        let pair = PayoffSpec::european_call(100.0, 1.0)
            .evaluate(&record(&m, 4, 2))
            .unwrap();
        assert_eq!(pair, PayoffPair { fine: 0.0, coarse: 0.0 });
    }

    #[test]
    fn european_observation_alignment() {
        let m = gbm(0.05, 0.2);
        let quarters = PayoffSpec::european(|v| v.iter().sum::<f64>(), vec![0.25, 0.5, 1.0]);
        assert_eq!(quarters.base_level(1.0).unwrap(), 2);
        assert!(quarters.validate(&m).is_ok());
        assert!(matches!(
            quarters.evaluate(&record(&m, 1, 3)),
            Err(Error::Misaligned { .. })
        ));
        let rec = record(&m, 2, 3);
        let pair = quarters.evaluate(&rec).unwrap();
        let fine = rec.fine_values[1] + rec.fine_values[2] + rec.fine_values[4];
        let coarse = rec.coarse_interpolated[0] + rec.coarse_values[1] + rec.coarse_values[2];
        assert!((pair.fine - fine).abs() < 1e-15);
        assert!((pair.coarse - coarse).abs() < 1e-15);

        let third = PayoffSpec::european(|v| v[0], vec![1.0 / 3.0]);
        assert!(third.validate(&m).is_err());
        let unsorted = PayoffSpec::european(|v| v[0], vec![1.0, 0.5]);
        assert!(unsorted.validate(&m).is_err());
        let outside = PayoffSpec::european(|v| v[0], vec![2.0]);
        assert!(outside.validate(&m).is_err());
    }

    #[test]
    fn asian_degenerate_cases() {
        let avg = |a: f64, _| a;
        let m = gbm(0.0, 0.0);
        let rec = record(&m, 4, 5);
        for pair in [asian_t1_pair(&rec, &avg).unwrap(), asian_t2_pair(&rec, &avg).unwrap()] {
            assert!((pair.fine - 1.0).abs() < 1e-15);
            assert!((pair.coarse - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn asian_treatments_agree_without_noise() {
        let avg = |a: f64, _| a;
        let m = gbm(0.05, 0.0);
        for level in [1, 3, 5] {
            let rec = record(&m, level, 6);
            assert_eq!(asian_t1_pair(&rec, &avg).unwrap(), asian_t2_pair(&rec, &avg).unwrap());
        }
    }

    #[test]
    fn asian_zero_increments_reduce_to_trapezoids() {
        let avg = |a: f64, _| a;
        let m = gbm(0.05, 0.2);
        let rec = zero_record(&m, 1);
        let pair = asian_t1_pair(&rec, &avg).unwrap();
        let (s0, s1, s2) = (rec.fine_values[0], rec.fine_values[1], rec.fine_values[2]);
        assert!((pair.fine - 0.25 * (s0 + 2.0 * s1 + s2)).abs() < 1e-15);
        let c1 = rec.coarse_values[1];
        assert!((pair.coarse - 0.5 * (s0 + c1)).abs() < 1e-15);

        // A linear path: the two-step trapezoid equals the one-step one.
        let linear = ScalarSdeModel::new(|_, _| 0.3, |_, _| 0.1, |_, _| 0.0, 1.0, 1.0).unwrap();
        let rec = zero_record(&linear, 1);
        let pair = asian_t2_pair(&rec, &avg).unwrap();
        assert!((pair.fine - pair.coarse).abs() < 1e-15);
        assert!((pair.fine - 1.15).abs() < 1e-15);
    }

    #[test]
    fn lookback_cases() {
        let min_only = |_, m: f64| m;
        let m = gbm(0.0, 0.0);
        let pair = lookback_pair(&record(&m, 3, 1), &min_only).unwrap();
        assert_eq!(pair, PayoffPair { fine: 1.0, coarse: 1.0 });

        let m = gbm(0.05, 0.2);
        let rec = record(&m, 0, 4);
        let pair = lookback_pair(&rec, &min_only).unwrap();
        let direct = conditional_minimum(
            rec.fine_values[0],
            rec.fine_values[1],
            rec.fine_vols[0],
            1.0,
            rec.increments.uniforms[0],
        )
        .unwrap();
        assert_eq!(pair.fine, direct);
        assert_eq!(pair.coarse, 0.0);
    }

    #[test]
    fn barrier_limits() {
        let m = gbm(0.05, 0.2);
        let rec = record(&m, 4, 7);
        let f = |s: f64| (s - 0.9).max(0.0);
        let far = barrier_pair(&rec, &f, -1e3, BarrierKind::DownAndOut).unwrap();
        assert_eq!(far.fine, f(rec.fine_terminal()));
        assert_eq!(far.coarse, f(rec.coarse_terminal()));

        // barrier above s0: every path starts at or below it
        let touching = barrier_pair(&rec, &f, 1.0, BarrierKind::DownAndOut).unwrap();
        assert_eq!(touching, PayoffPair { fine: 0.0, coarse: 0.0 });

        let flat = gbm(0.05, 0.0);
        assert!(matches!(
            barrier_pair(&record(&flat, 2, 1), &f, 0.8, BarrierKind::DownAndOut),
            Err(Error::ZeroVolatility { .. })
        ));
    }

    #[test]
    fn barrier_validation() {
        let m = gbm(0.05, 0.2);
        assert!(PayoffSpec::down_and_out_call(1.0, 0.85).validate(&m).is_ok());
        assert!(PayoffSpec::down_and_out_call(1.0, 1.2).validate(&m).is_err());
        assert!(PayoffSpec::up_and_out_call(1.0, 1.2).validate(&m).is_ok());
        assert!(PayoffSpec::up_and_out_call(1.0, 0.9).validate(&m).is_err());
    }

    #[test]
    fn digital_cases() {
        // S_{N-1} = K with zero drift gives Phi(0).
        let m = gbm(0.0, 0.2);
        let rec = zero_record(&m, 2);
        let at_strike = rec.fine_values[3];
        let pair = digital_pair(&rec, at_strike).unwrap();
        assert_eq!(pair.fine, 0.5);
        assert!(digital_pair(&rec, -1e6).unwrap().fine == 1.0);
        assert!(digital_pair(&rec, 1e6).unwrap().fine == 0.0);

        let flat = gbm(0.05, 0.0);
        assert!(matches!(
            digital_pair(&record(&flat, 2, 1), 1.0),
            Err(Error::ZeroVolatility { .. })
        ));
    }

    #[test]
    fn digital_level_zero_conditions_on_start() {
        let (mu, sigma, strike) = (0.05, 0.2, 1.0);
        let m = gbm(mu, sigma);
        let rec = record(&m, 0, 9);
        let pair = digital_pair(&rec, strike).unwrap();
        let expected = normal_cdf((1.0 + mu - strike) / sigma);
        assert!((pair.fine - expected).abs() < 1e-15);
        assert_eq!(pair.coarse, 0.0);
    }

    #[test]
    fn zero_volatility_pairs_coincide() {
        let m = gbm(0.0, 0.0);
        let specs = [
            PayoffSpec::european_call(0.9, 1.0),
            PayoffSpec::asian_call(0.9, AsianTreatment::BridgeIntegral),
            PayoffSpec::asian_call(0.9, AsianTreatment::Trapezoidal),
            PayoffSpec::lookback_floating(),
        ];
        for spec in &specs {
            for level in 1..6 {
                let pair = spec.evaluate(&record(&m, level, 13)).unwrap();
                assert_eq!(pair.fine, pair.coarse, "{spec:?} level {level}");
            }
        }
    }

    proptest! {
        #[test]
        fn bounded_payoffs(seed in any::<u64>(), level in 0u32..7) {
            let m = gbm(0.05, 0.2);
            let rec = record(&m, level, seed);
            let f = |s: f64| (s - 1.0).clamp(0.0, 2.0);
            let b = barrier_pair(&rec, &f, 0.85, BarrierKind::DownAndOut).unwrap();
            prop_assert!((0.0..=2.0).contains(&b.fine) && (0.0..=2.0).contains(&b.coarse));
            let d = digital_pair(&rec, 1.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&d.fine) && (0.0..=1.0).contains(&d.coarse));
            let min = fine_minimum(&rec).unwrap();
            let path_min = rec.fine_values.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min <= path_min);
        }
    }
}
