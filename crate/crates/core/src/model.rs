//! Scalar SDE models `dS = a(S,t) dt + b(S,t) dW` and assumption spot-checks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient function of state and time.
pub type CoefficientFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Relative tolerance for the finite-difference check of `b'`.
pub const VOL_DERIV_TOLERANCE: f64 = 1e-5;

/// A scalar SDE with drift `a`, volatility `b` and `b' = ∂b/∂S`.
///
/// The three coefficient functions must be pure. Construction verifies that
/// `b'` is consistent with a central difference of `b` on the default probe
/// grid.
#[derive(Clone)]
pub struct ScalarSdeModel {
    drift: CoefficientFn,
    vol: CoefficientFn,
    vol_deriv: CoefficientFn,
    s0: f64,
    horizon: f64,
}

impl fmt::Debug for ScalarSdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarSdeModel")
            .field("s0", &self.s0)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ScalarSdeModel {
    pub fn new<A, B, D>(drift: A, vol: B, vol_deriv: D, s0: f64, horizon: f64) -> Result<Self>
    where
        A: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let model = Self::new_unchecked(drift, vol, vol_deriv, s0, horizon)?;
        model.check_vol_deriv(&ProbeGrid::default_for(&model))?;
        Ok(model)
    }

    /// Builds a model without the `b'` consistency check; `s0` and the horizon
    /// are still validated.
    pub fn new_unchecked<A, B, D>(
        drift: A,
        vol: B,
        vol_deriv: D,
        s0: f64,
        horizon: f64,
    ) -> Result<Self>
    where
        A: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if !s0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "initial value must be finite, got {s0}"
            )));
        }
        Ok(Self {
            drift: Arc::new(drift),
            vol: Arc::new(vol),
            vol_deriv: Arc::new(vol_deriv),
            s0,
            horizon,
        })
    }

    #[inline]
    pub fn drift(&self, x: f64, t: f64) -> f64 {
        (self.drift)(x, t)
    }

    #[inline]
    pub fn vol(&self, x: f64, t: f64) -> f64 {
        (self.vol)(x, t)
    }

    #[inline]
    pub fn vol_deriv(&self, x: f64, t: f64) -> f64 {
        (self.vol_deriv)(x, t)
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Compares `b'` against a central difference of `b` at every probe point.
    pub fn check_vol_deriv(&self, probe: &ProbeGrid) -> Result<()> {
        for &t in &probe.ts {
            for &x in &probe.xs {
                finite(self.drift(x, t), "drift", x, t)?;
                finite(self.vol(x, t), "vol", x, t)?;
                let exact = finite(self.vol_deriv(x, t), "vol_deriv", x, t)?;
                let fd = central_x(&*self.vol, x, t);
                if (fd - exact).abs() > VOL_DERIV_TOLERANCE * exact.abs().max(1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "vol_deriv({x}, {t}) = {exact} disagrees with finite difference {fd}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn finite(v: f64, what: &'static str, x: f64, t: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { what, x, t })
    }
}

fn step_for(x: f64) -> f64 {
    // cube root of machine epsilon, scaled
    6e-6 * x.abs().max(1.0)
}

fn central_x(f: &dyn Fn(f64, f64) -> f64, x: f64, t: f64) -> f64 {
    let d = step_for(x);
    (f(x + d, t) - f(x - d, t)) / (2.0 * d)
}

fn central_t(f: &dyn Fn(f64, f64) -> f64, x: f64, t: f64) -> f64 {
    let d = step_for(t);
    if t - d < 0.0 {
        // coefficients need not be defined before time 0
        return (f(x, t + d) - f(x, t)) / d;
    }
    (f(x, t + d) - f(x, t - d)) / (2.0 * d)
}

/// Geometric Brownian motion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub s0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl GbmParams {
    pub fn new(mu: f64, sigma: f64, s0: f64, horizon: f64) -> Result<Self> {
        let params = Self {
            mu,
            sigma,
            s0,
            horizon,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu = {}", self.mu)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.s0 > 0.0) || !self.s0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "s0 must be > 0, got {}",
                self.s0
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "T must be > 0, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// `a = μx`, `b = σx`, `b' = σ`.
pub fn gbm_model(params: GbmParams) -> Result<ScalarSdeModel> {
    params.validate()?;
    let GbmParams { mu, sigma, .. } = params;
    ScalarSdeModel::new(
        move |x, _| mu * x,
        move |x, _| sigma * x,
        move |_, _| sigma,
        params.s0,
        params.horizon,
    )
}

/// Exact GBM value at the horizon for Brownian endpoint `w_t`.
pub fn gbm_exact_terminal(params: GbmParams, w_t: f64) -> f64 {
    let GbmParams {
        mu,
        sigma,
        s0,
        horizon,
    } = params;
    s0 * ((mu - 0.5 * sigma * sigma) * horizon + sigma * w_t).exp()
}

/// Tensor grid of `(x, t)` probe points.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl ProbeGrid {
    pub fn tensor(x_range: (f64, f64), nx: usize, t_range: (f64, f64), nt: usize) -> Self {
        Self {
            xs: linspace(x_range.0, x_range.1, nx),
            ts: linspace(t_range.0, t_range.1, nt),
        }
    }

    /// 64 x 16 points over `[s0/4, 4 s0] x [0, T]`.
    pub fn default_for(model: &ScalarSdeModel) -> Self {
        let s0 = model.s0();
        let (lo, hi) = if s0 == 0.0 {
            (-1.0, 1.0)
        } else {
            let (a, b) = (s0 / 4.0, 4.0 * s0);
            (a.min(b), a.max(b))
        };
        Self::tensor((lo, hi), 64, (0.0, model.horizon()), 16)
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty() || self.ts.is_empty()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Thresholds above which an assumption quotient is flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCaps {
    pub lipschitz: f64,
    pub growth: f64,
    pub holder: f64,
}

impl Default for AssumptionCaps {
    fn default() -> Self {
        Self {
            lipschitz: 10.0,
            growth: 10.0,
            holder: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assumption {
    /// Uniform Lipschitz bound on `a`, `b` and `L1 b = b b'`.
    Lipschitz,
    /// Linear growth bound on the coefficients and their `L0`/`L1` images.
    LinearGrowth,
    /// Square-root Hölder continuity of `b` in time.
    TimeHolder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFlag {
    pub assumption: Assumption,
    pub value: f64,
    pub cap: f64,
    pub x: f64,
    pub t: f64,
}

/// Largest empirical quotients found on a probe grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub lipschitz: f64,
    pub growth: f64,
    pub holder: f64,
    pub flags: Vec<AssumptionFlag>,
}

impl AssumptionReport {
    pub fn is_clean(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn flagged(&self, which: Assumption) -> bool {
        self.flags.iter().any(|f| f.assumption == which)
    }
}

/// Empirical Lipschitz, growth and time-Hölder quotients over `probe`.
///
/// Derivatives needed for the `L0`/`L1` operators (other than `b'`) are taken
/// by central differences.
pub fn check_assumptions(
    model: &ScalarSdeModel,
    probe: &ProbeGrid,
    caps: AssumptionCaps,
) -> Result<AssumptionReport> {
    if probe.is_empty() {
        return Err(Error::InvalidParameter("probe grid is empty".into()));
    }
    let a = |x: f64, t: f64| model.drift(x, t);
    let b = |x: f64, t: f64| model.vol(x, t);
    let l1b = |x: f64, t: f64| model.vol(x, t) * model.vol_deriv(x, t);

    struct Point {
        x: f64,
        t: f64,
        a: f64,
        b: f64,
        l1b: f64,
    }
    let mut points = Vec::with_capacity(probe.xs.len() * probe.ts.len());
    for &t in &probe.ts {
        for &x in &probe.xs {
            points.push(Point {
                x,
                t,
                a: finite(a(x, t), "drift", x, t)?,
                b: finite(b(x, t), "vol", x, t)?,
                l1b: finite(l1b(x, t), "vol * vol_deriv", x, t)?,
            });
        }
    }

    let mut report = AssumptionReport {
        lipschitz: 0.0,
        growth: 0.0,
        holder: 0.0,
        flags: Vec::new(),
    };
    let mut worst = [(0.0, 0.0, 0.0); 3];

    let nx = probe.xs.len();
    for row in points.chunks(nx) {
        for (i, p) in row.iter().enumerate() {
            for q in &row[i + 1..] {
                let dx = (p.x - q.x).abs();
                if dx == 0.0 {
                    continue;
                }
                let quotient =
                    ((p.a - q.a).abs() + (p.b - q.b).abs() + (p.l1b - q.l1b).abs()) / dx;
                if quotient > report.lipschitz {
                    report.lipschitz = quotient;
                    worst[0] = (quotient, p.x, p.t);
                }
            }
        }
    }

    for p in &points {
        let (x, t) = (p.x, p.t);
        let da_dx = central_x(&a, x, t);
        let da_dt = central_t(&a, x, t);
        let db_dt = central_t(&b, x, t);
        let dl1b_dx = central_x(&l1b, x, t);
        let dl1b_dt = central_t(&l1b, x, t);
        let bp = model.vol_deriv(x, t);
        let l0a = da_dt + p.a * da_dx;
        let l1a = p.b * da_dx;
        let l0b = db_dt + p.a * bp;
        let l0l1b = dl1b_dt + p.a * dl1b_dx;
        let l1l1b = p.b * dl1b_dx;
        let total = p.a.abs()
            + l0a.abs()
            + l1a.abs()
            + p.b.abs()
            + l0b.abs()
            + p.l1b.abs()
            + l0l1b.abs()
            + l1l1b.abs();
        let quotient = total / (1.0 + x.abs());
        if !quotient.is_finite() {
            return Err(Error::NonFinite {
                what: "growth quotient",
                x,
                t,
            });
        }
        if quotient > report.growth {
            report.growth = quotient;
            worst[1] = (quotient, x, t);
        }
    }

    for (ix, &x) in probe.xs.iter().enumerate() {
        let column: Vec<&Point> = points.iter().skip(ix).step_by(nx).collect();
        for (i, p) in column.iter().enumerate() {
            for q in &column[i + 1..] {
                let dt = (p.t - q.t).abs();
                if dt == 0.0 {
                    continue;
                }
                let quotient = (p.b - q.b).abs() / ((1.0 + x.abs()) * dt.sqrt());
                if quotient > report.holder {
                    report.holder = quotient;
                    worst[2] = (quotient, x, p.t);
                }
            }
        }
    }

    let checks = [
        (Assumption::Lipschitz, caps.lipschitz),
        (Assumption::LinearGrowth, caps.growth),
        (Assumption::TimeHolder, caps.holder),
    ];
    for ((assumption, cap), (value, x, t)) in checks.into_iter().zip(worst) {
        if value > cap {
            report.flags.push(AssumptionFlag {
                assumption,
                value,
                cap,
                x,
                t,
            });
        }
    }
    Ok(report)
}
