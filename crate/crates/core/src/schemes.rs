//! Euler and Milstein steppers and the coupled fine/coarse path simulation.

use serde::{Deserialize, Serialize};

use crate::brownian::{coarse_midpoint, CoupledIncrements, LevelGrid};
use crate::error::{Error, Result};
use crate::model::ScalarSdeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Milstein,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "milstein" => Ok(Self::Milstein),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Euler => "euler",
            Self::Milstein => "milstein",
        })
    }
}

#[inline]
fn checked(next: f64, what: &'static str, s: f64, t: f64) -> Result<f64> {
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite { what, x: s, t })
    }
}

/// `s + a h + b dw + ½ b' b (dw² - h)`.
#[inline]
pub fn milstein_step(model: &ScalarSdeModel, s: f64, t: f64, h: f64, dw: f64) -> Result<f64> {
    let a = model.drift(s, t);
    let b = model.vol(s, t);
    let bp = model.vol_deriv(s, t);
    checked(
        s + a * h + b * dw + 0.5 * bp * b * (dw * dw - h),
        "milstein step",
        s,
        t,
    )
}

/// `s + a h + b dw`.
#[inline]
pub fn euler_step(model: &ScalarSdeModel, s: f64, t: f64, h: f64, dw: f64) -> Result<f64> {
    let a = model.drift(s, t);
    let b = model.vol(s, t);
    checked(s + a * h + b * dw, "euler step", s, t)
}

/// Advances `s` by one step and reports the drift and volatility frozen at
/// the left node.
#[inline]
fn step_with_coefficients(
    model: &ScalarSdeModel,
    scheme: Scheme,
    s: f64,
    t: f64,
    h: f64,
    dw: f64,
) -> Result<(f64, f64, f64)> {
    let a = model.drift(s, t);
    let b = model.vol(s, t);
    let next = match scheme {
        Scheme::Euler => s + a * h + b * dw,
        Scheme::Milstein => {
            let bp = model.vol_deriv(s, t);
            s + a * h + b * dw + 0.5 * bp * b * (dw * dw - h)
        }
    };
    let what = match scheme {
        Scheme::Euler => "euler step",
        Scheme::Milstein => "milstein step",
    };
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::NonFinite {
            what: "coefficient",
            x: s,
            t,
        });
    }
    Ok((checked(next, what, s, t)?, a, b))
}

/// Fine and coarse discrete paths driven by one Brownian draw.
///
/// Indices are fine-grid indices. Coarse quantities at odd fine indices come
/// from the Brownian interpolant of the coarse step with the coarse drift and
/// volatility frozen at the left coarse node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoupledPathRecord {
    pub level: u32,
    pub horizon: f64,
    /// `2^l + 1` values.
    pub fine_values: Vec<f64>,
    /// Coarse values at even fine indices, `2^(l-1) + 1` of them; empty at level 0.
    pub coarse_values: Vec<f64>,
    /// Coarse interpolant at odd fine indices, `2^(l-1)` of them.
    pub coarse_interpolated: Vec<f64>,
    /// `b^f_n`, one per fine step.
    pub fine_vols: Vec<f64>,
    /// `b^c_n` per fine step, with `b^c_n = b^c_{n-1}` for odd `n`.
    pub coarse_vols: Vec<f64>,
    /// `a^f_n`, one per fine step.
    pub fine_drifts: Vec<f64>,
    /// `a^c_n` per fine step, duplicated onto odd `n` like the volatilities.
    pub coarse_drifts: Vec<f64>,
    pub increments: CoupledIncrements,
}

impl CoupledPathRecord {
    pub fn grid(&self) -> LevelGrid {
        LevelGrid::new(self.level, self.horizon).expect("record built from a valid grid")
    }

    pub fn n_steps(&self) -> usize {
        self.fine_values.len() - 1
    }

    /// Fine timestep.
    pub fn h(&self) -> f64 {
        self.horizon / self.n_steps() as f64
    }

    pub fn has_coarse(&self) -> bool {
        self.level > 0
    }

    pub fn fine_terminal(&self) -> f64 {
        *self.fine_values.last().expect("non-empty path")
    }

    pub fn coarse_terminal(&self) -> f64 {
        *self.coarse_values.last().expect("coarse path present")
    }

    /// Coarse value at fine index `n`, interpolated at odd `n`.
    #[inline]
    pub fn coarse_at(&self, n: usize) -> f64 {
        if n.is_multiple_of(2) {
            self.coarse_values[n / 2]
        } else {
            self.coarse_interpolated[n / 2]
        }
    }
}

/// Simulates fine and coarse paths for one set of coupled increments.
pub fn simulate_coupled(
    model: &ScalarSdeModel,
    grid: &LevelGrid,
    incs: CoupledIncrements,
    scheme: Scheme,
) -> Result<CoupledPathRecord> {
    let mut rec = CoupledPathRecord {
        increments: incs,
        ..Default::default()
    };
    simulate_into(model, grid, scheme, &mut rec)?;
    Ok(rec)
}

/// Re-simulates `rec` in place from `rec.increments`, reusing its buffers.
pub fn simulate_into(
    model: &ScalarSdeModel,
    grid: &LevelGrid,
    scheme: Scheme,
    rec: &mut CoupledPathRecord,
) -> Result<()> {
    if !rec.increments.matches(grid) {
        return Err(Error::InvalidParameter(format!(
            "increments do not match the level-{} grid",
            grid.level()
        )));
    }
    let n = grid.n_steps();
    let h = grid.h();
    rec.level = grid.level();
    rec.horizon = grid.horizon();

    rec.fine_values.clear();
    rec.fine_vols.clear();
    rec.fine_drifts.clear();
    let mut s = model.s0();
    rec.fine_values.push(s);
    for (i, &dw) in rec.increments.fine.iter().enumerate() {
        let (next, a, b) = step_with_coefficients(model, scheme, s, grid.time(i), h, dw)?;
        rec.fine_drifts.push(a);
        rec.fine_vols.push(b);
        rec.fine_values.push(next);
        s = next;
    }

    rec.coarse_values.clear();
    rec.coarse_interpolated.clear();
    rec.coarse_vols.clear();
    rec.coarse_drifts.clear();
    if grid.level() == 0 {
        return Ok(());
    }
    let hc = 2.0 * h;
    let mut s = model.s0();
    rec.coarse_values.push(s);
    for (k, &dw) in rec.increments.coarse.iter().enumerate() {
        let (next, a, b) = step_with_coefficients(model, scheme, s, grid.time(2 * k), hc, dw)?;
        let mid = coarse_midpoint(
            s,
            next,
            b,
            rec.increments.fine[2 * k],
            rec.increments.fine[2 * k + 1],
        );
        rec.coarse_interpolated.push(mid);
        rec.coarse_values.push(next);
        rec.coarse_vols.extend([b, b]);
        rec.coarse_drifts.extend([a, a]);
        s = next;
    }
    debug_assert_eq!(rec.coarse_vols.len(), n);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::sample_coupled_increments;
    use crate::model::{gbm_model, GbmParams};
    use crate::stream::StreamKey;

    fn gbm(mu: f64, sigma: f64) -> ScalarSdeModel {
        gbm_model(GbmParams::new(mu, sigma, 1.0, 1.0).unwrap()).unwrap()
    }

    fn fixed_increments(fine: Vec<f64>) -> CoupledIncrements {
        let n = fine.len();
        let coarse = if n > 1 {
            fine.chunks(2).map(|p| p[0] + p[1]).collect()
        } else {
            vec![]
        };
        CoupledIncrements {
            fine,
            coarse,
            uniforms: vec![0.5; n],
            bridge_integrals: vec![0.0; n],
        }
    }

    #[test]
    fn milstein_step_values() {
        let drift_only =
            ScalarSdeModel::new(|_, _| 1.0, |_, _| 0.0, |_, _| 0.0, 0.0, 1.0).unwrap();
        assert_eq!(milstein_step(&drift_only, 0.0, 0.0, 0.5, 0.7).unwrap(), 0.5);

        let m = gbm(0.05, 0.2);
        let s = milstein_step(&m, 1.0, 0.0, 0.01, 0.0).unwrap();
        assert!((s - 1.0003).abs() < 1e-15);

        let driftless = gbm(0.0, 0.2);
        let h: f64 = 0.04;
        let dw = h.sqrt();
        let s = milstein_step(&driftless, 1.5, 0.0, h, dw).unwrap();
        assert!((s - (1.5 + 0.2 * 1.5 * dw)).abs() < 1e-15);
    }

    #[test]
    fn euler_step_values() {
        let flat = ScalarSdeModel::new(|_, _| 0.0, |_, _| 0.0, |_, _| 0.0, 0.0, 1.0).unwrap();
        assert_eq!(euler_step(&flat, 2.5, 0.0, 0.1, 0.3).unwrap(), 2.5);
        let m = gbm(0.05, 0.2);
        assert!((euler_step(&m, 1.0, 0.0, 0.01, 0.1).unwrap() - 1.0205).abs() < 1e-15);
        let drift_only =
            ScalarSdeModel::new(|_, _| 1.0, |_, _| 0.0, |_, _| 0.0, 0.0, 1.0).unwrap();
        assert_eq!(euler_step(&drift_only, 0.0, 0.0, 0.25, 0.0).unwrap(), 0.25);
    }

    #[test]
    fn non_finite_step_is_an_error() {
        let blowup =
            ScalarSdeModel::new_unchecked(|x: f64, _| x * 1e308, |_, _| 0.0, |_, _| 0.0, 10.0, 1.0)
                .unwrap();
        assert!(matches!(
            milstein_step(&blowup, 10.0, 0.0, 1.0, 0.0),
            Err(Error::NonFinite { .. })
        ));
        let grid = LevelGrid::new(1, 1.0).unwrap();
        let err = simulate_coupled(&blowup, &grid, fixed_increments(vec![0.0, 0.0]), Scheme::Euler);
        assert!(err.is_err());
    }

    #[test]
    fn degenerate_model_keeps_paths_constant() {
        let m = gbm(0.0, 0.0);
        let grid = LevelGrid::new(3, 1.0).unwrap();
        let incs = sample_coupled_increments(&mut StreamKey::new(1, 3).stream(0), &grid);
        let rec = simulate_coupled(&m, &grid, incs, Scheme::Milstein).unwrap();
        assert!(rec.fine_values.iter().all(|&v| v == 1.0));
        assert!(rec.coarse_values.iter().all(|&v| v == 1.0));
        assert!(rec.coarse_interpolated.iter().all(|&v| v == 1.0));
        assert_eq!(rec.fine_values.len(), 9);
        assert_eq!(rec.coarse_values.len(), 5);
        assert_eq!(rec.coarse_interpolated.len(), 4);
    }

    #[test]
    fn level_one_hand_evaluation() {
        let (mu, sigma) = (0.05, 0.2);
        let m = gbm(mu, sigma);
        let grid = LevelGrid::new(1, 1.0).unwrap();
        let rec =
            simulate_coupled(&m, &grid, fixed_increments(vec![0.1, -0.1]), Scheme::Milstein)
                .unwrap();
        let h = 0.5;
        let step = |s: f64, dw: f64| {
            s + mu * s * h + sigma * s * dw + 0.5 * sigma * sigma * s * (dw * dw - h)
        };
        let s1 = step(1.0, 0.1);
        let s2 = step(s1, -0.1);
        assert!((rec.fine_values[1] - s1).abs() < 1e-15);
        assert!((rec.fine_values[2] - s2).abs() < 1e-15);
        // coarse: one step of size 1 with dW = 0
        let c1 = 1.0 + mu - 0.5 * sigma * sigma;
        assert!((rec.coarse_values[1] - c1).abs() < 1e-15);
        let mid = 0.5 * (1.0 + c1) + 0.5 * sigma * (0.1 - (-0.1));
        assert!((rec.coarse_interpolated[0] - mid).abs() < 1e-15);
        assert_eq!(rec.coarse_vols, vec![sigma, sigma]);
        assert_eq!(rec.fine_vols, vec![sigma, sigma * s1]);

        let again =
            simulate_coupled(&m, &grid, fixed_increments(vec![0.1, -0.1]), Scheme::Milstein)
                .unwrap();
        assert_eq!(rec, again);
    }

    #[test]
    fn record_invariants() {
        let m = gbm(0.05, 0.2);
        let grid = LevelGrid::new(4, 1.0).unwrap();
        let incs = sample_coupled_increments(&mut StreamKey::new(8, 4).stream(3), &grid);
        let rec = simulate_coupled(&m, &grid, incs, Scheme::Milstein).unwrap();
        assert_eq!(rec.fine_values[0], m.s0());
        assert_eq!(rec.coarse_values[0], m.s0());
        for n in (1..16).step_by(2) {
            assert_eq!(rec.coarse_vols[n], rec.coarse_vols[n - 1]);
            assert_eq!(rec.coarse_at(n), rec.coarse_interpolated[n / 2]);
        }
        assert!(rec.fine_values.iter().all(|v| v.is_finite()));
        assert_eq!(rec.coarse_at(16), rec.coarse_terminal());
    }

    #[test]
    fn level_zero_has_only_fine_path() {
        let m = gbm(0.05, 0.2);
        let grid = LevelGrid::new(0, 1.0).unwrap();
        let rec =
            simulate_coupled(&m, &grid, fixed_increments(vec![0.3]), Scheme::Euler).unwrap();
        assert_eq!(rec.fine_values.len(), 2);
        assert!(rec.coarse_values.is_empty());
        assert!(!rec.has_coarse());
        assert!((rec.fine_terminal() - (1.0 + 0.05 + 0.2 * 0.3)).abs() < 1e-15);
    }

    #[test]
    fn mismatched_increments_rejected() {
        let m = gbm(0.05, 0.2);
        let grid = LevelGrid::new(2, 1.0).unwrap();
        assert!(simulate_coupled(&m, &grid, fixed_increments(vec![0.0, 0.0]), Scheme::Euler).is_err());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("Milstein".parse::<Scheme>().unwrap(), Scheme::Milstein);
        assert_eq!("euler".parse::<Scheme>().unwrap(), Scheme::Euler);
        assert!("rk4".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Euler.to_string(), "euler");
    }
}
