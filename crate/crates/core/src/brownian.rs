//! Coupled Brownian increments and conditional Brownian-bridge samplers.
//!
//! Within a timestep of length `h` with frozen volatility `b`, the path
//! conditioned on its endpoints is a scaled Brownian bridge. The helpers here
//! give its minimum, maximum, barrier-crossing probability, midpoint and the
//! coarse-step integral built from two fine steps.

use crate::error::{Error, Result};
use crate::stream::SampleStream;

/// Uniform timestep grid of level `l`: `2^l` steps of size `T / 2^l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGrid {
    level: u32,
    horizon: f64,
    n_steps: usize,
    h: f64,
}

/// Finest supported level.
pub const MAX_LEVEL: u32 = 30;

impl LevelGrid {
    pub fn new(level: u32, horizon: f64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::InvalidParameter(format!(
                "level {level} exceeds maximum {MAX_LEVEL}"
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let n_steps = 1usize << level;
        // division by a power of two is exact
        let h = horizon / n_steps as f64;
        Ok(Self {
            level,
            horizon,
            n_steps,
            h,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Fine timestep.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.h
    }

    /// Number of coarse steps (zero at level 0).
    pub fn coarse_steps(&self) -> usize {
        if self.level == 0 {
            0
        } else {
            self.n_steps / 2
        }
    }
}

/// One Brownian draw seen at the fine and coarse resolutions of a level,
/// together with the bridge auxiliaries consumed by the payoff estimators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoupledIncrements {
    /// `ΔW_n ~ N(0, h)`, one per fine step.
    pub fine: Vec<f64>,
    /// `ΔW_{2k} + ΔW_{2k+1}`; empty at level 0.
    pub coarse: Vec<f64>,
    /// `U_n` in (0, 1), one per fine step.
    pub uniforms: Vec<f64>,
    /// `I_n ~ N(0, h^3 / 12)`, one per fine step.
    pub bridge_integrals: Vec<f64>,
}

impl CoupledIncrements {
    pub fn level(&self) -> Option<u32> {
        let n = self.fine.len();
        n.is_power_of_two().then(|| n.trailing_zeros())
    }

    pub fn matches(&self, grid: &LevelGrid) -> bool {
        let n = grid.n_steps();
        self.fine.len() == n
            && self.coarse.len() == grid.coarse_steps()
            && self.uniforms.len() == n
            && self.bridge_integrals.len() == n
    }
}

/// Draws a fresh set of coupled increments.
///
/// Stream layout: all fine increments (in time order), then all uniforms,
/// then all bridge integrals.
pub fn sample_coupled_increments(stream: &mut SampleStream, grid: &LevelGrid) -> CoupledIncrements {
    let mut incs = CoupledIncrements::default();
    sample_coupled_increments_into(stream, grid, &mut incs);
    incs
}

/// Which optional blocks of the stream a consumer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawSet {
    pub uniforms: bool,
    pub bridge_integrals: bool,
}

impl DrawSet {
    pub const ALL: Self = Self {
        uniforms: true,
        bridge_integrals: true,
    };
}

/// As [`sample_coupled_increments`], reusing the buffers of `incs`.
pub fn sample_coupled_increments_into(
    stream: &mut SampleStream,
    grid: &LevelGrid,
    incs: &mut CoupledIncrements,
) {
    sample_selected_increments_into(stream, grid, incs, DrawSet::ALL);
}

/// Draws only the blocks in `draws`; skipped blocks are filled with NaN.
/// Fine increments come first in the stream, so they do not depend on
/// `draws`, and uniforms do not depend on whether integrals are drawn.
pub fn sample_selected_increments_into(
    stream: &mut SampleStream,
    grid: &LevelGrid,
    incs: &mut CoupledIncrements,
    draws: DrawSet,
) {
    let n = grid.n_steps();
    let h = grid.h();
    let sqrt_h = h.sqrt();
    let integral_scale = (h * h * h / 12.0).sqrt();

    incs.fine.clear();
    incs.fine.extend((0..n).map(|_| sqrt_h * stream.standard_normal()));
    incs.uniforms.clear();
    if draws.uniforms {
        incs.uniforms.extend((0..n).map(|_| stream.uniform_open()));
    } else {
        incs.uniforms.resize(n, f64::NAN);
    }
    incs.bridge_integrals.clear();
    if draws.bridge_integrals {
        incs.bridge_integrals
            .extend((0..n).map(|_| integral_scale * stream.standard_normal()));
    } else {
        incs.bridge_integrals.resize(n, f64::NAN);
    }

    incs.coarse.clear();
    if grid.level() > 0 {
        incs.coarse
            .extend(incs.fine.chunks_exact(2).map(|pair| pair[0] + pair[1]));
    }
}

fn check_uniform(u: f64, what: &'static str) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value: u })
    }
}

fn check_step(h: f64, what: &'static str) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what, value: h })
    }
}

/// Minimum of the bridge from `s_left` to `s_right` over a step of length
/// `h`, sampled by inversion with the uniform `u`.
#[inline]
pub fn conditional_minimum(s_left: f64, s_right: f64, vol: f64, h: f64, u: f64) -> Result<f64> {
    check_uniform(u, "conditional_minimum uniform")?;
    check_step(h, "conditional_minimum timestep")?;
    let d = s_right - s_left;
    Ok(0.5 * (s_left + s_right - (d * d - 2.0 * vol * vol * h * u.ln()).sqrt()))
}

/// Maximum of the bridge, the mirror image of [`conditional_minimum`].
#[inline]
pub fn conditional_maximum(s_left: f64, s_right: f64, vol: f64, h: f64, v: f64) -> Result<f64> {
    check_uniform(v, "conditional_maximum uniform")?;
    check_step(h, "conditional_maximum timestep")?;
    let d = s_right - s_left;
    Ok(0.5 * (s_left + s_right + (d * d - 2.0 * vol * vol * h * v.ln()).sqrt()))
}

/// Probability that the bridge dips below `barrier` within the step.
#[inline]
pub fn crossing_probability(s_left: f64, s_right: f64, vol: f64, h: f64, barrier: f64) -> Result<f64> {
    check_step(h, "crossing_probability timestep")?;
    if vol == 0.0 {
        return Err(Error::ZeroVolatility {
            what: "crossing_probability",
            step: 0,
        });
    }
    let above_left = (s_left - barrier).max(0.0);
    let above_right = (s_right - barrier).max(0.0);
    Ok((-2.0 * above_left * above_right / (vol * vol * h)).exp())
}

/// Probability that the bridge rises above `barrier` within the step.
#[inline]
pub fn crossing_probability_up(
    s_left: f64,
    s_right: f64,
    vol: f64,
    h: f64,
    barrier: f64,
) -> Result<f64> {
    // reflection x -> -x maps an up-crossing of B to a down-crossing of -B
    crossing_probability(-s_left, -s_right, vol, h, -barrier)
}

/// Interpolated value of the coarse path at the midpoint of a coarse step,
/// from the two fine increments spanning it.
#[inline]
pub fn coarse_midpoint(s_left: f64, s_right: f64, vol: f64, dw_first: f64, dw_second: f64) -> f64 {
    0.5 * (s_left + s_right) + 0.5 * vol * (dw_first - dw_second)
}

/// Bridge integral over a coarse step built from the two fine-step integrals.
/// `h` is the fine timestep.
#[inline]
pub fn coarse_bridge_integral(
    i_first: f64,
    i_second: f64,
    dw_first: f64,
    dw_second: f64,
    h: f64,
) -> f64 {
    i_first + i_second - 0.5 * h * (dw_second - dw_first)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::StreamKey;
    use proptest::prelude::*;

    #[test]
    fn level_grid_shapes() {
        let g = LevelGrid::new(0, 1.0).unwrap();
        assert_eq!((g.n_steps(), g.h(), g.coarse_steps()), (1, 1.0, 0));
        let g = LevelGrid::new(5, 3.0).unwrap();
        assert_eq!(g.n_steps(), 32);
        assert_eq!(g.h() * g.n_steps() as f64, 3.0);
        assert_eq!(g.coarse_steps(), 16);
        assert!(LevelGrid::new(31, 1.0).is_err());
        assert!(LevelGrid::new(2, -1.0).is_err());
    }

    #[test]
    fn level_zero_has_no_coarse_sequence() {
        let grid = LevelGrid::new(0, 1.0).unwrap();
        let incs = sample_coupled_increments(&mut StreamKey::new(3, 0).stream(0), &grid);
        assert_eq!(incs.fine.len(), 1);
        assert!(incs.coarse.is_empty());
        assert!(incs.matches(&grid));
        assert_eq!(incs.level(), Some(0));
    }

    #[test]
    fn coarse_is_pairwise_sum() {
        let grid = LevelGrid::new(2, 1.0).unwrap();
        let incs = sample_coupled_increments(&mut StreamKey::new(9, 2).stream(4), &grid);
        let f = &incs.fine;
        assert_eq!(incs.coarse, vec![f[0] + f[1], f[2] + f[3]]);
        assert!(incs.uniforms.iter().all(|&u| u > 0.0 && u < 1.0));
    }

    #[test]
    fn stream_layout_is_increments_then_uniforms_then_integrals() {
        let grid = LevelGrid::new(1, 1.0).unwrap();
        let key = StreamKey::new(11, 1);
        let incs = sample_coupled_increments(&mut key.stream(0), &grid);
        let mut s = key.stream(0);
        let h = grid.h();
        let expected_fine: Vec<f64> = (0..2).map(|_| h.sqrt() * s.standard_normal()).collect();
        let expected_u: Vec<f64> = (0..2).map(|_| s.uniform_open()).collect();
        let expected_i: Vec<f64> = (0..2)
            .map(|_| (h * h * h / 12.0).sqrt() * s.standard_normal())
            .collect();
        assert_eq!(incs.fine, expected_fine);
        assert_eq!(incs.uniforms, expected_u);
        assert_eq!(incs.bridge_integrals, expected_i);
    }

    #[test]
    fn fine_increment_variance_matches_timestep() {
        let grid = LevelGrid::new(3, 1.0).unwrap();
        let key = StreamKey::new(2024, 3);
        let mut stream = key.stream(0);
        let mut incs = CoupledIncrements::default();
        let n = 100_000;
        let mut sums = vec![0.0; 8];
        let mut integral_sq = 0.0;
        for i in 0..n {
            stream.reset(i);
            sample_coupled_increments_into(&mut stream, &grid, &mut incs);
            for (s, dw) in sums.iter_mut().zip(&incs.fine) {
                *s += dw * dw;
            }
            integral_sq += incs.bridge_integrals[0].powi(2);
        }
        let h = grid.h();
        for s in sums {
            assert!((s / n as f64 - h).abs() < 0.05 * h);
        }
        let target = h * h * h / 12.0;
        assert!((integral_sq / n as f64 - target).abs() < 0.05 * target);
    }

    #[test]
    fn conditional_minimum_values() {
        let u = 1.0 - f64::EPSILON;
        assert!((conditional_minimum(1.3, 0.7, 0.4, 0.1, u).unwrap() - 0.7).abs() < 1e-8);
        assert_eq!(conditional_minimum(1.3, 0.7, 0.0, 0.1, 0.3).unwrap(), 0.7);
        // radicand = -2 * 2 * ln(e^-1) = 4
        let m = conditional_minimum(1.0, 1.0, 2f64.sqrt(), 1.0, (-1f64).exp()).unwrap();
        assert!(m.abs() < 1e-15);
        for bad in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(conditional_minimum(1.0, 1.0, 1.0, 1.0, bad).is_err());
        }
        assert!(conditional_minimum(1.0, 1.0, 1.0, 0.0, 0.5).is_err());
    }

    #[test]
    fn conditional_maximum_values() {
        let v = 1.0 - f64::EPSILON;
        assert!((conditional_maximum(1.3, 0.7, 0.4, 0.1, v).unwrap() - 1.3).abs() < 1e-8);
        assert_eq!(conditional_maximum(1.3, 0.7, 0.0, 0.1, 0.3).unwrap(), 1.3);
        let m = conditional_maximum(1.0, 1.0, 2f64.sqrt(), 1.0, (-1f64).exp()).unwrap();
        assert!((m - 2.0).abs() < 1e-15);
        assert!(conditional_maximum(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn crossing_probability_values() {
        assert_eq!(crossing_probability(0.8, 1.2, 0.3, 0.5, 0.9).unwrap(), 1.0);
        assert_eq!(crossing_probability(1.2, 0.8, 0.3, 0.5, 0.9).unwrap(), 1.0);
        let (vol, h) = (0.3, 0.25);
        let d = (vol * vol * h / 2.0f64).sqrt();
        let p = crossing_probability(1.0 + d, 1.0 + d, vol, h, 1.0).unwrap();
        assert!((p - 0.367_879).abs() < 1e-6);
        assert!(crossing_probability(1.0, 1.0, 0.3, 0.25, -1e6).unwrap() < 1e-300);
        assert!(matches!(
            crossing_probability(1.0, 1.0, 0.0, 0.25, 0.5),
            Err(Error::ZeroVolatility { .. })
        ));
    }

    #[test]
    fn up_crossing_mirrors_down_crossing() {
        assert_eq!(crossing_probability_up(1.2, 0.9, 0.3, 0.5, 1.1).unwrap(), 1.0);
        let p_up = crossing_probability_up(1.0, 1.05, 0.2, 0.1, 1.1).unwrap();
        let expected = (-2.0 * 0.1 * 0.05 / (0.04 * 0.1f64)).exp();
        assert!((p_up - expected).abs() < 1e-15);
    }

    #[test]
    fn coarse_midpoint_values() {
        assert_eq!(coarse_midpoint(1.0, 3.0, 0.7, 0.2, 0.2), 2.0);
        assert_eq!(coarse_midpoint(1.0, 3.0, 0.0, 0.5, -0.2), 2.0);
        assert!((coarse_midpoint(0.0, 2.0, 1.0, 0.3, 0.1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn coarse_bridge_integral_values() {
        assert_eq!(coarse_bridge_integral(0.0, 0.0, 0.0, 0.0, 0.5), 0.0);
        assert_eq!(coarse_bridge_integral(0.0, 0.0, 0.4, 0.4, 0.5), 0.0);
        assert!((coarse_bridge_integral(0.1, -0.2, 0.5, 0.1, 0.25) - (-0.05)).abs() < 1e-15);
    }

    #[test]
    fn coarse_midpoint_deviation_has_bridge_variance() {
        let (vol, h): (f64, f64) = (0.3, 0.01);
        let mut s = StreamKey::with_domain(5, 99).stream(0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for _ in 0..n {
            let dw1 = h.sqrt() * s.standard_normal();
            let dw2 = h.sqrt() * s.standard_normal();
            let dev = coarse_midpoint(1.0, 1.0, vol, dw1, dw2) - 1.0;
            sum += dev;
            sum2 += dev * dev;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let target = vol * vol * h / 2.0;
        assert!(mean.abs() < 4.0 * (target / n as f64).sqrt());
        assert!((var - target).abs() < 0.05 * target);
    }

    #[test]
    fn coarse_bridge_integral_has_coarse_variance() {
        // Two fine steps of size h make one coarse step of size 2h.
        let h: f64 = 0.1;
        let mut s = StreamKey::with_domain(6, 99).stream(0);
        let n = 200_000;
        let mut sum2 = 0.0;
        let mut cross = 0.0;
        for _ in 0..n {
            let dw1 = h.sqrt() * s.standard_normal();
            let dw2 = h.sqrt() * s.standard_normal();
            let i1 = (h * h * h / 12.0f64).sqrt() * s.standard_normal();
            let i2 = (h * h * h / 12.0f64).sqrt() * s.standard_normal();
            let ic = coarse_bridge_integral(i1, i2, dw1, dw2, h);
            sum2 += ic * ic;
            cross += ic * (dw1 + dw2);
        }
        let target = (2.0 * h).powi(3) / 12.0;
        assert!((sum2 / n as f64 - target).abs() < 0.05 * target);
        // independent of the coarse increment
        assert!((cross / n as f64).abs() < 4.0 * (target * 2.0 * h / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn extremes_bracket_endpoints(
            a in -5.0f64..5.0, b in -5.0f64..5.0, vol in -2.0f64..2.0,
            h in 1e-6f64..2.0, u in 1e-12f64..0.999_999,
        ) {
            let lo = conditional_minimum(a, b, vol, h, u).unwrap();
            let hi = conditional_maximum(a, b, vol, h, u).unwrap();
            prop_assert!(lo <= a.min(b) + 1e-12);
            prop_assert!(hi >= a.max(b) - 1e-12);
        }

        #[test]
        fn crossing_probability_in_unit_interval(
            a in -5.0f64..5.0, b in -5.0f64..5.0, vol in 0.01f64..2.0,
            h in 1e-6f64..2.0, barrier in -5.0f64..5.0,
        ) {
            let p = crossing_probability(a, b, vol, h, barrier).unwrap();
            prop_assert!(p > 0.0 || (a - barrier) * (b - barrier) > 0.0);
            prop_assert!(p <= 1.0);
        }

        #[test]
        fn coarsening_preserves_total_increment(seed in any::<u64>(), level in 1u32..8) {
            let grid = LevelGrid::new(level, 1.0).unwrap();
            let incs = sample_coupled_increments(&mut StreamKey::new(seed, level).stream(0), &grid);
            let fine: f64 = incs.fine.iter().sum();
            let coarse: f64 = incs.coarse.iter().sum();
            // 4 ulp of the largest increment per summed term
            let max_abs = incs.fine.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let tol = 4.0 * f64::EPSILON * max_abs * incs.fine.len() as f64;
            prop_assert!((fine - coarse).abs() <= tol);
        }
    }

    #[test]
    fn skipped_blocks_leave_fine_increments_unchanged() {
        let key = StreamKey::new(3, 4);
        let grid = LevelGrid::new(4, 1.0).unwrap();
        let full = sample_coupled_increments(&mut key.stream(7), &grid);
        let mut part = CoupledIncrements::default();
        let only_uniforms = DrawSet {
            uniforms: true,
            bridge_integrals: false,
        };
        sample_selected_increments_into(&mut key.stream(7), &grid, &mut part, only_uniforms);
        assert!(part.matches(&grid));
        assert_eq!(part.fine, full.fine);
        assert_eq!(part.coarse, full.coarse);
        assert_eq!(part.uniforms, full.uniforms);
        assert!(part.bridge_integrals.iter().all(|x| x.is_nan()));
    }

}
