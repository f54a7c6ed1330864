//! Run configuration: a JSON manifest plus command-line overrides.

use std::fmt;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlmc_core::{
    gbm_model, AsianTreatment, GbmParams, MlmcConfig, MlmcProblem, PayoffSpec, Scheme,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Converge,
    Price,
    Validate,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    European,
    AsianT1,
    AsianT2,
    Lookback,
    Barrier,
    Digital,
    Constant,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BarrierDirection {
    #[default]
    Down,
    Up,
}

/// Payoff selection. Unused fields are ignored by the chosen kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffKind,
    #[serde(default = "one")]
    pub strike: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<f64>,
    #[serde(default)]
    pub direction: BarrierDirection,
    /// Observation times of a European payoff; a call on their arithmetic
    /// mean. Defaults to the horizon alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Value of the constant payoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for PayoffConfig {
    fn default() -> Self {
        Self {
            kind: PayoffKind::European,
            strike: 1.0,
            barrier: None,
            direction: BarrierDirection::Down,
            times: None,
            value: None,
        }
    }
}

/// Driver settings; unset fields take the payoff-dependent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_warm: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<u32>,
}

/// Inclusive level range, written `A..B` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelRange {
    pub start: u32,
    pub end: u32,
}

impl LevelRange {
    pub fn range(&self) -> RangeInclusive<u32> {
        self.start..=self.end
    }
}

impl fmt::Display for LevelRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for LevelRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("level range '{s}' is not of the form A..B"))?;
        let b = b.strip_prefix('=').unwrap_or(b);
        let parse = |x: &str| {
            x.trim()
                .parse::<u32>()
                .map_err(|e| format!("bad level '{x}': {e}"))
        };
        let (start, end) = (parse(a)?, parse(b)?);
        if start > end {
            return Err(format!("empty level range {s}"));
        }
        Ok(Self { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: GbmParams,
    pub payoff: PayoffConfig,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default = "default_levels")]
    pub levels: LevelRange,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub driver: DriverConfig,
}

fn default_scheme() -> Scheme {
    Scheme::Milstein
}

fn default_levels() -> LevelRange {
    LevelRange { start: 0, end: 8 }
}

fn default_samples() -> u64 {
    100_000
}

fn default_repeat() -> u32 {
    1
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: GbmParams {
                mu: 0.05,
                sigma: 0.2,
                s0: 1.0,
                horizon: 1.0,
            },
            payoff: PayoffConfig::default(),
            scheme: default_scheme(),
            mode: None,
            levels: default_levels(),
            samples: default_samples(),
            eps: None,
            seed: 0,
            repeat: default_repeat(),
            out: None,
            format: OutputFormat::Csv,
            driver: DriverConfig::default(),
        }
    }
}

/// Command-line values that replace manifest entries when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub levels: Option<LevelRange>,
    pub samples: Option<u64>,
    pub eps: Option<f64>,
    pub repeat: Option<u32>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, mode: Mode, o: Overrides) {
        self.mode = Some(mode);
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.out {
            self.out = Some(v);
        }
        if let Some(v) = o.format {
            self.format = v;
        }
        if let Some(v) = o.levels {
            self.levels = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.eps {
            self.eps = Some(v);
        }
        if let Some(v) = o.repeat {
            self.repeat = v;
        }
    }

    /// Checks the invariants of the selected mode.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.payoff.kind == PayoffKind::Barrier {
            let Some(b) = self.payoff.barrier else {
                return bad("barrier payoff needs a 'barrier' level".into());
            };
            let wrong_side = match self.payoff.direction {
                BarrierDirection::Down => b >= self.model.s0,
                BarrierDirection::Up => b <= self.model.s0,
            };
            if wrong_side {
                return bad(format!(
                    "barrier {b} on the wrong side of s0 = {} for a {:?} barrier",
                    self.model.s0, self.payoff.direction
                ));
            }
        }
        match self.mode {
            Some(Mode::Price) => match self.eps {
                Some(e) if e > 0.0 && e.is_finite() => {}
                Some(e) => return bad(format!("eps must be > 0, got {e}")),
                None => return bad("price mode needs eps".into()),
            },
            Some(Mode::Converge) if self.samples < 100 => {
                return bad(format!("need at least 100 samples per level, got {}", self.samples))
            }
            _ => {}
        }
        if self.repeat == 0 {
            return bad("repeat must be at least 1".into());
        }
        Ok(())
    }

    pub fn payoff_spec(&self) -> Result<PayoffSpec, CliError> {
        let p = &self.payoff;
        let strike = p.strike;
        Ok(match p.kind {
            PayoffKind::European => match &p.times {
                None => PayoffSpec::european_call(strike, self.model.horizon),
                Some(times) => PayoffSpec::european(
                    move |v| (v.iter().sum::<f64>() / v.len() as f64 - strike).max(0.0),
                    times.clone(),
                ),
            },
            PayoffKind::AsianT1 => PayoffSpec::asian_call(strike, AsianTreatment::BridgeIntegral),
            PayoffKind::AsianT2 => PayoffSpec::asian_call(strike, AsianTreatment::Trapezoidal),
            PayoffKind::Lookback => PayoffSpec::lookback_floating(),
            PayoffKind::Barrier => {
                let b = p
                    .barrier
                    .ok_or_else(|| CliError::Config("barrier payoff needs 'barrier'".into()))?;
                match p.direction {
                    BarrierDirection::Down => PayoffSpec::down_and_out_call(strike, b),
                    BarrierDirection::Up => PayoffSpec::up_and_out_call(strike, b),
                }
            }
            PayoffKind::Digital => PayoffSpec::digital(strike),
            PayoffKind::Constant => {
                PayoffSpec::constant(p.value.unwrap_or(strike), self.model.horizon)
            }
        })
    }

    pub fn problem(&self) -> Result<MlmcProblem, CliError> {
        let model = gbm_model(self.model).map_err(|e| CliError::Config(e.to_string()))?;
        MlmcProblem::new(model, self.payoff_spec()?, self.scheme)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn driver(&self, payoff: &PayoffSpec, seed: u64) -> MlmcConfig {
        let base = MlmcConfig::for_payoff(payoff);
        let d = &self.driver;
        MlmcConfig {
            alpha: d.alpha.unwrap_or(base.alpha),
            bias_safety: d.bias_safety.unwrap_or(base.bias_safety),
            n_warm: d.n_warm.unwrap_or(base.n_warm),
            l_min: d.l_min.unwrap_or(base.l_min),
            l_max: d.l_max.unwrap_or(base.l_max),
            seed,
        }
    }
}
