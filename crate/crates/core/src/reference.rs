//! Closed-form and quadrature values for geometric Brownian motion, used as
//! test oracles. All prices are undiscounted expectations under the model
//! drift `mu`.

use crate::error::{Error, Result};
use crate::model::GbmParams;
use crate::stats::normal_cdf;

fn sigma_root_t(p: &GbmParams) -> Result<f64> {
    let s = p.sigma * p.horizon.sqrt();
    if s > 0.0 {
        Ok(s)
    } else {
        Err(Error::InvalidParameter(
            "closed forms need sigma > 0".into(),
        ))
    }
}

/// `E[(S_T - K)^+]`.
pub fn call_price(p: &GbmParams, strike: f64) -> Result<f64> {
    let sd = sigma_root_t(p)?;
    let forward = p.s0 * (p.mu * p.horizon).exp();
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(forward * normal_cdf(d1) - strike * normal_cdf(d2))
}

/// `P(S_T > K)`.
pub fn digital_price(p: &GbmParams, strike: f64) -> Result<f64> {
    let sd = sigma_root_t(p)?;
    let d2 = ((p.s0 / strike).ln() + (p.mu - 0.5 * p.sigma * p.sigma) * p.horizon) / sd;
    Ok(normal_cdf(d2))
}

/// `E[(1/T) ∫ S_t dt]`.
pub fn time_average_mean(p: &GbmParams) -> f64 {
    let x = p.mu * p.horizon;
    if x.abs() < 1e-8 {
        p.s0 * (1.0 + 0.5 * x)
    } else {
        p.s0 * x.exp_m1() / x
    }
}

/// `P(min_{t<=T} (nu t + sigma W_t) <= m)` for `m <= 0`.
fn log_minimum_cdf(m: f64, nu: f64, sigma: f64, horizon: f64) -> f64 {
    let sd = sigma * horizon.sqrt();
    let reflected = (2.0 * nu * m / (sigma * sigma)).exp() * normal_cdf((m + nu * horizon) / sd);
    (normal_cdf((m - nu * horizon) / sd) + reflected).min(1.0)
}

/// `E[min_{t<=T} S_t]` by Simpson quadrature of `1 - ∫_{-∞}^0 e^m F(m) dm`,
/// `F` being the law of the running minimum of the log-price.
pub fn expected_minimum(p: &GbmParams) -> Result<f64> {
    sigma_root_t(p)?;
    let nu = p.mu - 0.5 * p.sigma * p.sigma;
    let lower = -40.0;
    let n = 40_000usize;
    let step = -lower / n as f64;
    let g = |m: f64| m.exp() * log_minimum_cdf(m, nu, p.sigma, p.horizon);
    let mut sum = g(lower) + g(0.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * g(lower + i as f64 * step);
    }
    Ok(p.s0 * (1.0 - sum * step / 3.0))
}

/// `E[S_T - min_{t<=T} S_t]`.
pub fn floating_lookback_price(p: &GbmParams) -> Result<f64> {
    Ok(p.s0 * (p.mu * p.horizon).exp() - expected_minimum(p)?)
}

/// `E[(S_T - K)^+ 1{min S > B}]` for a continuously monitored barrier
/// `B <= K`, `B < s0`.
pub fn down_and_out_call_price(p: &GbmParams, strike: f64, barrier: f64) -> Result<f64> {
    let sd = sigma_root_t(p)?;
    if !(barrier > 0.0 && barrier <= strike && barrier < p.s0) {
        return Err(Error::InvalidParameter(format!(
            "closed form needs 0 < B <= K and B < s0, got B = {barrier}, K = {strike}"
        )));
    }
    let r = p.mu;
    let t = p.horizon;
    let s = p.s0;
    let lambda = (r + 0.5 * p.sigma * p.sigma) / (p.sigma * p.sigma);
    let y = (barrier * barrier / (s * strike)).ln() / sd + lambda * sd;
    let ratio = barrier / s;
    // down-and-in value, discounted, then grown back to time T
    let down_in = s * ratio.powf(2.0 * lambda) * normal_cdf(y)
        - strike * (-r * t).exp() * ratio.powf(2.0 * lambda - 2.0) * normal_cdf(y - sd);
    Ok(call_price(p, strike)? - down_in * (r * t).exp())
}
