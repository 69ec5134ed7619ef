//! Black-Scholes call pricing, implied volatility inversion, delta/moneyness
//! conversion, and pointwise static no-arbitrage diagnostics.
//!
//! Throughout the crate a surface point is coordinatized by log forward
//! moneyness `m = ln(K / F)` and time to maturity `tau` (years). Prices are
//! undiscounted-forward Black-Scholes calls discounted at `rate`:
//!
//! ```text
//! C = e^(-r tau) * (F N(d1) - K N(d2)),
//! d1 = (-m + sigma^2 tau / 2) / (sigma sqrt(tau)),   d2 = d1 - sigma sqrt(tau).
//! ```
//!
//! The no-arbitrage diagnostics are the pointwise quantities whose
//! nonnegativity (together with positivity and linear-in-m asymptotics of
//! total variance) characterizes a surface free of calendar and butterfly
//! arbitrage:
//!
//! ```text
//! ell_cal = sigma + 2 tau d_tau(sigma)
//! ell_but = (1 - m d_m(sigma)/sigma)^2 - (sigma tau d_m(sigma))^2 / 4
//!           + tau sigma d_mm(sigma)
//! large_m = | sigma d_mm(sigma) + (d_m(sigma))^2 |
//! ```
//!
//! `large_m` is half the second m-derivative of total implied variance over
//! `tau`; it vanishes exactly where `sigma^2` is linear in `m`, which is the
//! admissible wing growth.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;

use crate::error::{Error, Result};
use crate::math::{norm_cdf, norm_pdf, norm_quantile};

/// Market coordinates of a single option quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketPoint {
    /// Forward price of the underlying for expiry `tau`.
    pub forward: f64,
    /// Strike.
    pub strike: f64,
    /// Time to maturity in years.
    pub tau: f64,
    /// Continuously compounded discount rate.
    pub rate: f64,
}

impl MarketPoint {
    /// Log forward moneyness `ln(K / F)`.
    pub fn log_moneyness(&self) -> f64 {
        (self.strike / self.forward).ln()
    }

    fn validate(&self) -> Result<()> {
        if !(self.forward > 0.0 && self.strike > 0.0 && self.tau > 0.0)
            || !self.rate.is_finite()
            || !self.forward.is_finite()
            || !self.strike.is_finite()
            || !self.tau.is_finite()
        {
            return Err(Error::domain(format!(
                "market point requires finite F, K, tau > 0 and finite rate, got \
                 F={}, K={}, tau={}, r={}",
                self.forward, self.strike, self.tau, self.rate
            )));
        }
        Ok(())
    }
}

/// A surface sample in (log-moneyness, maturity, vol) coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub m: f64,
    pub tau: f64,
    pub vol: f64,
}

/// Local value and derivatives of a vol surface at one point, as consumed by
/// the no-arbitrage diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDerivs {
    pub vol: f64,
    pub d_m: f64,
    pub d_mm: f64,
    pub d_tau: f64,
}

/// Search bracket for the implied-vol solver.
pub const IV_BRACKET: (f64, f64) = (1e-4, 5.0);
/// Absolute price tolerance at which the solver stops.
pub const IV_PRICE_TOL: f64 = 1e-10;
/// Iteration cap for the solver.
pub const IV_MAX_ITER: u32 = 100;

/// Black-Scholes call price at volatility `sigma`.
///
/// `sigma = 0` is accepted and returns discounted intrinsic value.
///
/// # Errors
/// `Error::Domain` on non-finite inputs, non-positive `F`, `K`, `tau`, or
/// negative `sigma`.
pub fn bs_call_price(point: &MarketPoint, sigma: f64) -> Result<f64> {
    point.validate()?;
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::domain(format!("volatility must be >= 0, got {sigma}")));
    }
    let df = (-point.rate * point.tau).exp();
    if sigma == 0.0 {
        return Ok(df * (point.forward - point.strike).max(0.0));
    }
    let m = point.log_moneyness();
    let st = sigma * point.tau.sqrt();
    let d1 = (-m + 0.5 * sigma * sigma * point.tau) / st;
    let d2 = d1 - st;
    Ok(df * (point.forward * norm_cdf(d1) - point.strike * norm_cdf(d2)))
}

/// Black-Scholes vega, `dC/dsigma`.
pub fn bs_vega(point: &MarketPoint, sigma: f64) -> Result<f64> {
    point.validate()?;
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::domain(format!("vega requires sigma > 0, got {sigma}")));
    }
    let m = point.log_moneyness();
    let st = sigma * point.tau.sqrt();
    let d1 = (-m + 0.5 * sigma * sigma * point.tau) / st;
    Ok((-point.rate * point.tau).exp() * point.forward * norm_pdf(d1) * point.tau.sqrt())
}

/// Forward call delta `e^(-q tau) N(d1)` for dividend yield `q`.
pub fn bs_call_delta(point: &MarketPoint, sigma: f64, div_yield: f64) -> Result<f64> {
    point.validate()?;
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::domain(format!("delta requires sigma > 0, got {sigma}")));
    }
    let m = point.log_moneyness();
    let st = sigma * point.tau.sqrt();
    let d1 = (-m + 0.5 * sigma * sigma * point.tau) / st;
    Ok((-div_yield * point.tau).exp() * norm_cdf(d1))
}

/// Implied volatility of a call `price` by safeguarded Newton iteration
/// inside [`IV_BRACKET`]: Newton steps are clipped to the current sign-change
/// bracket, falling back to bisection whenever they leave it or stall.
///
/// # Errors
/// - `Error::Bounds` unless the price lies strictly between discounted
///   intrinsic value and the discounted forward;
/// - `Error::Solver` if no volatility inside the bracket matches the price
///   to [`IV_PRICE_TOL`] within [`IV_MAX_ITER`] iterations.
pub fn implied_vol(point: &MarketPoint, price: f64) -> Result<f64> {
    point.validate()?;
    let df = (-point.rate * point.tau).exp();
    let lower = df * (point.forward - point.strike).max(0.0);
    let upper = df * point.forward;
    if !price.is_finite() || price <= lower || price >= upper {
        return Err(Error::bounds(format!(
            "call price {price} outside the static no-arbitrage band ({lower}, {upper})"
        )));
    }

    let (mut lo, mut hi) = IV_BRACKET;
    let f_lo = bs_call_price(point, lo)? - price;
    if f_lo.abs() <= IV_PRICE_TOL {
        return Ok(lo);
    }
    let f_hi = bs_call_price(point, hi)? - price;
    if f_hi.abs() <= IV_PRICE_TOL {
        return Ok(hi);
    }
    // The price is increasing in sigma, so a root inside the bracket needs
    // f(lo) < 0 < f(hi).
    if f_lo > 0.0 || f_hi < 0.0 {
        return Err(Error::Solver {
            message: format!(
                "implied vol outside search bracket [{}, {}] (f_lo={f_lo:.3e}, f_hi={f_hi:.3e})",
                IV_BRACKET.0, IV_BRACKET.1
            ),
            iterations: 0,
        });
    }

    let mut sigma = 0.5 * (lo + hi);
    for iter in 1..=IV_MAX_ITER {
        let f = bs_call_price(point, sigma)? - price;
        if f.abs() <= IV_PRICE_TOL {
            return Ok(sigma);
        }
        if f < 0.0 {
            lo = sigma;
        } else {
            hi = sigma;
        }
        let vega = bs_vega(point, sigma)?;
        let newton = sigma - f / vega;
        sigma = if vega > 1e-300 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-16 {
            break;
        }
        let _ = iter;
    }
    Err(Error::Solver {
        message: format!("implied vol did not reach price tolerance {IV_PRICE_TOL}"),
        iterations: IV_MAX_ITER,
    })
}

/// Log forward moneyness of the quote with forward call delta `delta`:
///
/// ```text
/// m = sigma^2 tau / 2 - sigma sqrt(tau) * N^(-1)(e^(q tau) delta)
/// ```
///
/// # Errors
/// `Error::Domain` unless `sigma > 0`, `tau > 0`, and `e^(q tau) delta` lies
/// strictly inside (0, 1).
pub fn delta_to_moneyness(delta: f64, sigma: f64, tau: f64, div_yield: f64) -> Result<f64> {
    if !(sigma > 0.0) || !(tau > 0.0) || !sigma.is_finite() || !tau.is_finite() {
        return Err(Error::domain(format!(
            "delta conversion requires sigma > 0 and tau > 0, got sigma={sigma}, tau={tau}"
        )));
    }
    let scaled = (div_yield * tau).exp() * delta;
    if !(scaled > 0.0 && scaled < 1.0) {
        return Err(Error::domain(format!(
            "e^(q tau) * delta = {scaled} must lie strictly in (0, 1)"
        )));
    }
    let z = norm_quantile(scaled)?;
    Ok(0.5 * sigma * sigma * tau - sigma * tau.sqrt() * z)
}

/// Calendar diagnostic `sigma + 2 tau d_tau(sigma)`; nonnegative on
/// calendar-arbitrage-free surfaces (total variance nondecreasing in `tau`).
pub fn ell_cal(d: &LocalDerivs, tau: f64) -> f64 {
    d.vol + 2.0 * tau * d.d_tau
}

/// Butterfly diagnostic; nonnegative where the call-price smile is convex in
/// strike.
///
/// # Errors
/// `Error::Domain` unless `vol > 0` (the expression divides by `sigma`).
pub fn ell_but(d: &LocalDerivs, m: f64, tau: f64) -> Result<f64> {
    if !(d.vol > 0.0) {
        return Err(Error::domain(format!(
            "butterfly diagnostic requires sigma > 0, got {}",
            d.vol
        )));
    }
    let a = 1.0 - m * d.d_m / d.vol;
    let b = d.vol * tau * d.d_m;
    Ok(a * a - 0.25 * b * b + tau * d.vol * d.d_mm)
}

/// Wing-growth diagnostic `| sigma d_mm(sigma) + (d_m(sigma))^2 |`; zero
/// exactly where squared vol is linear in `m`.
pub fn large_m_term(d: &LocalDerivs) -> f64 {
    (d.vol * d.d_mm + d.d_m * d.d_m).abs()
}
