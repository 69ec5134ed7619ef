//! Synthetic quote panels from a surface-SVI ground truth.
//!
//! Each day's true surface is the SVI total-variance family
//!
//! ```text
//! w(m, tau) = (theta/2) * (1 + rho*phi*m + sqrt((phi*m + rho)^2 + 1 - rho^2)),
//! theta = v * tau^kappa,    phi = eta / sqrt(theta),    sigma = sqrt(w / tau),
//! ```
//!
//! whose no-arbitrage regions are known in closed form: calendar spreads are
//! excluded when `theta` is non-decreasing in `tau` (here `kappa > 0`) and
//! butterflies when `eta^2 (1 + |rho|) <= 4` with this square-root `phi`.
//! The four parameters (level `v`, term slope `kappa`, skew `rho`, smile
//! curvature `eta`) each follow a latent Gaussian AR(1) squashed through
//! `mid + amp*tanh(y)`, so every path stays inside configured stationary
//! bounds while giving a predictor persistent, mean-reverting dynamics.
//!
//! Every candidate day is scanned for `l_cal >= -1e-10` and `l_but >= -1e-10`
//! on a wide verification grid using the analytic derivatives below; a
//! violating day is re-drawn from the last accepted state (the re-draw count
//! is reported). Quotes are laid out as forward-call deltas by maturities;
//! the log-moneyness of each quote is solved by bisection and then passed
//! through the same delta-to-moneyness map the loader uses, so writing a
//! generated panel to the quote format and loading it back is the identity.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::math::std_normal;
use crate::surface::{delta_to_moneyness, ell_but, ell_cal, LocalDerivs, SurfacePoint};

use super::{CoordKind, QuoteMeta, SurfaceSnapshot};

/// Scan tolerance: retained days satisfy both diagnostics at `-SCAN_TOL`.
pub const SCAN_TOL: f64 = 1e-10;

/// Mean-reverting dynamics of one surface parameter: a latent Gaussian AR(1)
/// `y_t = ar*y_{t-1} + noise*eps_t` mapped through `mid + amp*tanh(y_t)`.
/// The parameter therefore always lies in `(mid - amp, mid + amp)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamDynamics {
    pub mid: f64,
    pub amp: f64,
    pub ar: f64,
    pub noise: f64,
}

impl ParamDynamics {
    /// A constant parameter (zero amplitude and noise).
    pub fn constant(mid: f64) -> Self {
        Self {
            mid,
            amp: 0.0,
            ar: 0.0,
            noise: 0.0,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mid - self.amp
    }

    pub fn upper(&self) -> f64 {
        self.mid + self.amp
    }

    fn validate(&self, name: &str) -> Result<()> {
        for (v, label) in [
            (self.mid, "mid"),
            (self.amp, "amp"),
            (self.ar, "ar"),
            (self.noise, "noise"),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("{name}.{label} must be finite")));
            }
        }
        if self.ar.abs() >= 1.0 {
            return Err(Error::config(format!(
                "{name}.ar = {}: autoregressive coefficient must have |ar| < 1",
                self.ar
            )));
        }
        if self.amp < 0.0 || self.noise < 0.0 {
            return Err(Error::config(format!(
                "{name}: amp and noise must be non-negative"
            )));
        }
        Ok(())
    }

    /// Standard deviation of the stationary latent distribution.
    fn stationary_std(&self) -> f64 {
        self.noise / (1.0 - self.ar * self.ar).sqrt()
    }

    fn map(&self, y: f64) -> f64 {
        self.mid + self.amp * y.tanh()
    }
}

/// One day's true surface parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsviParams {
    pub v: f64,
    pub kappa: f64,
    pub rho: f64,
    pub eta: f64,
}

impl SsviParams {
    fn theta(&self, tau: f64) -> f64 {
        self.v * tau.powf(self.kappa)
    }

    /// Total implied variance `w(m, tau)`.
    pub fn total_var(&self, m: f64, tau: f64) -> f64 {
        let theta = self.theta(tau);
        let phi = self.eta / theta.sqrt();
        let x = phi * m + self.rho;
        0.5 * theta * (1.0 + self.rho * phi * m + (x * x + 1.0 - self.rho * self.rho).sqrt())
    }

    /// Implied volatility at `(m, tau)`.
    pub fn vol(&self, m: f64, tau: f64) -> f64 {
        (self.total_var(m, tau) / tau).sqrt()
    }

    /// Vol and its analytic derivatives, for the no-arbitrage scan.
    pub fn derivs(&self, m: f64, tau: f64) -> LocalDerivs {
        let theta = self.theta(tau);
        let phi = self.eta / theta.sqrt();
        let x = phi * m + self.rho;
        let root = (x * x + 1.0 - self.rho * self.rho).sqrt();
        let w = 0.5 * theta * (1.0 + self.rho * phi * m + root);
        let w_m = 0.5 * theta * phi * (self.rho + x / root);
        let w_mm = 0.5 * theta * phi * phi * (1.0 - self.rho * self.rho) / (root * root * root);
        // With phi = eta * theta^(-1/2): d(phi)/d(theta) = -phi / (2 theta),
        // so dw/dtheta = w/theta - (m phi / 4)(rho + x/root).
        let w_theta = w / theta - 0.25 * m * phi * (self.rho + x / root);
        let theta_tau = self.v * self.kappa * tau.powf(self.kappa - 1.0);
        let w_tau = w_theta * theta_tau;

        let vol = (w / tau).sqrt();
        let d_m = w_m / (2.0 * vol * tau);
        let d_mm = (w_mm / tau - 2.0 * d_m * d_m) / (2.0 * vol);
        let d_tau = (w_tau * tau - w) / (2.0 * vol * tau * tau);
        LocalDerivs {
            vol,
            d_m,
            d_mm,
            d_tau,
        }
    }
}

/// Generator configuration. `deltas` and `tau_days` define the per-day
/// quote layout (every delta at every maturity).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub days: usize,
    pub start_date: NaiveDate,
    pub deltas: Vec<f64>,
    pub tau_days: Vec<f64>,
    pub rate: f64,
    pub div_yield: f64,
    pub level: ParamDynamics,
    pub term: ParamDynamics,
    pub skew: ParamDynamics,
    pub curvature: ParamDynamics,
    /// Re-draw attempts allowed per day before generation fails.
    pub max_redraws: u32,
}

impl Default for SynthConfig {
    /// 500 days of 34 deltas (0.100 to 0.925 in steps of 0.025) by 11
    /// maturities: 374 quotes per day, deep-in-the-money through far
    /// out-of-the-money.
    fn default() -> Self {
        Self {
            days: 500,
            start_date: NaiveDate::from_ymd_opt(2009, 1, 1).expect("valid date"),
            deltas: (4..=37).map(|k| k as f64 / 40.0).collect(),
            tau_days: alloc::vec![
                10.0, 30.0, 60.0, 91.0, 122.0, 152.0, 182.0, 273.0, 365.0, 547.0, 730.0,
            ],
            rate: 0.02,
            div_yield: 0.01,
            level: ParamDynamics {
                mid: 0.04,
                amp: 0.02,
                ar: 0.97,
                noise: 0.12,
            },
            term: ParamDynamics {
                mid: 0.85,
                amp: 0.20,
                ar: 0.95,
                noise: 0.15,
            },
            skew: ParamDynamics {
                mid: -0.35,
                amp: 0.30,
                ar: 0.95,
                noise: 0.15,
            },
            curvature: ParamDynamics {
                mid: 0.70,
                amp: 0.40,
                ar: 0.95,
                noise: 0.15,
            },
            max_redraws: 100,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::config("days must be at least 1"));
        }
        if self.deltas.is_empty() || self.tau_days.is_empty() {
            return Err(Error::config("quote layout must be non-empty"));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.deltas) || !increasing(&self.tau_days) {
            return Err(Error::config("deltas and tau_days must be strictly increasing"));
        }
        if !(self.tau_days[0] > 0.0) {
            return Err(Error::config("tau_days must be positive"));
        }
        let tau_max = self.tau_days[self.tau_days.len() - 1] / 365.0;
        let delta_cap = if self.div_yield > 0.0 {
            (-self.div_yield * tau_max).exp()
        } else {
            1.0
        };
        for &d in &self.deltas {
            if !(d > 0.0) || d >= delta_cap {
                return Err(Error::config(format!(
                    "delta {d} outside (0, {delta_cap}), the attainable forward-delta range"
                )));
            }
        }
        if !self.rate.is_finite() || !self.div_yield.is_finite() {
            return Err(Error::config("rate and div_yield must be finite"));
        }
        self.level.validate("level")?;
        self.term.validate("term")?;
        self.skew.validate("skew")?;
        self.curvature.validate("curvature")?;
        if self.level.lower() <= 0.0 {
            return Err(Error::config("level bounds must stay positive"));
        }
        if self.term.lower() <= 0.0 {
            return Err(Error::config(
                "term bounds must stay positive (theta non-decreasing needs kappa > 0)",
            ));
        }
        if self.skew.lower() <= -1.0 || self.skew.upper() >= 1.0 {
            return Err(Error::config("skew bounds must stay inside (-1, 1)"));
        }
        if self.curvature.lower() < 0.0 {
            return Err(Error::config("curvature bounds must be non-negative"));
        }
        Ok(())
    }

    fn map_params(&self, y: &[f64; 4]) -> SsviParams {
        SsviParams {
            v: self.level.map(y[0]),
            kappa: self.term.map(y[1]),
            rho: self.skew.map(y[2]),
            eta: self.curvature.map(y[3]),
        }
    }
}

/// A generated panel: daily snapshots, the true per-day parameters behind
/// them, and how many candidate days were rejected by the arbitrage scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthPanel {
    pub snapshots: Vec<SurfaceSnapshot>,
    pub params: Vec<SsviParams>,
    pub redraws: u32,
}

fn passes_scan(p: &SsviParams, tau_lo: f64, tau_hi: f64) -> bool {
    // Wide fixed scan: well beyond the delta-implied moneyness range, and
    // maturities from half the shortest quote to past the longest.
    const N_M: usize = 29;
    const N_TAU: usize = 17;
    let (m_lo, m_hi) = (-1.3, 1.5);
    let (t_lo, t_hi) = (0.5 * tau_lo, 1.1 * tau_hi);
    for i in 0..N_M {
        let m = m_lo + (m_hi - m_lo) * i as f64 / (N_M - 1) as f64;
        for j in 0..N_TAU {
            let tau = t_lo * (t_hi / t_lo).powf(j as f64 / (N_TAU - 1) as f64);
            let d = p.derivs(m, tau);
            if !d.vol.is_finite() || d.vol <= 0.0 {
                return false;
            }
            if ell_cal(&d, tau) < -SCAN_TOL {
                return false;
            }
            match ell_but(&d, m, tau) {
                Ok(l) if l >= -SCAN_TOL => {}
                _ => return false,
            }
        }
    }
    true
}

/// Solves the log-moneyness at which the surface's forward call delta equals
/// `delta`, by bisection on a bracket that covers all attainable quotes.
fn solve_moneyness(p: &SsviParams, delta: f64, tau: f64, div_yield: f64) -> Result<f64> {
    // Forward call delta exp(-q tau) N(d1) falls in m, since both -m and the
    // smile's d1 dependence are dominated by the exp(-m) strike effect.
    let g = |m: f64| -> Result<f64> {
        let sigma = p.vol(m, tau);
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!(
                "surface vol invalid at m={m}, tau={tau}"
            )));
        }
        let sqrt_tau = tau.sqrt();
        let d1 = (-m + 0.5 * sigma * sigma * tau) / (sigma * sqrt_tau);
        Ok((-div_yield * tau).exp() * crate::math::norm_cdf(d1) - delta)
    };
    let (mut lo, mut hi) = (-3.0, 3.2);
    let (g_lo, g_hi) = (g(lo)?, g(hi)?);
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(Error::Solver {
            message: format!("delta {delta} not bracketed at tau {tau}"),
            iterations: 0,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generates a synthetic quote panel. Deterministic given `(config, seed)`.
///
/// # Errors
/// `Error::Config` for invalid configuration (including `|ar| >= 1`);
/// `Error::Data` if a day cannot produce an arbitrage-free surface within
/// `max_redraws` attempts.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<SynthPanel> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dyn_all = [config.level, config.term, config.skew, config.curvature];
    let tau_lo = config.tau_days[0] / 365.0;
    let tau_hi = config.tau_days[config.tau_days.len() - 1] / 365.0;

    let mut snapshots = Vec::with_capacity(config.days);
    let mut params_out = Vec::with_capacity(config.days);
    let mut redraws = 0u32;
    let mut state = [0.0f64; 4];

    for day in 0..config.days {
        let mut attempts = 0u32;
        let (next_state, params) = loop {
            let mut candidate = [0.0f64; 4];
            for (k, dynamics) in dyn_all.iter().enumerate() {
                let eps = std_normal(&mut rng);
                candidate[k] = if day == 0 {
                    dynamics.stationary_std() * eps
                } else {
                    dynamics.ar * state[k] + dynamics.noise * eps
                };
            }
            let params = config.map_params(&candidate);
            if passes_scan(&params, tau_lo, tau_hi) {
                break (candidate, params);
            }
            attempts += 1;
            redraws += 1;
            if attempts > config.max_redraws {
                return Err(Error::data(format!(
                    "day {day}: no arbitrage-free draw within {} attempts; \
                     tighten the parameter bounds",
                    config.max_redraws
                )));
            }
        };
        state = next_state;

        let date = config
            .start_date
            .checked_add_days(Days::new(day as u64))
            .ok_or_else(|| Error::config("date overflow"))?;
        let n = config.deltas.len() * config.tau_days.len();
        let mut points = Vec::with_capacity(n);
        let mut meta = Vec::with_capacity(n);
        for &tau_days in &config.tau_days {
            let tau = tau_days / 365.0;
            for &delta in &config.deltas {
                let m_solved = solve_moneyness(&params, delta, tau, config.div_yield)?;
                let vol = params.vol(m_solved, tau);
                // Re-derive m through the loader's own conversion so a
                // written file parses back to bit-identical points.
                let m = delta_to_moneyness(delta, vol, tau, config.div_yield)?;
                points.push(SurfacePoint { m, tau, vol });
                meta.push(QuoteMeta {
                    coord_kind: CoordKind::Delta,
                    coord1: delta,
                    tau_days,
                    rate: config.rate,
                    div_yield: config.div_yield,
                });
            }
        }
        let snapshot = SurfaceSnapshot {
            date,
            points,
            meta: Some(meta),
        };
        snapshot.validate()?;
        snapshots.push(snapshot);
        params_out.push(params);
    }

    Ok(SynthPanel {
        snapshots,
        params: params_out,
        redraws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{default_grid, format_quotes, parse_quotes, resample_to_grid};
    use crate::interp::{eval_dfw, fit_dfw};
    use crate::surface::{bs_call_delta, MarketPoint};

    fn small_config() -> SynthConfig {
        SynthConfig {
            days: 6,
            deltas: alloc::vec![0.15, 0.3, 0.5, 0.7, 0.85],
            tau_days: alloc::vec![30.0, 91.0, 182.0, 365.0, 730.0],
            ..SynthConfig::default()
        }
    }

    fn zero_noise(mut config: SynthConfig) -> SynthConfig {
        for d in [
            &mut config.level,
            &mut config.term,
            &mut config.skew,
            &mut config.curvature,
        ] {
            d.noise = 0.0;
        }
        config
    }

    #[test]
    fn zero_noise_panel_repeats_one_surface() {
        let config = zero_noise(small_config());
        let panel = synth_generate(&config, 11).unwrap();
        assert_eq!(panel.snapshots.len(), 6);
        assert_eq!(panel.redraws, 0);
        let first = &panel.snapshots[0];
        for snap in &panel.snapshots[1..] {
            assert_eq!(snap.points.len(), first.points.len());
            for (a, b) in snap.points.iter().zip(&first.points) {
                assert_eq!(a.m, b.m);
                assert_eq!(a.vol, b.vol);
            }
        }
        // tanh(0) = 0, so parameters sit exactly at their midpoints.
        assert_eq!(panel.params[0].v, config.level.mid);
        assert_eq!(panel.params[0].kappa, config.term.mid);
        assert_eq!(panel.params[0].rho, config.skew.mid);
        assert_eq!(panel.params[0].eta, config.curvature.mid);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = small_config();
        let a = synth_generate(&config, 42).unwrap();
        let b = synth_generate(&config, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&config, 43).unwrap();
        assert_ne!(a.snapshots[0].points, c.snapshots[0].points);
    }

    #[test]
    fn unit_root_dynamics_are_rejected() {
        let mut config = small_config();
        config.level.ar = 1.0;
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));
        config.level.ar = -1.02;
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation_rejects_unsafe_bounds() {
        let mut config = small_config();
        config.skew.mid = -0.9;
        config.skew.amp = 0.3;
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));

        let mut config = small_config();
        config.level.mid = 0.02;
        config.level.amp = 0.03;
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));

        let mut config = small_config();
        config.deltas = alloc::vec![0.5, 0.99];
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));

        let mut config = small_config();
        config.days = 0;
        assert!(matches!(synth_generate(&config, 1), Err(Error::Config(_))));
    }

    /// Every generated vol must respect bounds derived from the configured
    /// stationary parameter ranges alone: with B(x) the smile factor,
    /// sigma^2 = theta/tau * B(phi m), and 1 - rho^2 <= B <= |phi m| + 1.5.
    #[test]
    fn vol_levels_stay_within_configured_stationary_bounds() {
        let config = SynthConfig {
            days: 40,
            ..SynthConfig::default()
        };
        let panel = synth_generate(&config, 7).unwrap();
        let (v_lo, v_hi) = (config.level.lower(), config.level.upper());
        let (k_lo, k_hi) = (config.term.lower(), config.term.upper());
        let rho_max = config.skew.mid.abs() + config.skew.amp;
        let eta_hi = config.curvature.upper();
        for snap in &panel.snapshots {
            assert_eq!(snap.points.len(), 374);
            for p in &snap.points {
                let pow_lo = p.tau.powf(if p.tau < 1.0 { k_hi } else { k_lo });
                let pow_hi = p.tau.powf(if p.tau < 1.0 { k_lo } else { k_hi });
                let theta_lo = v_lo * pow_lo;
                let theta_hi = v_hi * pow_hi;
                let var_lo = theta_lo / p.tau * (1.0 - rho_max * rho_max);
                let x_hi = eta_hi * p.m.abs() / theta_lo.sqrt();
                let var_hi = theta_hi / p.tau * (x_hi + 1.5);
                let var = p.vol * p.vol;
                assert!(
                    var >= var_lo - 1e-12 && var <= var_hi + 1e-12,
                    "day {} quote (m={}, tau={}): sigma^2={var} outside [{var_lo}, {var_hi}]",
                    snap.date,
                    p.m,
                    p.tau
                );
                assert!(p.m.abs() < 2.0);
            }
        }
    }

    /// Finite-difference re-check of the scan on retained days: the
    /// generator accepts days using analytic derivatives, so an independent
    /// central-difference evaluation of the same diagnostics must agree.
    #[test]
    fn retained_days_pass_finite_difference_scan() {
        let config = SynthConfig {
            days: 8,
            ..small_config()
        };
        let panel = synth_generate(&config, 3).unwrap();
        let h = 1e-5;
        for p in &panel.params {
            for i in 0..13 {
                let m = -1.2 + 2.6 * i as f64 / 12.0;
                for j in 0..9 {
                    let tau = 0.05 * (40.0f64).powf(j as f64 / 8.0);
                    let d = LocalDerivs {
                        vol: p.vol(m, tau),
                        d_m: (p.vol(m + h, tau) - p.vol(m - h, tau)) / (2.0 * h),
                        d_mm: (p.vol(m + h, tau) - 2.0 * p.vol(m, tau) + p.vol(m - h, tau))
                            / (h * h),
                        d_tau: (p.vol(m, tau + h) - p.vol(m, tau - h)) / (2.0 * h),
                    };
                    assert!(ell_cal(&d, tau) >= -1e-6, "calendar at ({m}, {tau})");
                    assert!(
                        ell_but(&d, m, tau).unwrap() >= -1e-6,
                        "butterfly at ({m}, {tau})"
                    );

                    // The analytic derivatives agree with finite differences.
                    let a = p.derivs(m, tau);
                    assert!((a.d_m - d.d_m).abs() <= 1e-6 * (1.0 + d.d_m.abs()));
                    assert!((a.d_mm - d.d_mm).abs() <= 1e-4 * (1.0 + d.d_mm.abs()));
                    assert!((a.d_tau - d.d_tau).abs() <= 1e-6 * (1.0 + d.d_tau.abs()));
                }
            }
        }
    }

    #[test]
    fn wild_curvature_triggers_redraws_but_retained_days_are_clean() {
        let mut config = small_config();
        config.days = 30;
        // Butterfly arbitrage appears around eta of 4 at long maturities;
        // these dynamics frequently wander past it.
        config.curvature = ParamDynamics {
            mid: 2.9,
            amp: 1.4,
            ar: 0.3,
            noise: 1.2,
        };
        let panel = synth_generate(&config, 5).unwrap();
        assert!(
            panel.redraws >= 1,
            "expected at least one re-draw, got {}",
            panel.redraws
        );
        let tau_lo = config.tau_days[0] / 365.0;
        let tau_hi = config.tau_days[config.tau_days.len() - 1] / 365.0;
        for p in &panel.params {
            assert!(passes_scan(p, tau_lo, tau_hi));
        }
    }

    #[test]
    fn hopeless_curvature_exhausts_redraws() {
        let mut config = small_config();
        config.curvature = ParamDynamics::constant(4.5);
        config.max_redraws = 10;
        assert!(matches!(synth_generate(&config, 5), Err(Error::Data(_))));
    }

    /// Quotes really are what they claim: feeding each point's (m, vol)
    /// back through the forward-delta formula recovers its delta label.
    #[test]
    fn quote_deltas_round_trip() {
        let config = small_config();
        let panel = synth_generate(&config, 9).unwrap();
        let snap = &panel.snapshots[2];
        let meta = snap.meta.as_ref().unwrap();
        for (p, meta) in snap.points.iter().zip(meta) {
            let mp = MarketPoint {
                forward: 1.0,
                strike: p.m.exp(),
                tau: p.tau,
                rate: 0.0,
            };
            let delta = bs_call_delta(&mp, p.vol, meta.div_yield).unwrap();
            assert!(
                (delta - meta.coord1).abs() < 1e-10,
                "delta {} reproduced as {delta}",
                meta.coord1
            );
            assert_eq!(meta.tau_days / 365.0, p.tau);
        }
    }

    #[test]
    fn generated_panels_survive_the_text_codec_bit_for_bit() {
        let config = SynthConfig {
            days: 3,
            ..small_config()
        };
        let panel = synth_generate(&config, 21).unwrap();
        let text = format_quotes(&panel.snapshots).unwrap();
        let reloaded = parse_quotes(&text).unwrap();
        assert_eq!(panel.snapshots, reloaded);
    }

    /// Resampling is exactly the fit-then-evaluate composition, and is
    /// insensitive to the order of the input points.
    #[test]
    fn resampling_matches_manual_composition_and_point_order() {
        let config = small_config();
        let panel = synth_generate(&config, 13).unwrap();
        let snap = &panel.snapshots[0];
        let grid = default_grid();
        let gridded = resample_to_grid(snap, &grid).unwrap();

        let fit = fit_dfw(&snap.points).unwrap();
        for (i, &m) in grid.m.iter().enumerate() {
            for (j, &tau) in grid.tau.iter().enumerate() {
                assert_eq!(gridded.vols[grid.flat(i, j)], eval_dfw(&fit.coeffs, m, tau));
            }
        }

        let mut shuffled = snap.clone();
        shuffled.points.reverse();
        shuffled.meta = None;
        let re = resample_to_grid(&shuffled, &grid).unwrap();
        for (a, b) in re.vols.iter().zip(&gridded.vols) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
