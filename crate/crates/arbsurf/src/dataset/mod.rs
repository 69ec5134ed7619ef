//! Panel data handling: daily quote snapshots, the fixed evaluation grid,
//! resampling onto it, and chronological train/test splitting.
//!
//! A *snapshot* is one day's observed quotes in (log-moneyness, maturity,
//! vol) coordinates, optionally carrying the source quoting coordinates so
//! files round-trip. A *gridded surface* is the day's quadratic-polynomial
//! fit sampled on the fixed grid: 14 moneyness levels (log of 0.6 to 2
//! around the forward) by 11 maturities (10 to 730 days), 154 nodes stored
//! moneyness-major. Panels pair the two per day and are split by date, never
//! shuffled, so the test period is strictly out of sample.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

pub use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::interp::{eval_dfw, fit_dfw};
use crate::surface::SurfacePoint;

mod cache;
mod quotes;
pub mod synth;

pub use cache::{decode_gridded, encode_gridded};
pub use quotes::{format_quotes, parse_quotes};

/// The fixed evaluation grid, moneyness levels by maturities (years), both
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedGrid {
    pub m: Vec<f64>,
    pub tau: Vec<f64>,
}

impl FixedGrid {
    /// Number of grid nodes.
    pub fn size(&self) -> usize {
        self.m.len() * self.tau.len()
    }

    /// Coordinates of node `(i_m, i_tau)`.
    pub fn node(&self, i_m: usize, i_tau: usize) -> (f64, f64) {
        (self.m[i_m], self.tau[i_tau])
    }

    /// Flat index of node `(i_m, i_tau)` (moneyness-major).
    pub fn flat(&self, i_m: usize, i_tau: usize) -> usize {
        i_m * self.tau.len() + i_tau
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.is_empty() || self.tau.is_empty() {
            return Err(Error::config("grid must have at least one node per axis"));
        }
        let increasing =
            |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
        if !increasing(&self.m) || !increasing(&self.tau) {
            return Err(Error::config(
                "grid levels must be finite and strictly increasing",
            ));
        }
        if self.tau[0] <= 0.0 {
            return Err(Error::config("grid maturities must be positive"));
        }
        Ok(())
    }
}

/// Default grid: log of {0.6, 0.8, 0.9, 0.95, 0.975, 1, 1.025, 1.05, 1.1,
/// 1.2, 1.3, 1.5, 1.75, 2} by {10, 30, 60, 91, 122, 152, 182, 273, 365,
/// 547, 730}/365 years.
pub fn default_grid() -> FixedGrid {
    const LEVELS: [f64; 14] = [
        0.6, 0.8, 0.9, 0.95, 0.975, 1.0, 1.025, 1.05, 1.1, 1.2, 1.3, 1.5, 1.75, 2.0,
    ];
    const TAU_DAYS: [f64; 11] = [
        10.0, 30.0, 60.0, 91.0, 122.0, 152.0, 182.0, 273.0, 365.0, 547.0, 730.0,
    ];
    FixedGrid {
        m: LEVELS.iter().map(|x| x.ln()).collect(),
        tau: TAU_DAYS.iter().map(|d| d / 365.0).collect(),
    }
}

/// How a quote's first coordinate is expressed in source files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    /// Forward call delta; converted to log-moneyness on load.
    Delta,
    /// Log forward moneyness, used as is.
    Moneyness,
}

/// Source quoting fields preserved alongside each converted point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteMeta {
    pub coord_kind: CoordKind,
    pub coord1: f64,
    pub tau_days: f64,
    pub rate: f64,
    pub div_yield: f64,
}

/// One day's observed quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSnapshot {
    pub date: NaiveDate,
    pub points: Vec<SurfacePoint>,
    /// Source coordinates, parallel to `points`, when known.
    pub meta: Option<Vec<QuoteMeta>>,
}

impl SurfaceSnapshot {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::data(format!("snapshot {} has no points", self.date)));
        }
        if let Some(meta) = &self.meta {
            if meta.len() != self.points.len() {
                return Err(Error::data(format!(
                    "snapshot {}: {} meta rows for {} points",
                    self.date,
                    meta.len(),
                    self.points.len()
                )));
            }
        }
        for p in &self.points {
            if !(p.vol > 0.0) || !p.vol.is_finite() || !(p.tau > 0.0) || !p.m.is_finite() {
                return Err(Error::data(format!(
                    "snapshot {}: invalid point (m={}, tau={}, vol={})",
                    self.date, p.m, p.tau, p.vol
                )));
            }
        }
        let mut pairs: Vec<(f64, f64)> = self.points.iter().map(|p| (p.m, p.tau)).collect();
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data(format!(
                "snapshot {} has duplicate (m, tau) pairs",
                self.date
            )));
        }
        Ok(())
    }
}

/// A day's quadratic fit sampled on the fixed grid, moneyness-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedSurface {
    pub date: NaiveDate,
    pub vols: Vec<f64>,
}

/// A panel day: raw quotes plus their gridded representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDay {
    pub snapshot: SurfaceSnapshot,
    pub gridded: GriddedSurface,
}

/// A chronological panel over a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub grid: FixedGrid,
    pub days: Vec<PanelDay>,
}

/// A chronological split of a panel; both sides share the panel's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSplit {
    pub grid: FixedGrid,
    pub train: Vec<PanelDay>,
    pub test: Vec<PanelDay>,
}

/// Fits the day's quotes with the quadratic polynomial and samples it on
/// `grid`. Values inherit the polynomial's 0.01 floor, so they are strictly
/// positive.
pub fn resample_to_grid(snapshot: &SurfaceSnapshot, grid: &FixedGrid) -> Result<GriddedSurface> {
    grid.validate()?;
    snapshot.validate()?;
    let fit = fit_dfw(&snapshot.points)
        .map_err(|e| Error::fit(format!("resampling {}: {e}", snapshot.date)))?;
    let mut vols = Vec::with_capacity(grid.size());
    for &m in &grid.m {
        for &tau in &grid.tau {
            vols.push(eval_dfw(&fit.coeffs, m, tau));
        }
    }
    Ok(GriddedSurface {
        date: snapshot.date,
        vols,
    })
}

/// Builds a panel by resampling each snapshot onto `grid`. Dates must be
/// strictly increasing.
pub fn build_panel(snapshots: Vec<SurfaceSnapshot>, grid: FixedGrid) -> Result<Panel> {
    if snapshots.is_empty() {
        return Err(Error::data("panel requires at least one snapshot"));
    }
    if snapshots.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::data("panel dates must be strictly increasing"));
    }
    let mut days = Vec::with_capacity(snapshots.len());
    for snapshot in snapshots {
        let gridded = resample_to_grid(&snapshot, &grid)?;
        days.push(PanelDay { snapshot, gridded });
    }
    Ok(Panel { grid, days })
}

/// Splits a panel at `split_date`: training days are those on or before it,
/// test days strictly after.
///
/// # Errors
/// `Error::Config` if either side would be empty; `Error::Data` if the panel
/// is not strictly increasing in date.
pub fn split_panel(panel: Panel, split_date: NaiveDate) -> Result<PanelSplit> {
    if panel.days.windows(2).any(|w| w[0].snapshot.date >= w[1].snapshot.date) {
        return Err(Error::data("panel dates must be strictly increasing"));
    }
    let n_train = panel
        .days
        .iter()
        .take_while(|d| d.snapshot.date <= split_date)
        .count();
    if n_train == 0 || n_train == panel.days.len() {
        return Err(Error::config(format!(
            "split at {split_date} leaves an empty side ({} of {} days in training)",
            n_train,
            panel.days.len()
        )));
    }
    let mut days = panel.days;
    let test = days.split_off(n_train);
    Ok(PanelSplit {
        grid: panel.grid,
        train: days,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    pub(crate) fn quadratic_snapshot(d: &str, a: [f64; 6]) -> SurfaceSnapshot {
        let mut points = Vec::new();
        for i in 0..8 {
            for j in 0..6 {
                let m = -0.45 + 0.13 * i as f64;
                let tau = 0.08 + 0.38 * j as f64;
                let vol =
                    a[0] + a[1] * m + a[2] * tau + a[3] * m * m + a[4] * tau * tau + a[5] * m * tau;
                points.push(SurfacePoint { m, tau, vol });
            }
        }
        SurfaceSnapshot {
            date: date(d),
            points,
            meta: None,
        }
    }

    #[test]
    fn default_grid_matches_published_levels() {
        let g = default_grid();
        assert_eq!(g.m.len(), 14);
        assert_eq!(g.tau.len(), 11);
        assert_eq!(g.size(), 154);
        assert!((g.m[0] - 0.6f64.ln()).abs() < 1e-15);
        assert_eq!(g.m[5], 0.0);
        assert!((g.m[13] - 2.0f64.ln()).abs() < 1e-15);
        assert!((g.tau[0] - 10.0 / 365.0).abs() < 1e-15);
        assert!((g.tau[10] - 2.0) < 1e-15);
        g.validate().unwrap();
        assert_eq!(g.flat(1, 3), 14);
        assert_eq!(g.node(5, 8), (0.0, 1.0));
    }

    #[test]
    fn grid_validation_rejects_degenerate_axes() {
        let bad = FixedGrid {
            m: alloc::vec![0.0, 0.0],
            tau: alloc::vec![0.5],
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = FixedGrid {
            m: alloc::vec![0.0],
            tau: alloc::vec![-0.5, 1.0],
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = FixedGrid {
            m: Vec::new(),
            tau: alloc::vec![0.5],
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn resample_reproduces_quadratic_surfaces_on_the_grid() {
        let a = [0.22, -0.04, 0.02, 0.35, -0.008, 0.015];
        let snap = quadratic_snapshot("2020-01-02", a);
        let grid = default_grid();
        let g = resample_to_grid(&snap, &grid).unwrap();
        assert_eq!(g.vols.len(), 154);
        for (i, &m) in grid.m.iter().enumerate() {
            for (j, &tau) in grid.tau.iter().enumerate() {
                let want = (a[0] + a[1] * m + a[2] * tau + a[3] * m * m + a[4] * tau * tau
                    + a[5] * m * tau)
                    .max(0.01);
                let got = g.vols[grid.flat(i, j)];
                assert!((got - want).abs() < 1e-9, "node ({i},{j}): {got} vs {want}");
                assert!(got >= 0.01);
            }
        }
    }

    #[test]
    fn snapshot_validation_catches_duplicates_and_bad_points() {
        let mut snap = quadratic_snapshot("2020-01-02", [0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        snap.validate().unwrap();
        let p = snap.points[0];
        snap.points.push(p);
        assert!(matches!(snap.validate(), Err(Error::Data(_))));
        snap.points.pop();
        snap.points[0].vol = -0.1;
        assert!(matches!(snap.validate(), Err(Error::Data(_))));
        snap.points[0].vol = 0.2;
        snap.meta = Some(Vec::new());
        assert!(matches!(snap.validate(), Err(Error::Data(_))));
    }

    #[test]
    fn split_respects_chronology() {
        let a = [0.2, -0.03, 0.02, 0.3, -0.01, 0.01];
        let snaps: Vec<SurfaceSnapshot> = (1..=10)
            .map(|d| quadratic_snapshot(&alloc::format!("2020-01-{d:02}"), a))
            .collect();
        let panel = build_panel(snaps, default_grid()).unwrap();
        let split = split_panel(panel.clone(), date("2020-01-07")).unwrap();
        assert_eq!(split.train.len(), 7);
        assert_eq!(split.test.len(), 3);
        assert!(split.train.iter().all(|d| d.snapshot.date <= date("2020-01-07")));
        assert!(split.test.iter().all(|d| d.snapshot.date > date("2020-01-07")));

        // Split after the last day leaves an empty test side.
        assert!(matches!(
            split_panel(panel.clone(), date("2020-01-10")),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            split_panel(panel, date("2019-12-31")),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn panel_requires_increasing_dates() {
        let a = [0.2, -0.03, 0.02, 0.3, -0.01, 0.01];
        let s1 = quadratic_snapshot("2020-01-02", a);
        let s2 = quadratic_snapshot("2020-01-01", a);
        assert!(matches!(
            build_panel(alloc::vec![s1.clone(), s2], default_grid()),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            build_panel(alloc::vec![s1.clone(), s1], default_grid()),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            build_panel(Vec::new(), default_grid()),
            Err(Error::Data(_))
        ));
    }
}
