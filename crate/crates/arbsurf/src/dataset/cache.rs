//! Binary cache for gridded panels.
//!
//! Layout (little-endian throughout): magic `AFPC`, format version (u32),
//! grid sizes (u32 each), grid levels (f64), day count (u32), then per day
//! the date as days from the common era (i32) and the node vols (f64,
//! moneyness-major). Decoding validates magic, version, counts, and
//! finiteness, so truncated or foreign files fail loudly instead of
//! producing garbage panels.

use alloc::format;
use alloc::vec::Vec;

use chrono::{Datelike, NaiveDate};

use crate::error::{Error, Result};

use super::{FixedGrid, GriddedSurface};

const MAGIC: &[u8; 4] = b"AFPC";
const VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(format!(
                "truncated cache: needed {n} bytes for {what} at offset {}",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        let b = self.take(4, what)?;
        Ok(i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }
}

/// Serializes a gridded panel.
pub fn encode_gridded(grid: &FixedGrid, days: &[GriddedSurface]) -> Result<Vec<u8>> {
    grid.validate()?;
    let node_count = grid.size();
    let mut out = Vec::with_capacity(4 + 4 + 8 + 8 * (grid.m.len() + grid.tau.len()) + days.len() * (4 + 8 * node_count));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.m.len() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.tau.len() as u32).to_le_bytes());
    for &m in &grid.m {
        out.extend_from_slice(&m.to_le_bytes());
    }
    for &tau in &grid.tau {
        out.extend_from_slice(&tau.to_le_bytes());
    }
    out.extend_from_slice(&(days.len() as u32).to_le_bytes());
    for day in days {
        if day.vols.len() != node_count {
            return Err(Error::shape(format!(
                "day {}: {} vols for a {}-node grid",
                day.date,
                day.vols.len(),
                node_count
            )));
        }
        out.extend_from_slice(&day.date.num_days_from_ce().to_le_bytes());
        for &v in &day.vols {
            if !v.is_finite() {
                return Err(Error::data(format!("day {}: non-finite vol", day.date)));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Deserializes a gridded panel written by [`encode_gridded`].
pub fn decode_gridded(bytes: &[u8]) -> Result<(FixedGrid, Vec<GriddedSurface>)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(format!("bad magic {magic:?}: not a panel cache")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported cache version {version} (expected {VERSION})"
        )));
    }
    let n_m = r.u32("moneyness count")? as usize;
    let n_tau = r.u32("maturity count")? as usize;
    let mut m = Vec::with_capacity(n_m);
    for i in 0..n_m {
        m.push(r.f64(&format!("moneyness level {i}"))?);
    }
    let mut tau = Vec::with_capacity(n_tau);
    for i in 0..n_tau {
        tau.push(r.f64(&format!("maturity level {i}"))?);
    }
    let grid = FixedGrid { m, tau };
    grid.validate()
        .map_err(|e| Error::format(format!("cache grid invalid: {e}")))?;

    let n_days = r.u32("day count")? as usize;
    let node_count = grid.size();
    let mut days = Vec::with_capacity(n_days);
    for d in 0..n_days {
        let ce = r.i32(&format!("day {d} date"))?;
        let date = NaiveDate::from_num_days_from_ce_opt(ce)
            .ok_or_else(|| Error::format(format!("day {d}: invalid date value {ce}")))?;
        let mut vols = Vec::with_capacity(node_count);
        for k in 0..node_count {
            let v = r.f64(&format!("day {d} vol {k}"))?;
            if !v.is_finite() {
                return Err(Error::format(format!("day {d}: non-finite vol")));
            }
            vols.push(v);
        }
        days.push(GriddedSurface { date, vols });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after panel data",
            bytes.len() - r.pos
        )));
    }
    Ok((grid, days))
}
