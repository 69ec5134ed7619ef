//! Text codec for daily quote files.
//!
//! The format is comma-separated with the exact header
//! `date,coord_kind,coord1,tau_days,iv,rate,div_yield`. Each row is one
//! quote; rows are grouped by day, contiguous, with dates strictly
//! increasing across groups. `coord_kind` is `delta` (forward call delta,
//! converted to log-moneyness on load using the row's own vol and dividend
//! yield) or `moneyness` (log forward moneyness, used as is). Floats are
//! written shortest-round-trip, so write-then-parse reproduces every value
//! bit for bit.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::surface::{delta_to_moneyness, SurfacePoint};

use super::{CoordKind, QuoteMeta, SurfaceSnapshot};

pub const QUOTES_HEADER: &str = "date,coord_kind,coord1,tau_days,iv,rate,div_yield";

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(field: &str, name: &str, line: usize) -> Result<f64> {
    let value: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{name}: not a number: {field:?}")))?;
    if !value.is_finite() {
        return Err(parse_err(line, format!("{name}: not finite: {field:?}")));
    }
    Ok(value)
}

/// Parses a quote file into per-day snapshots (with source coordinates
/// preserved in `meta`).
///
/// # Errors
/// `Error::Parse` with the 1-based line number for malformed rows;
/// `Error::Data` for semantic problems (duplicate (m, tau) pairs within a
/// day, dates out of order, no rows at all).
pub fn parse_quotes(text: &str) -> Result<Vec<SurfaceSnapshot>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == QUOTES_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(
                1,
                format!("expected header {QUOTES_HEADER:?}, found {header:?}"),
            ))
        }
        None => return Err(parse_err(1, "empty file")),
    }

    let mut snapshots: Vec<SurfaceSnapshot> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                line,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let date: NaiveDate = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("date: expected YYYY-MM-DD: {:?}", fields[0])))?;
        let coord_kind = match fields[1].trim() {
            "delta" => CoordKind::Delta,
            "moneyness" => CoordKind::Moneyness,
            other => {
                return Err(parse_err(
                    line,
                    format!("coord_kind: expected \"delta\" or \"moneyness\": {other:?}"),
                ))
            }
        };
        let coord1 = parse_f64(fields[2], "coord1", line)?;
        let tau_days = parse_f64(fields[3], "tau_days", line)?;
        let iv = parse_f64(fields[4], "iv", line)?;
        let rate = parse_f64(fields[5], "rate", line)?;
        let div_yield = parse_f64(fields[6], "div_yield", line)?;
        if !(tau_days > 0.0) {
            return Err(parse_err(line, format!("tau_days must be positive: {tau_days}")));
        }
        if !(iv > 0.0) {
            return Err(parse_err(line, format!("iv must be positive: {iv}")));
        }

        let tau = tau_days / 365.0;
        let m = match coord_kind {
            CoordKind::Moneyness => coord1,
            CoordKind::Delta => delta_to_moneyness(coord1, iv, tau, div_yield)
                .map_err(|e| parse_err(line, format!("delta conversion: {e}")))?,
        };
        let point = SurfacePoint { m, tau, vol: iv };
        let meta = QuoteMeta {
            coord_kind,
            coord1,
            tau_days,
            rate,
            div_yield,
        };

        match snapshots.last_mut() {
            Some(snap) if snap.date == date => {
                snap.points.push(point);
                snap.meta.as_mut().expect("parser always fills meta").push(meta);
            }
            Some(snap) if snap.date > date => {
                return Err(Error::data(format!(
                    "line {line}: date {date} after {}: rows must be grouped by day in increasing order",
                    snap.date
                )));
            }
            _ => snapshots.push(SurfaceSnapshot {
                date,
                points: alloc::vec![point],
                meta: Some(alloc::vec![meta]),
            }),
        }
    }

    if snapshots.is_empty() {
        return Err(Error::data("quote file has no data rows"));
    }
    for snap in &snapshots {
        snap.validate()?;
    }
    Ok(snapshots)
}

/// Formats snapshots back into the quote file format. Snapshots without
/// `meta` are written in moneyness coordinates with zero rate and dividend
/// yield; snapshots with `meta` reproduce their source rows exactly.
pub fn format_quotes(snapshots: &[SurfaceSnapshot]) -> Result<String> {
    if snapshots.is_empty() {
        return Err(Error::data("nothing to write: no snapshots"));
    }
    if snapshots.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::data("snapshot dates must be strictly increasing"));
    }
    let mut out = String::new();
    out.push_str(QUOTES_HEADER);
    out.push('\n');
    for snap in snapshots {
        snap.validate()?;
        for (i, p) in snap.points.iter().enumerate() {
            let meta = match &snap.meta {
                Some(meta) => meta[i],
                None => QuoteMeta {
                    coord_kind: CoordKind::Moneyness,
                    coord1: p.m,
                    tau_days: p.tau * 365.0,
                    rate: 0.0,
                    div_yield: 0.0,
                },
            };
            let kind = match meta.coord_kind {
                CoordKind::Delta => "delta",
                CoordKind::Moneyness => "moneyness",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                snap.date,
                kind,
                meta.coord1,
                meta.tau_days,
                p.vol,
                meta.rate,
                meta.div_yield
            ));
        }
    }
    Ok(out)
}
