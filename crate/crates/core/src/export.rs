//! On-disk formats for maps, detections and reports.
//!
//! Map CSV: one header line `N=..,M=..,range_bin_m=..,velocity_bin_mps=..`
//! followed by `N` rows of `M` comma-separated power values (Doppler
//! centered). PGM: binary 16-bit greyscale, one row per range bin, dB
//! relative to the map maximum mapped linearly from `floor_db` to 0.

use crate::error::{Error, Result};
use crate::specest::{RangeDopplerMap, DEFAULT_FLOOR_DB};
use ndarray::Array2;
use serde::Serialize;
use std::io::{BufRead, Write};

pub fn write_map_csv<W: Write>(map: &RangeDopplerMap, mut out: W) -> Result<()> {
    let (n, m) = map.dims();
    writeln!(
        out,
        "N={n},M={m},range_bin_m={},velocity_bin_mps={}",
        map.range_bin, map.velocity_bin
    )?;
    let mut line = String::with_capacity(m * 24);
    for row in map.power.rows() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_err(reason: impl Into<String>) -> Error {
    Error::Parse {
        format: "map csv",
        reason: reason.into(),
    }
}

fn header_field<'a>(fields: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|&(_, v)| v)
        .ok_or_else(|| parse_err(format!("header lacks `{key}`")))
}

/// Reads a map written by [`write_map_csv`]. The `normalized` flag is set
/// when the maximum is exactly 1.
pub fn read_map_csv<R: BufRead>(input: R) -> Result<RangeDopplerMap> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty input"))??;
    let fields: Vec<(&str, &str)> = header
        .trim()
        .split(',')
        .map(|kv| kv.split_once('=').ok_or_else(|| parse_err(format!("bad header field `{kv}`"))))
        .collect::<Result<_>>()?;
    let n: usize = header_field(&fields, "N")?.parse().map_err(|_| parse_err("bad N"))?;
    let m: usize = header_field(&fields, "M")?.parse().map_err(|_| parse_err("bad M"))?;
    let range_bin: f64 = header_field(&fields, "range_bin_m")?
        .parse()
        .map_err(|_| parse_err("bad range_bin_m"))?;
    let velocity_bin: f64 = header_field(&fields, "velocity_bin_mps")?
        .parse()
        .map_err(|_| parse_err("bad velocity_bin_mps"))?;

    let mut values = Vec::with_capacity(n * m);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("row {i}: bad value `{cell}`")))?;
            if !(v >= 0.0) {
                return Err(parse_err(format!("row {i}: negative or NaN power")));
            }
            values.push(v);
        }
        if values.len() - before != m {
            return Err(parse_err(format!("row {i}: expected {m} values")));
        }
    }
    let power = Array2::from_shape_vec((n, m), values).map_err(|_| parse_err(format!("expected {n} rows")))?;
    let normalized = power.iter().copied().fold(0.0, f64::max) == 1.0;
    Ok(RangeDopplerMap {
        power,
        range_bin,
        velocity_bin,
        normalized,
        floor_db: DEFAULT_FLOOR_DB,
    })
}

/// 16-bit binary PGM of the map in dB, clipped to `[floor_db, 0]`.
pub fn write_map_pgm<W: Write>(map: &RangeDopplerMap, mut out: W) -> Result<()> {
    let (n, m) = map.dims();
    let floor = map.floor_db;
    if !(floor < 0.0) {
        return Err(Error::param("floor_db", "must be negative"));
    }
    write!(out, "P5\n{m} {n}\n65535\n")?;
    let db = map.to_db();
    let mut bytes = Vec::with_capacity(2 * n * m);
    for &v in db.iter() {
        let level = ((v.clamp(floor, 0.0) - floor) / -floor * 65535.0).round() as u16;
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    out.write_all(&bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::Parse {
        format: "json",
        reason: e.to_string(),
    })?;
    writeln!(out)?;
    Ok(())
}
