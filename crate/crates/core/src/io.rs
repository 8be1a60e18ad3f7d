//! Path files and report serialization.
//!
//! A path file holds either one value column or `(time, value)` columns
//! with uniform spacing. A header row is recognized when its fields are
//! not all numeric. Rows are `X(Δ), …, X(NΔ)`; `X(0) = 0` stays implicit.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SampledPath;

/// Relative tolerance on the spacing of a time column.
pub const SPACING_TOL: f64 = 1e-9;

/// Reads a path. `delta` is required for a single value column and is
/// ignored when the file carries times.
pub fn read_path(path: &Path, delta: Option<f64>) -> Result<SampledPath> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_path(&text, delta).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_path(text: &str, delta: Option<f64>) -> Result<SampledPath> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("malformed CSV: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && i == 0 => continue,
            Err(_) => {
                return Err(Error::Input(format!(
                    "line {}: non-numeric field in `{}`",
                    i + 1,
                    rec.iter().collect::<Vec<_>>().join(",")
                )))
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Input(format!(
                    "line {}: expected {w} columns, found {}",
                    i + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        rows.push(values);
    }
    let width = width.ok_or_else(|| Error::Input("no data rows".into()))?;
    if rows.len() < 2 {
        return Err(Error::Input(format!(
            "need at least 2 samples, found {}",
            rows.len()
        )));
    }
    match width {
        1 => {
            let delta = delta.ok_or_else(|| {
                Error::Input("single-column input needs the sampling step (delta)".into())
            })?;
            let values = rows.into_iter().map(|r| r[0]).collect();
            SampledPath::new(delta, values).map_err(|e| Error::Input(e.to_string()))
        }
        2 => {
            let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            if !(step > 0.0) {
                return Err(Error::Input("time column must increase".into()));
            }
            for (i, w) in times.windows(2).enumerate() {
                if ((w[1] - w[0]) - step).abs() > SPACING_TOL * step {
                    return Err(Error::Input(format!(
                        "time column is not uniformly spaced at row {} (step {} vs {step})",
                        i + 2,
                        w[1] - w[0]
                    )));
                }
            }
            let values = rows.into_iter().map(|r| r[1]).collect();
            SampledPath::new(step, values).map_err(|e| Error::Input(e.to_string()))
        }
        w => Err(Error::Input(format!(
            "expected 1 or 2 columns, found {w}"
        ))),
    }
}

/// `time,value` rows with `time = kΔ`, `k = 1..=N`.
pub fn path_csv(path: &SampledPath) -> String {
    let mut s = String::with_capacity(path.len() * 32);
    s.push_str("time,value\n");
    for (k, v) in path.values().iter().enumerate() {
        s.push_str(&format!("{},{}\n", (k + 1) as f64 * path.delta(), v));
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numeric {
            what: format!("cannot serialize report: {e}"),
            achieved: f64::NAN,
        })?;
    text.push('\n');
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_column_with_header() {
        let p = parse_path("x\n1\n2\n3\n", Some(0.5)).unwrap();
        assert_eq!(p.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.delta(), 0.5);
        assert!(parse_path("1\n2\n", None).is_err());
    }

    #[test]
    fn time_value_columns() {
        let p = parse_path("0.1,5\n0.2,6\n0.3,7\n", None).unwrap();
        assert!((p.delta() - 0.1).abs() < 1e-15);
        assert_eq!(p.values(), &[5.0, 6.0, 7.0]);
        assert!(parse_path("0.1,5\n0.2,6\n0.35,7\n", None).is_err());
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_path("", Some(1.0)).is_err());
        assert!(parse_path("1\n2,3\n", Some(1.0)).is_err());
        assert!(parse_path("1\nabc\n", Some(1.0)).is_err());
        assert!(parse_path("1,2,3\n4,5,6\n", None).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let p = SampledPath::new(0.03, vec![0.1, -2.5, 1e-17, 3.0]).unwrap();
        let q = parse_path(&path_csv(&p), None).unwrap();
        assert_eq!(p.values(), q.values());
        assert!((p.delta() - q.delta()).abs() < 1e-15);
    }
}
