//! Output time grids.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid spec '{0}': expected t0,t1,count[,log] or @file")]
    BadSpec(String),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("cannot read grid file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// `count` equally spaced times from `t0` to `t1` inclusive.
pub fn linear(t0: f64, t1: f64, count: usize) -> Result<Vec<f64>, GridError> {
    check_range(t0, t1, count)?;
    if count == 1 {
        return Ok(vec![t0]);
    }
    let step = (t1 - t0) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|i| t0 + step * i as f64).collect();
    grid[count - 1] = t1;
    Ok(grid)
}

/// `count` log-spaced times from `t0 > 0` to `t1` inclusive, preceded by `t = 0`.
pub fn logarithmic(t0: f64, t1: f64, count: usize) -> Result<Vec<f64>, GridError> {
    check_range(t0, t1, count)?;
    if t0 <= 0.0 {
        return Err(GridError::Invalid(format!(
            "log-spaced grid needs t0 > 0, got {t0}"
        )));
    }
    let mut grid = vec![0.0];
    if count == 1 {
        grid.push(t0);
        return Ok(grid);
    }
    let (l0, l1) = (t0.ln(), t1.ln());
    let step = (l1 - l0) / (count - 1) as f64;
    grid.extend((0..count).map(|i| (l0 + step * i as f64).exp()));
    grid[1] = t0;
    grid[count] = t1;
    Ok(grid)
}

fn check_range(t0: f64, t1: f64, count: usize) -> Result<(), GridError> {
    if count == 0 {
        return Err(GridError::Invalid("grid count must be >= 1".into()));
    }
    if !(t0.is_finite() && t1.is_finite() && t0 >= 0.0) {
        return Err(GridError::Invalid(format!(
            "grid bounds must be finite with t0 >= 0, got {t0}, {t1}"
        )));
    }
    if count > 1 && t1 <= t0 {
        return Err(GridError::Invalid(format!("grid needs t1 > t0, got {t0}, {t1}")));
    }
    Ok(())
}

/// Parses `t0,t1,count`, `t0,t1,count,log` or `@path`.
///
/// A grid file lists times separated by commas, whitespace or newlines; lines
/// starting with `#` are ignored.
pub fn parse(spec: &str) -> Result<Vec<f64>, GridError> {
    let spec = spec.trim();
    if let Some(path) = spec.strip_prefix('@') {
        return read_file(Path::new(path.trim()));
    }
    let bad = || GridError::BadSpec(spec.to_string());
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let (t0, t1, count) = match parts.as_slice() {
        [t0, t1, count] | [t0, t1, count, _] => (
            t0.parse::<f64>().map_err(|_| bad())?,
            t1.parse::<f64>().map_err(|_| bad())?,
            count.parse::<usize>().map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    match parts.get(3) {
        None | Some(&"lin") => linear(t0, t1, count),
        Some(&"log") => logarithmic(t0, t1, count),
        Some(_) => Err(bad()),
    }
}

fn read_file(path: &Path) -> Result<Vec<f64>, GridError> {
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut grid = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            grid.push(tok.parse::<f64>().map_err(|_| {
                GridError::Invalid(format!("bad time '{tok}' in {}", path.display()))
            })?);
        }
    }
    if grid.is_empty() {
        return Err(GridError::Invalid(format!("no times in {}", path.display())));
    }
    Ok(grid)
}
