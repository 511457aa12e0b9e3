use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use cknn::{Error, PointSet, Result};
use rand::Rng;

/// `n = m^dim` points at the cell centers of a regular grid in `[0,1]^dim`,
/// each coordinate moved by `U(−δ, δ)`.
pub fn grid_perturbed<R: Rng + ?Sized>(n: usize, dim: usize, delta: f64, rng: &mut R) -> Result<PointSet> {
    let m = (n as f64).powf(1.0 / dim as f64).round() as usize;
    if m.checked_pow(dim as u32) != Some(n) {
        return Err(Error::InvalidParameter(format!("{n} is not a perfect {dim}-th power")));
    }
    let mut coords = Vec::with_capacity(n * dim);
    for i in 0..n {
        let mut rest = i;
        for _ in 0..dim {
            let c = (rest % m) as f64;
            rest /= m;
            let jitter = if delta > 0.0 { rng.random_range(-delta..delta) } else { 0.0 };
            coords.push((c + 0.5) / m as f64 + jitter);
        }
    }
    PointSet::new(coords, dim)
}

/// `n` independent uniform points in `[0,1]^dim`.
pub fn uniform_cube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Result<PointSet> {
    PointSet::new((0..n * dim).map(|_| rng.random::<f64>()).collect(), dim)
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub points: PointSet,
    /// Exact duplicate rows dropped after column selection.
    pub duplicates: usize,
}

/// Reads points from CSV text with a header row. `columns` picks feature
/// columns by zero-based index (all columns when `None`).
pub fn parse_points<R: BufRead>(reader: R, columns: Option<&[usize]>) -> Result<Ingested> {
    let mut lines = reader.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::Parse {
            line: 1,
            msg: "empty file".into(),
        });
    };
    let width = header?.split(',').count();
    if let Some(cols) = columns {
        if cols.is_empty() {
            return Err(Error::InvalidParameter("no columns selected".into()));
        }
        if let Some(&c) = cols.iter().find(|&&c| c >= width) {
            return Err(Error::InvalidParameter(format!("column {c} out of range for {width} header fields")));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {width} fields, found {}", fields.len()),
            });
        }
        let parse = |i: usize| -> Result<f64> {
            let f = fields[i].trim();
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line: lineno,
                    msg: format!("field {} is not a finite real: {f:?}", i + 1),
                }),
            }
        };
        let row = match columns {
            Some(cols) => cols.iter().map(|&c| parse(c)).collect::<Result<Vec<_>>>()?,
            None => (0..width).map(parse).collect::<Result<Vec<_>>>()?,
        };
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    let (points, duplicates) = PointSet::from_rows(&rows)?.dedup();
    Ok(Ingested { points, duplicates })
}

pub fn ingest_points(path: &Path, columns: Option<&[usize]>) -> Result<Ingested> {
    let file = File::open(path)?;
    let out = parse_points(BufReader::new(file), columns)?;
    log::info!("{}: {} duplicate(s) removed, {} points", path.display(), out.duplicates, out.points.len());
    Ok(out)
}
