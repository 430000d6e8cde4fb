//! CSV serialization of grid functions.
//!
//! Header `x,value` (1-D) or `x,y,value` (2-D), one row per interior node in
//! storage order, every number written with 17 significant digits so that a
//! write/read cycle reproduces `f64` data bit for bit.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::scalar::Scalar;

/// Formats a value with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<T: Scalar>(u: &GridFunction<T>, mut out: impl Write) -> std::io::Result<()> {
    let grid = u.grid();
    let n = grid.dim();
    writeln!(out, "{}", if n == 1 { "x,value" } else { "x,y,value" })?;
    for (k, v) in u.values().iter().enumerate() {
        let c = grid.node_coords(k);
        for x in &c[..n] {
            write!(out, "{},", fmt17(x.to_f64_lossy()))?;
        }
        writeln!(out, "{}", fmt17(v.to_f64_lossy()))?;
    }
    Ok(())
}

pub fn to_csv_string<T: Scalar>(u: &GridFunction<T>) -> String {
    let mut buf = Vec::new();
    write_csv(u, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Reads a grid function, inferring the dimension from the header and the
/// resolution from the row count. Coordinates are checked against the grid.
pub fn read_csv<T: Scalar>(input: impl BufRead) -> Result<GridFunction<T>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Csv("empty input".into()))?
        .map_err(|e| Error::Csv(e.to_string()))?;
    let n = match header.trim() {
        "x,value" => 1,
        "x,y,value" => 2,
        other => return Err(Error::Csv(format!("unrecognized header {other:?}"))),
    };
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Csv(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", row + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        if fields.len() != n + 1 {
            return Err(Error::Csv(format!(
                "row {}: expected {} columns, got {}",
                row + 2,
                n + 1,
                fields.len()
            )));
        }
        coords.push([fields[0], if n == 2 { fields[1] } else { 0.0 }]);
        values.push(T::of(fields[n]));
    }
    let rows = values.len();
    let m = match n {
        1 => rows,
        _ => (rows as f64).sqrt().round() as usize,
    };
    if m == 0 || m.pow(n as u32) != rows {
        return Err(Error::Csv(format!("{rows} rows do not form a {n}-D grid")));
    }
    let grid = Grid::<T>::new(n, m)?;
    for (k, c) in coords.iter().enumerate() {
        let expected = grid.node_coords(k);
        for d in 0..n {
            if (expected[d].to_f64_lossy() - c[d]).abs() > 1e-9 {
                return Err(Error::Csv(format!(
                    "row {}: coordinate {} does not match node {k} of the {m}-per-axis grid",
                    k + 2,
                    c[d]
                )));
            }
        }
    }
    GridFunction::from_values(grid, values)
}
