//! CSV reading and writing for trajectories. Floats are written with 17
//! significant digits so that reading a file back is bit-exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, TimeGrid, Trajectory};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell_columns(grid: &Grid) -> &'static str {
    if grid.dim() == 2 {
        "cell_index,cell_index_y"
    } else {
        "cell_index"
    }
}

/// Writes named trajectories as `t_index,cell_index[,cell_index_y],<names...>`.
pub fn trajectories_to_csv(columns: &[(&str, &Trajectory)]) -> Result<String> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Config("no columns to write".into()))?
        .1;
    for (_, tr) in columns {
        first.check_same_shape(tr)?;
    }
    let grid = *first.grid();
    let mut out = String::new();
    out.push_str("t_index,");
    out.push_str(cell_columns(&grid));
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for n in 0..first.time().nodes() {
        for k in 0..grid.len() {
            let (i, j) = grid.coords(k);
            if grid.dim() == 2 {
                write!(out, "{n},{i},{j}").unwrap();
            } else {
                write!(out, "{n},{i}").unwrap();
            }
            for (_, tr) in columns {
                out.push(',');
                out.push_str(&fmt_f64(tr.snapshot(n).values()[k]));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Parsed CSV: header names and numeric rows.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(Error::Config(format!(
                "CSV row {} has {} fields, header has {}",
                lineno + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn parse_index(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Config(format!("invalid index '{s}' in CSV")))
}

fn parse_value(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Config(format!("invalid number '{s}' in CSV")))
}

/// Reads column `column` (or the last column when `None`) of a CSV with
/// `cell_index[,cell_index_y]` and optionally `t_index` columns. Without a
/// `t_index` column the single field is repeated at every node.
pub fn trajectory_from_csv(
    text: &str,
    column: Option<&str>,
    grid: Grid,
    time: TimeGrid,
) -> Result<Trajectory> {
    let table = parse_table(text)?;
    let pos: HashMap<&str, usize> = table
        .header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.as_str(), i))
        .collect();
    let ci = *pos
        .get("cell_index")
        .ok_or_else(|| Error::Config("CSV lacks a cell_index column".into()))?;
    let cj = pos.get("cell_index_y").copied();
    if (grid.dim() == 2) != cj.is_some() {
        return Err(Error::Config(format!(
            "CSV cell columns do not match a {}D grid",
            grid.dim()
        )));
    }
    let ti = pos.get("t_index").copied();
    let vi = match column {
        Some(c) => *pos
            .get(c)
            .ok_or_else(|| Error::Config(format!("CSV lacks a '{c}' column")))?,
        None => table.header.len() - 1,
    };
    let nodes = if ti.is_some() { time.nodes() } else { 1 };
    let mut data = vec![f64::NAN; nodes * grid.len()];
    let mut seen = vec![false; data.len()];
    for row in &table.rows {
        let n = match ti {
            Some(t) => parse_index(&row[t])?,
            None => 0,
        };
        let i = parse_index(&row[ci])?;
        let j = match cj {
            Some(c) => parse_index(&row[c])?,
            None => 0,
        };
        if n >= nodes || i >= grid.cells(0) || j >= grid.cells(1) {
            return Err(Error::Config(format!(
                "CSV index ({n}, {i}, {j}) outside the grid"
            )));
        }
        let slot = n * grid.len() + grid.index(i, j);
        if seen[slot] {
            return Err(Error::Config(format!("CSV repeats entry ({n}, {i}, {j})")));
        }
        seen[slot] = true;
        data[slot] = parse_value(&row[vi])?;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Config("CSV does not cover every node and cell".into()));
    }
    let fields: Vec<Field> = data
        .chunks(grid.len())
        .map(|c| Field::from_values(grid, c.to_vec()))
        .collect::<Result<_>>()?;
    if ti.is_some() {
        Trajectory::new(time, fields)
    } else {
        Ok(Trajectory::repeat(time, &fields[0]))
    }
}

pub fn read_trajectory_csv(
    path: &Path,
    column: Option<&str>,
    grid: Grid,
    time: TimeGrid,
) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path)?;
    trajectory_from_csv(&text, column, grid, time)
}
