//! CSV input and output: snapshots, run logs and generic numeric tables.
//!
//! Every float is written with 17 significant digits so files round-trip
//! bit for bit.

use std::path::Path;

use crate::geometry::Grid2D;
use crate::state::{ConformationState, ShallowState};
use crate::timestepper::LogRow;
use crate::{Error, Result};

/// Snapshot columns without conformation.
pub const SNAPSHOT_COLUMNS: [&str; 5] = ["x", "y", "h", "qx", "qy"];
/// Extra snapshot columns of viscoelastic models.
pub const CONF_COLUMNS: [&str; 6] = ["sxx", "sxy", "syy", "shzx", "shzy", "szz"];
/// Run-log columns.
pub const LOG_COLUMNS: [&str; 6] = ["t", "dt", "mass", "min_h", "max_u", "min_eig_sigma"];

/// Format with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a header and rows of floats.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::SizeMismatch { expected: header.len(), got: row.len() });
        }
        w.write_record(row.iter().map(|v| fmt17(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a numeric table; returns the header and the rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("{}: row {} has non-numeric entry {s:?}", path.display(), line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::SizeMismatch { expected: header.len(), got: row.len() });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Write a snapshot, one row per cell in row-major order.
pub fn write_snapshot(path: &Path, grid: &Grid2D, state: &ShallowState, conf: Option<&ConformationState>) -> Result<()> {
    grid.check_len(state.len())?;
    let mut header: Vec<&str> = SNAPSHOT_COLUMNS.to_vec();
    if let Some(c) = conf {
        grid.check_len(c.len())?;
        header.extend(CONF_COLUMNS);
    }
    let rows = (0..grid.len()).map(|c| {
        let (i, j) = grid.ij(c);
        let mut r = vec![grid.x(i), grid.y(j), state.h[c], state.q[c][0], state.q[c][1]];
        if let Some(cf) = conf {
            let [xx, xy, yy] = cf.s_hh[c];
            r.extend([xx, xy, yy, cf.s_hz[c][0], cf.s_hz[c][1], cf.s_zz[c]]);
        }
        r
    });
    write_table(path, &header, rows)
}

/// Read a snapshot written on `grid`; the conformation is returned when present.
pub fn read_snapshot(path: &Path, grid: &Grid2D) -> Result<(ShallowState, Option<ConformationState>)> {
    let (header, rows) = read_table(path)?;
    let with_conf = header.len() == SNAPSHOT_COLUMNS.len() + CONF_COLUMNS.len();
    let expected: Vec<&str> =
        if with_conf { SNAPSHOT_COLUMNS.iter().chain(&CONF_COLUMNS).copied().collect() } else { SNAPSHOT_COLUMNS.to_vec() };
    if header != expected {
        return Err(Error::Config(format!("{}: unexpected snapshot columns {header:?}", path.display())));
    }
    grid.check_len(rows.len())?;
    let tol = 1e-9 * grid.dx.min(grid.dy);
    let mut h = Vec::with_capacity(rows.len());
    let mut q = Vec::with_capacity(rows.len());
    let mut conf = with_conf.then(|| ConformationState::identity(rows.len()));
    for (c, r) in rows.iter().enumerate() {
        let (i, j) = grid.ij(c);
        if (r[0] - grid.x(i)).abs() > tol || (r[1] - grid.y(j)).abs() > tol {
            return Err(Error::Grid(format!("snapshot cell {c} at ({}, {}) does not match the grid", r[0], r[1])));
        }
        h.push(r[2]);
        q.push([r[3], r[4]]);
        if let Some(cf) = conf.as_mut() {
            cf.s_hh[c] = [r[5], r[6], r[7]];
            cf.s_hz[c] = [r[8], r[9]];
            cf.s_zz[c] = r[10];
        }
    }
    Ok((ShallowState::new(h, q)?, conf))
}

/// Write the run log.
pub fn write_run_log(path: &Path, log: &[LogRow]) -> Result<()> {
    write_table(path, &LOG_COLUMNS, log.iter().map(|r| vec![r.t, r.dt, r.mass, r.min_h, r.max_u, r.min_eig_sigma]))
}
