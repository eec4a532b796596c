//! CSV emission: fixed column order, floats at nine significant digits,
//! infinities spelled `inf`, byte-identical across runs with the same seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::sweep::{BeamCutsResult, SweepResult};

/// Nine significant digits in scientific form; non-finite values as words.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.8e}")
    }
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 11] = [
    "distance_m",
    "range_m",
    "design",
    "peb_m",
    "lambda1",
    "lambda2",
    "lambda3",
    "lambda4",
    "wall_time_s",
    "status",
    "seed",
];

/// Sweep rows to CSV. Wall times are emitted as zero unless
/// `include_timing` is set, keeping default output byte-identical across
/// runs with the same configuration and seed.
pub fn emit_sweep_csv(
    result: &SweepResult,
    seed: u64,
    include_timing: bool,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_rows(
        path.as_ref(),
        &SWEEP_HEADER,
        result.rows.iter().map(|r| {
            vec![
                format_float(r.distance_m),
                format_float(r.range_m),
                r.design.clone(),
                format_float(r.peb_m),
                format_float(r.lambda[0]),
                format_float(r.lambda[1]),
                format_float(r.lambda[2]),
                format_float(r.lambda[3]),
                format_float(if include_timing { r.wall_time_s } else { 0.0 }),
                r.status.clone(),
                seed.to_string(),
            ]
        }),
    )
}

pub const CUTS_HEADER: [&str; 7] = [
    "coordinate",
    "value",
    "gain_steer",
    "gain_rho",
    "gain_theta",
    "gain_phi",
    "status",
];

pub fn emit_cuts_csv(result: &BeamCutsResult, path: impl AsRef<Path>) -> Result<()> {
    let label = result.coordinate.label();
    write_rows(
        path.as_ref(),
        &CUTS_HEADER,
        result.rows.iter().map(|r| {
            vec![
                label.to_string(),
                format_float(r.value),
                format_float(r.gains[0]),
                format_float(r.gains[1]),
                format_float(r.gains[2]),
                format_float(r.gains[3]),
                r.status.clone(),
            ]
        }),
    )
}

/// Tidy long-format companion for plotting: one `(x, series, y)` triple per
/// line, PEB against distance.
pub fn emit_sweep_plot_data(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["distance_m", "series", "peb_m"],
        result.rows.iter().map(|r| {
            vec![
                format_float(r.distance_m),
                r.design.clone(),
                format_float(r.peb_m),
            ]
        }),
    )
}

/// Tidy long-format beam gains: one `(value, beam, gain)` triple per line.
pub fn emit_cuts_plot_data(result: &BeamCutsResult, path: impl AsRef<Path>) -> Result<()> {
    const BEAMS: [&str; 4] = ["steer", "d_rho", "d_theta", "d_phi"];
    let mut rows = Vec::with_capacity(result.rows.len() * 4);
    for r in &result.rows {
        if r.status != "ok" {
            continue;
        }
        for (name, gain) in BEAMS.iter().zip(r.gains.iter()) {
            rows.push(vec![
                format_float(r.value),
                name.to_string(),
                format_float(*gain),
            ]);
        }
    }
    write_rows(path.as_ref(), &["value", "beam", "gain"], rows.into_iter())
}
