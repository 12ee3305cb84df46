//! Image and table export.

use std::path::{Path, PathBuf};

use d2nn_core::network::{ForwardTrace, StageData};
use d2nn_core::ComplexField;

use crate::error::{Error, Result};

/// What to draw from a complex field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FieldView {
    #[default]
    Magnitude,
    Phase,
}

/// 8-bit P5 PGM, min-max scaled. A constant image maps to all zeros.
pub fn pgm_bytes(values: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if values.len() != rows * cols {
        return Err(Error::Dataset(format!(
            "{} values cannot form a {rows}x{cols} image",
            values.len()
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(d2nn_core::Error::NonFinite(format!("pixel {i}")).into());
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

pub fn field_values(field: &ComplexField, view: FieldView) -> Vec<f64> {
    field
        .data()
        .iter()
        .map(|z| match view {
            FieldView::Magnitude => z.norm(),
            FieldView::Phase => z.arg(),
        })
        .collect()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn export_heatmap(values: &[f64], rows: usize, cols: usize, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &pgm_bytes(values, rows, cols)?)
}

pub fn export_field(field: &ComplexField, view: FieldView, path: impl AsRef<Path>) -> Result<()> {
    export_heatmap(&field_values(field, view), field.rows(), field.cols(), path)
}

/// One PGM per stage, named `NN_<stage>.pgm` in path order.
pub fn export_trace(trace: &ForwardTrace, view: FieldView, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (rows, cols) = trace.input.shape();
    let mut written = Vec::new();
    for (i, (name, data)) in trace.stages().into_iter().enumerate() {
        let path = dir.join(format!("{i:02}_{name}.pgm"));
        match data {
            StageData::Field(f) => export_field(f, view, &path)?,
            StageData::Intensity(v) => export_heatmap(v, rows, cols, &path)?,
        }
        written.push(path);
    }
    Ok(written)
}

/// Minimal CSV writer: header row plus rows of already formatted cells.
pub fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write(path.as_ref(), csv_string(header, rows).as_bytes())
}
