//! CSV and JSON writers for traces, sweeps and cost profiles.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files.

use std::path::Path;

use serde::Serialize;

use crate::error::Error;
use crate::nonlocal::CostProfile;
use crate::optimizer::{OptimizerTrace, SweepResult};

/// Serializes `rows` as CSV with a header taken from the field names.
pub fn rows_to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns `iter,total,grad_term,det_term,nonlocal_term,grad_norm,step,min_det`.
pub fn trace_csv(trace: &OptimizerTrace) -> Result<String, Error> {
    rows_to_csv(&trace.records)
}

#[derive(Serialize)]
struct SweepRow {
    k: usize,
    epsilon: f64,
    total: f64,
    elastic: f64,
    nonlocal_term: f64,
    penalized_nonlocal: f64,
    box_term: f64,
    min_det: f64,
    det_integral: f64,
    image_area: f64,
    defect: f64,
    raster_tolerance: f64,
    max_multiplicity: u32,
    overlap_pairs: usize,
    boundary_injective: bool,
    iterations: usize,
    termination: &'static str,
}

/// One row per ε.
pub fn sweep_csv(sweep: &SweepResult) -> Result<String, Error> {
    rows_to_csv(sweep.records.iter().enumerate().map(|(k, r)| SweepRow {
        k,
        epsilon: r.epsilon,
        total: r.energy.total,
        elastic: r.energy.elastic(),
        nonlocal_term: r.energy.nonlocal_term,
        penalized_nonlocal: r.penalized_nonlocal,
        box_term: r.energy.box_term,
        min_det: r.min_det,
        det_integral: r.cnc.det_integral,
        image_area: r.cnc.image_area,
        defect: r.cnc.defect,
        raster_tolerance: r.cnc.raster_tolerance,
        max_multiplicity: r.cnc.max_multiplicity,
        overlap_pairs: r.cnc.overlap_pairs.len(),
        boundary_injective: r.cnc.boundary_injective,
        iterations: r.iterations,
        termination: r.termination.name(),
    }))
}

#[derive(Serialize)]
struct CostCsvRow {
    variant: &'static str,
    n: usize,
    h: f64,
    pairs: usize,
    median_seconds: f64,
    fitted_slope: f64,
}

/// Columns `variant,n,h,pairs,median_seconds,fitted_slope`; the slope is
/// repeated on every row.
pub fn cost_csv(profile: &CostProfile) -> Result<String, Error> {
    rows_to_csv(profile.rows.iter().map(|r| CostCsvRow {
        variant: r.variant.name(),
        n: r.n,
        h: r.h,
        pairs: r.pairs,
        median_seconds: r.median_seconds,
        fitted_slope: profile.fitted_slope,
    }))
}

/// Pretty-printed JSON.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Other(e.to_string()))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    let path = path.as_ref();
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{IterationRecord, Termination};

    #[test]
    fn trace_header_and_rows() {
        let trace = OptimizerTrace {
            records: vec![IterationRecord {
                iter: 0,
                total: 5.0,
                grad_term: 4.0,
                det_term: 1.0,
                nonlocal_term: 0.0,
                grad_norm: 0.5,
                step: 0.0,
                min_det: 1.0,
            }],
            termination: Termination::Converged,
        };
        let csv = trace_csv(&trace).unwrap();
        assert_eq!(
            csv,
            "iter,total,grad_term,det_term,nonlocal_term,grad_norm,step,min_det\n0,5.0,4.0,1.0,0.0,0.5,0.0,1.0\n"
        );
    }

    #[test]
    fn write_file_creates_parents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/c.txt");
        write_file(&path, "x").unwrap();
        assert_eq!(std::fs::read_to_string(path).unwrap(), "x");
    }
}
