//! Number formatting and CSV tables.

use std::io::Write;

use crate::error::Result;
use crate::metrics::fidelity_bound_transfer;
use crate::protocol::{build_transfer, ProtocolParams};

/// Significant digits written to CSV files.
pub const CSV_DIGITS: i32 = 15;

/// Fixed-point decimal with at least [`CSV_DIGITS`] significant digits.
pub fn fmt_sig(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return format!("{:.*}", (CSV_DIGITS - 1) as usize, 0.0);
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (CSV_DIGITS - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

pub const SWEEP_HEADER: [&str; 9] = [
    "R",
    "r",
    "eta",
    "g",
    "F_out1",
    "F_out2",
    "F_boundary",
    "VX_out1",
    "VY_out1",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub reflectivity: f64,
    pub squeezing: f64,
    pub eta: f64,
    pub gain: f64,
    pub f_out1: f64,
    pub f_out2: f64,
    pub f_boundary: f64,
    pub vx_out1: f64,
    pub vy_out1: f64,
}

impl SweepRow {
    pub fn compute(params: &ProtocolParams) -> Result<Self> {
        let out = build_transfer(params)?;
        let f1 = out.fidelity_out1()?;
        let f2 = out.fidelity_out2()?;
        Ok(SweepRow {
            reflectivity: params.reflectivity,
            squeezing: params.squeezing,
            eta: params.eta,
            gain: out.g_used,
            f_out1: f1.fidelity,
            f_out2: f2.fidelity,
            f_boundary: fidelity_bound_transfer(params.reflectivity)?,
            vx_out1: f1.vx,
            vy_out1: f1.vy,
        })
    }

    pub fn fields(&self) -> [f64; 9] {
        [
            self.reflectivity,
            self.squeezing,
            self.eta,
            self.gain,
            self.f_out1,
            self.f_out2,
            self.f_boundary,
            self.vx_out1,
            self.vy_out1,
        ]
    }
}

/// Writes a header and rows of numbers, each formatted with [`fmt_sig`].
pub fn write_csv<W: Write, R: AsRef<[f64]>>(out: W, header: &[&str], rows: &[R]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|&v| fmt_sig(v)))?;
    }
    w.flush()
}

/// Writes string records verbatim after the header.
pub fn write_records<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}
