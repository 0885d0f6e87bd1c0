//! Plain-text output helpers shared by the scan and fit writers.

use std::io::Write;

use crate::error::Result;

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        // normalize -0.0 so identical runs never differ in sign of zero
        return format!("{:.16e}", 0.0);
    }
    format!("{x:.16e}")
}

/// Write a header line and rows of numbers as CSV.
pub fn write_numeric_csv<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().copied().map(fmt_f64).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
