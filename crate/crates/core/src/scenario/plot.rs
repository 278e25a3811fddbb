use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

use super::report::ReportBody;
use super::runner::write_atomic;

/// Per-probe series as `n,value,bessel_bound`, one file per probe label.
///
/// `value` is `|⟨z, y_n⟩|` for `n ≤ m` and empty beyond the last
/// direction; `bessel_bound` covers every step of the basis.
pub fn emit_plot_data(report: &ReportBody, target: &Path) -> Result<Vec<PathBuf>> {
    let weak = &report.weak;
    if weak.labels.is_empty() {
        log::warn!("{}: no probes, no plot data written", report.scenario.name);
        return Ok(Vec::new());
    }
    fs::create_dir_all(target)?;
    let mut written = Vec::with_capacity(weak.labels.len());
    for ((label, values), bounds) in weak
        .labels
        .iter()
        .zip(&weak.values)
        .zip(&weak.bessel_bounds)
    {
        let mut csv = String::from("n,value,bessel_bound\n");
        for (i, b) in bounds.iter().enumerate() {
            match values.get(i) {
                Some(v) => csv.push_str(&format!("{},{v:e},{b:e}\n", i + 1)),
                None => csv.push_str(&format!("{},,{b:e}\n", i + 1)),
            }
        }
        let path = target.join(format!("{label}.csv"));
        write_atomic(&path, csv.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
