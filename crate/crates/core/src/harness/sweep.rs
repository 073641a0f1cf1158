//! Budget sweeps: run many configurations, tolerate row failures, and emit
//! CSV plus a JSON mirror with the full configs embedded.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::pipeline::run_pipeline;
use crate::harness::{PipelineConfig, ReportRow};

/// Outcome of one sweep row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: PipelineConfig,
    pub row: Option<ReportRow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Number of parallel rows: capped by the `CSI_LAB_THREADS` environment
/// variable when set, otherwise the available parallelism.
fn thread_cap(rows: usize) -> usize {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var("CSI_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(avail);
    cap.min(rows).max(1)
}

/// Runs every config (rows may run in parallel; each row is single-threaded
/// and self-contained). Successful rows are sorted by feedback bits; failures
/// are recorded and do not abort the sweep.
pub fn sweep(configs: Vec<PipelineConfig>) -> Result<SweepReport> {
    if configs.is_empty() {
        return Err(Error::Config("sweep: no configurations".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap(configs.len()))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        configs
            .into_par_iter()
            .map(|config| match run_pipeline(&config) {
                Ok((row, _)) => SweepRow { config, row: Some(row), error: None },
                Err(e) => SweepRow { config, row: None, error: Some(e.to_string()) },
            })
            .collect()
    });
    rows.sort_by_key(|r| match &r.row {
        Some(row) => (0u8, row.feedback_bits),
        None => (1u8, u32::MAX),
    });
    Ok(SweepReport { rows })
}

/// Clones `base` once per budget.
pub fn expand_budgets(base: &PipelineConfig, budgets: &[u32]) -> Vec<PipelineConfig> {
    budgets
        .iter()
        .map(|&b| PipelineConfig { budget_bits: Some(b), ..base.clone() })
        .collect()
}

impl SweepReport {
    /// Successful rows in feedback-bit order.
    pub fn ok_rows(&self) -> Vec<&ReportRow> {
        self.rows.iter().filter_map(|r| r.row.as_ref()).collect()
    }

    /// CSV with one line per successful row. Columns: config_digest, scheme,
    /// feedback_bits, nmse_mean, nmse_std, pass, wall_s. Deterministic apart
    /// from the wall-time column.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["config_digest", "scheme", "feedback_bits", "nmse_mean", "nmse_std", "pass", "wall_s"])
            .map_err(csv_err)?;
        for row in self.ok_rows() {
            w.write_record([
                row.config_digest.clone(),
                row.scheme.clone(),
                row.feedback_bits.to_string(),
                format!("{:.9e}", row.nmse_mean),
                format!("{:.9e}", row.nmse_std),
                row.pass.to_string(),
                format!("{:.3}", row.wall_s),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv()?.as_bytes())?;
        Ok(())
    }

    /// JSON mirror with the full configs (and any row errors) embedded.
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}
