use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};

/// One metric-log row. `val_psnr` is only present on validation iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    pub wall_ms: u64,
    pub loss: f64,
    pub val_psnr: Option<f64>,
    pub forward_passes_cum: u64,
}

/// Append-only training log written as CSV with columns
/// `iteration,wall_ms,loss,val_psnr,forward_passes_cum`.
#[derive(Debug, Clone)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
    timing: bool,
    start: Instant,
}

pub const CSV_HEADER: &str = "iteration,wall_ms,loss,val_psnr,forward_passes_cum";

impl MetricLog {
    /// With `timing` off, `wall_ms` is recorded as 0 so logs are reproducible.
    pub fn new(timing: bool) -> Self {
        Self {
            rows: Vec::new(),
            timing,
            start: Instant::now(),
        }
    }

    pub fn elapsed_ms(&self) -> u64 {
        if self.timing {
            self.start.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    pub fn push(&mut self, iteration: usize, loss: f64, val_psnr: Option<f64>, forward_passes_cum: u64) {
        debug_assert!(self.rows.last().map_or(true, |r| r.iteration <= iteration));
        let wall_ms = self.elapsed_ms();
        self.rows.push(MetricRow {
            iteration,
            wall_ms,
            loss,
            val_psnr,
            forward_passes_cum,
        });
    }

    /// Rows carrying a validation value.
    pub fn validations(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(|r| r.val_psnr.is_some())
    }

    pub fn best_val(&self) -> Option<f64> {
        self.validations().filter_map(|r| r.val_psnr).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let val = r.val_psnr.map(|v| format!("{v:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{},{:.8e},{},{}", r.iteration, r.wall_ms, r.loss, val, r.forward_passes_cum);
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse_csv(text: &str) -> Result<Vec<MetricRow>> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(Error::parse(1, "unexpected metric-log header"));
        }
        lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let f: Vec<&str> = l.split(',').collect();
                let err = || Error::parse(i + 2, format!("malformed metric row `{l}`"));
                if f.len() != 5 {
                    return Err(err());
                }
                Ok(MetricRow {
                    iteration: f[0].parse().map_err(|_| err())?,
                    wall_ms: f[1].parse().map_err(|_| err())?,
                    loss: f[2].parse().map_err(|_| err())?,
                    val_psnr: if f[3].is_empty() {
                        None
                    } else {
                        Some(f[3].parse().map_err(|_| err())?)
                    },
                    forward_passes_cum: f[4].parse().map_err(|_| err())?,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut log = MetricLog::new(false);
        log.push(0, 0.5, None, 10);
        log.push(1, 0.25, Some(21.5), 20);
        let rows = MetricLog::parse_csv(&log.to_csv()).unwrap();
        assert_eq!(rows, log.rows);
        assert_eq!(log.best_val(), Some(21.5));
        assert!(log.rows.iter().all(|r| r.wall_ms == 0));
    }
}
