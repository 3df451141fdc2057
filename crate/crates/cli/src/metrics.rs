//! Metrics CSV with a fixed header. Missing values are empty cells.

use std::fs::{File, OpenOptions};
use std::path::Path;

use crate::error::CliResult;

pub const METRICS_HEADER: [&str; 9] = [
    "step",
    "loss_g",
    "loss_d",
    "penalty1",
    "penalty2",
    "fid",
    "fid_latent",
    "swd",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub step: u64,
    pub loss_g: Option<f64>,
    pub loss_d: Option<f64>,
    pub penalty1: Option<f64>,
    pub penalty2: Option<f64>,
    pub fid: Option<f64>,
    pub fid_latent: Option<f64>,
    pub swd: Option<f64>,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn record(&self) -> [String; 9] {
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.step.to_string(),
            cell(self.loss_g),
            cell(self.loss_d),
            cell(self.penalty1),
            cell(self.penalty2),
            cell(self.fid),
            cell(self.fid_latent),
            cell(self.swd),
            self.wall_ms.to_string(),
        ]
    }
}

pub struct MetricsWriter {
    csv: csv::Writer<File>,
}

impl MetricsWriter {
    /// Opens `path` for appending. A new or empty file gets the header.
    pub fn open(path: &Path) -> CliResult<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let mut csv = csv::Writer::from_writer(file);
        if fresh {
            csv.write_record(METRICS_HEADER)?;
        }
        Ok(Self { csv })
    }

    pub fn write(&mut self, row: &MetricsRow) -> CliResult<()> {
        self.csv.write_record(row.record())?;
        self.csv.flush()?;
        Ok(())
    }
}

/// Reads a metrics file back into rows, checking the header.
pub fn read_metrics(path: &Path) -> CliResult<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(crate::CliError::Config(format!("unexpected metrics header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let opt = |i: usize| -> CliResult<Option<f64>> {
            let s = &rec[i];
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|e| crate::CliError::Config(format!("bad metrics cell `{s}`: {e}")))
            }
        };
        let int = |i: usize| -> CliResult<u64> {
            rec[i]
                .parse()
                .map_err(|e| crate::CliError::Config(format!("bad metrics cell `{}`: {e}", &rec[i])))
        };
        rows.push(MetricsRow {
            step: int(0)?,
            loss_g: opt(1)?,
            loss_d: opt(2)?,
            penalty1: opt(3)?,
            penalty2: opt(4)?,
            fid: opt(5)?,
            fid_latent: opt(6)?,
            swd: opt(7)?,
            wall_ms: int(8)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_empty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricsRow {
            step: 3,
            loss_g: Some(0.5),
            fid: Some(1e-3),
            wall_ms: 12,
            ..Default::default()
        };
        MetricsWriter::open(&path).unwrap().write(&row).unwrap();
        // Reopening appends without a second header.
        MetricsWriter::open(&path).unwrap().write(&row).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,loss_g,loss_d,penalty1,penalty2,fid,fid_latent,swd,wall_ms");
        assert_eq!(lines[1], "3,0.5,,,,0.001,,,12");
        assert_eq!(lines.len(), 3);
        assert_eq!(read_metrics(&path).unwrap(), vec![row, row]);
    }
}
