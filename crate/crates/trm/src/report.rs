//! Training reports and their CSV forms.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use trm_core::fit::EpochRecord;

use crate::error::{Error, Result};

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss (first on ties).
    pub best_epoch: usize,
    /// Accuracy of the best checkpoint on the test view, when one was given.
    pub test_accuracy: Option<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
}

/// One line of a summary table: a fold, a subject or a whole run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub best_epoch: usize,
    pub test_accuracy: Option<f64>,
    pub wall_time_seconds: f64,
}

impl TrainReport {
    pub fn summary_row(&self, run: impl Into<String>) -> SummaryRow {
        SummaryRow {
            run: run.into(),
            best_epoch: self.best_epoch,
            test_accuracy: self.test_accuracy,
            wall_time_seconds: self.wall_time_seconds,
        }
    }

    /// `epoch,train_loss,val_loss`, one row per epoch. Contains no timing, so
    /// identical runs give identical bytes.
    pub fn write_epochs_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.epochs {
            out.serialize(EpochRow {
                epoch: r.epoch,
                train_loss: r.train_loss,
                val_loss: r.val_loss,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean and sample standard deviation (`n − 1`); the deviation is `None`
/// for fewer than two values.
pub fn mean_sd(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    Some((mean, sd))
}

#[derive(Serialize)]
struct AggregateRow {
    statistic: &'static str,
    best_epoch: Option<f64>,
    test_accuracy: Option<f64>,
    wall_time_seconds: Option<f64>,
}

/// `mean` and `sd` rows over the summary columns.
pub fn write_aggregate_csv<W: Write>(rows: &[SummaryRow], w: W) -> csv::Result<()> {
    let column = |f: &dyn Fn(&SummaryRow) -> Option<f64>| {
        let v: Option<Vec<f64>> = rows.iter().map(f).collect();
        v.and_then(|v| mean_sd(&v))
    };
    let epochs = column(&|r| Some(r.best_epoch as f64));
    let acc = column(&|r| r.test_accuracy);
    let time = column(&|r| Some(r.wall_time_seconds));
    let mut out = csv::Writer::from_writer(w);
    out.serialize(AggregateRow {
        statistic: "mean",
        best_epoch: epochs.map(|s| s.0),
        test_accuracy: acc.map(|s| s.0),
        wall_time_seconds: time.map(|s| s.0),
    })?;
    out.serialize(AggregateRow {
        statistic: "sd",
        best_epoch: epochs.and_then(|s| s.1),
        test_accuracy: acc.and_then(|s| s.1),
        wall_time_seconds: time.and_then(|s| s.1),
    })?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_csv_file(path: &Path, write: impl FnOnce(&mut File) -> csv::Result<()>) -> Result<()> {
    let mut file = File::create(path).map_err(Error::io(path))?;
    write(&mut file).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads one numeric column of a headed CSV file. Empty cells are an error.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<f64>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let index = headers.iter().position(|h| h.trim() == column).ok_or_else(|| {
        Error::Invalid(format!(
            "{}: no column {column:?} (have {})",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(", ")
        ))
    })?;
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let cell = record.get(index).unwrap_or("").trim();
        let value = cell.parse::<f64>().map_err(|_| {
            Error::Invalid(format!(
                "{}: row {} column {column:?}: {cell:?} is not a number",
                path.display(),
                line + 1
            ))
        })?;
        values.push(value);
    }
    Ok(values)
}
