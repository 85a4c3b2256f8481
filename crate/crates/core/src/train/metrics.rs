//! Per-iteration metrics as JSON lines, with an optional CSV mirror.
//!
//! Every record is one line with keys in this order:
//!
//! ```text
//! iteration, epoch, split, loss, nmse, accuracy, unitarity_defect, wall_ms, seed
//! ```
//!
//! `nmse` and `accuracy` are `null` where they do not apply, and `wall_ms`
//! is `null` unless timing was requested, so two runs with the same
//! configuration write identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub split: Split,
    pub loss: f64,
    pub nmse: Option<f64>,
    pub accuracy: Option<f64>,
    pub unitarity_defect: f64,
    pub wall_ms: Option<f64>,
    /// Initialization seed of the model that produced the record.
    pub seed: u64,
}

/// Streams records to disk, flushing after each one.
pub struct MetricsWriter {
    jsonl: BufWriter<File>,
    csv: Option<csv::Writer<File>>,
    last_iteration: Option<(u64, u64)>,
}

impl MetricsWriter {
    /// Creates (truncating) `jsonl` and, if given, `csv`.
    pub fn create(jsonl: &Path, csv: Option<&Path>) -> Result<Self> {
        let csv = match csv {
            Some(p) => Some(csv::Writer::from_writer(File::create(p)?)),
            None => None,
        };
        Ok(Self {
            jsonl: BufWriter::new(File::create(jsonl)?),
            csv,
            last_iteration: None,
        })
    }

    /// Appends one record. Iterations must not go backwards for a seed.
    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        if let Some((seed, it)) = self.last_iteration {
            if seed == record.seed && record.iteration < it {
                return Err(Error::Invalid(format!(
                    "metrics iteration went backwards: {} after {it}",
                    record.iteration
                )));
            }
        }
        self.last_iteration = Some((record.seed, record.iteration));
        serde_json::to_writer(&mut self.jsonl, record).map_err(|e| Error::Format(e.to_string()))?;
        self.jsonl.write_all(b"\n")?;
        self.jsonl.flush()?;
        if let Some(w) = &mut self.csv {
            w.serialize(record).map_err(csv_error)?;
            w.flush()?;
        }
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Appends one record to any writer.
pub fn write_metrics<W: Write>(record: &MetricsRecord, mut sink: W) -> Result<()> {
    serde_json::to_writer(&mut sink, record).map_err(|e| Error::Format(e.to_string()))?;
    sink.write_all(b"\n")?;
    sink.flush()?;
    Ok(())
}

/// Lazily parses a JSON-lines metrics file.
pub fn iter_metrics(path: &Path) -> Result<impl Iterator<Item = Result<MetricsRecord>>> {
    let reader = BufReader::new(File::open(path)?);
    Ok(reader.lines().map(|line| {
        let line = line?;
        serde_json::from_str(&line).map_err(|e| Error::Format(format!("bad metrics line: {e}")))
    }))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    iter_metrics(path)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: u64) -> MetricsRecord {
        MetricsRecord {
            iteration,
            epoch: 0,
            split: Split::Train,
            loss: 0.125,
            nmse: None,
            accuracy: Some(0.5),
            unitarity_defect: 3e-15,
            wall_ms: None,
            seed: 7,
        }
    }

    #[test]
    fn fixed_key_order() {
        let mut buf = Vec::new();
        write_metrics(&record(3), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"iteration\":3,\"epoch\":0,\"split\":\"train\",\"loss\":0.125,\"nmse\":null,\
             \"accuracy\":0.5,\"unitarity_defect\":3e-15,\"wall_ms\":null,\"seed\":7}\n"
        );
    }

    #[test]
    fn round_trip_and_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let (j, c) = (dir.path().join("m.jsonl"), dir.path().join("m.csv"));
        let mut w = MetricsWriter::create(&j, Some(&c)).unwrap();
        let recs: Vec<_> = (0..5).map(record).collect();
        for r in &recs {
            w.write(r).unwrap();
        }
        assert_eq!(read_metrics(&j).unwrap(), recs);
        let csv = std::fs::read_to_string(&c).unwrap();
        assert!(csv.starts_with("iteration,epoch,split,loss,nmse,accuracy,unitarity_defect,wall_ms,seed\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn rejects_backwards_iteration() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = MetricsWriter::create(&dir.path().join("m.jsonl"), None).unwrap();
        w.write(&record(4)).unwrap();
        assert!(w.write(&record(2)).is_err());
        let mut other = record(0);
        other.seed = 8;
        w.write(&other).unwrap();
    }
}
