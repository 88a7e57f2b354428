use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::ExperimentKind;
use crate::error::{Error, Result};

/// Outcome of a single training run.
///
/// CSV header:
/// `experiment,n,m,k,d,p,beta,trial,seed,converged,final_loss,iterations,final_signal_error,milestone_iter,step,eps_norm,recovery_bound`.
/// Empty cells mark quantities the experiment does not compute. Wall-clock
/// time is kept in memory only so that files are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub p: f64,
    pub beta: f64,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub final_loss: f64,
    pub iterations: usize,
    pub final_signal_error: f64,
    pub milestone_iter: Option<usize>,
    pub step: f64,
    pub eps_norm: Option<f64>,
    pub recovery_bound: Option<f64>,
    #[serde(skip)]
    pub wall_time: f64,
}

pub fn write_csv_rows<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_csv_rows<T: DeserializeOwned>(input: impl Read) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Write rows to `path`, creating parent directories.
pub fn save_csv_rows<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_csv_rows(rows, &mut buf)?;
    write_file(path, &buf)
}

pub fn load_csv_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_rows(std::io::BufReader::new(f))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunRecord {
        RunRecord {
            experiment: ExperimentKind::PhaseKn,
            n: 5,
            m: 10,
            k: 20,
            d: 100,
            p: 0.3,
            beta: 0.05,
            trial: 2,
            seed: 7,
            converged: false,
            final_loss: 1.234_567_890_123e-3,
            iterations: 25_000,
            final_signal_error: 0.1 + 0.2,
            milestone_iter: None,
            step: 1.0 / 3.0,
            eps_norm: Some(0.01),
            recovery_bound: None,
            wall_time: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let rows = vec![sample(), RunRecord { milestone_iter: Some(4), trial: 3, ..sample() }];
        let mut buf = Vec::new();
        write_csv_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "experiment,n,m,k,d,p,beta,trial,seed,converged,final_loss,iterations,final_signal_error,milestone_iter,step,eps_norm,recovery_bound\n"
        ));
        let back: Vec<RunRecord> = read_csv_rows(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn io_errors_carry_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = save_csv_rows(&[sample()], blocker.join("sub/out.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("file"));
    }
}
