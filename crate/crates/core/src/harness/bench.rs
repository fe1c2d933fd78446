use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::lanczos::{convergence_study, write_convergence_csv, ConvergenceRow, LanczosOptions};
use crate::linalg::{io::load_matrix, DenseMatrix, LinalgError};
use crate::synth::{spectrum_matrix, Spectrum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MatrixSource {
    File {
        path: PathBuf,
    },
    Synthetic {
        rows: usize,
        cols: usize,
        spectrum: Spectrum,
        seed: u64,
    },
}

impl Default for MatrixSource {
    /// A tall matrix with the aspect ratio of a 4096-token, 468-channel
    /// activation slice, scaled down eightfold.
    fn default() -> Self {
        MatrixSource::Synthetic {
            rows: 512,
            cols: 58,
            spectrum: Spectrum::Geometric,
            seed: 0,
        }
    }
}

impl MatrixSource {
    pub fn load(&self) -> Result<DenseMatrix, HarnessError> {
        match self {
            MatrixSource::File { path } => load_matrix(path).map_err(|e| match e {
                LinalgError::Io(source) => HarnessError::Io {
                    path: path.clone(),
                    source,
                },
                other => HarnessError::InvalidSweep(format!("{}: {other}", path.display())),
            }),
            MatrixSource::Synthetic {
                rows,
                cols,
                spectrum,
                seed,
            } => Ok(spectrum_matrix(*rows, *cols, *spectrum, *seed)?),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Runs the convergence study and writes `convergence.csv` plus one
/// `trace_rank_<k>.csv` per rank into `out_dir`.
pub fn run_convergence_bench(
    source: &MatrixSource,
    ranks: &[usize],
    opts: &LanczosOptions,
    out_dir: &Path,
) -> Result<Vec<ConvergenceRow>, HarnessError> {
    let a = source.load()?;
    let rows = convergence_study(&a, ranks, opts)?;
    fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let table = out_dir.join("convergence.csv");
    write_convergence_csv(&rows, create(&table)?).map_err(|source| HarnessError::Csv { path: table, source })?;
    for r in &rows {
        let path = out_dir.join(format!("trace_rank_{}.csv", r.rank));
        r.trace
            .write_csv(create(&path)?)
            .map_err(|source| HarnessError::Csv { path, source })?;
    }
    Ok(rows)
}
