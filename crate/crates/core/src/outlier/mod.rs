//! Channel-wise outlier extraction.
//!
//! A channel (column) is an outlier when at least a fraction `c` of its
//! tokens exceed a per-layer magnitude threshold `T`. Outlier channels are
//! moved to an exact dense side path and the remaining columns are compacted
//! and decomposed, so a handful of extreme channels no longer dominate the
//! low-rank spectrum.

mod calibrate;

pub use calibrate::{calibrate_thresholds, LayerSamples};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomp::{matmul_input_decomposed, MatmulStats};
use crate::lanczos::{lanczos_svd, LanczosError, LanczosOptions};
use crate::linalg::{matmul, matmul_flops, DenseMatrix, LinalgError};
use crate::DecomposedMatrix;

/// Default fraction of tokens that must exceed `T` to flag a channel.
pub const DEFAULT_COUNT_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum OutlierError {
    #[error("threshold must be positive and finite, got {0}")]
    BadThreshold(f64),
    #[error("count fraction must lie in (0, 1], got {0}")]
    BadCountFraction(f64),
    #[error("target fraction must lie in (0, 0.1], got {0}")]
    BadTargetFraction(f64),
    #[error("layer {0} appears more than once")]
    DuplicateLayer(usize),
    #[error("layer {0} has no calibration samples")]
    EmptySamples(usize),
    #[error("no calibration layers given")]
    NoLayers,
    #[error("layer {layer}: samples disagree on hidden size ({found} vs {expected})")]
    HiddenMismatch {
        layer: usize,
        found: usize,
        expected: usize,
    },
    #[error("layer {0}: samples are too small in magnitude to place a positive threshold")]
    Degenerate(usize),
    #[error("threshold table: {0}")]
    Table(String),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub layer: usize,
    pub threshold: f64,
    pub count_fraction: f64,
}

/// Per-layer thresholds, serialized as a bare JSON array of entries.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ThresholdEntry>", into = "Vec<ThresholdEntry>")]
pub struct ThresholdTable {
    entries: Vec<ThresholdEntry>,
}

impl ThresholdTable {
    pub fn new(entries: Vec<ThresholdEntry>) -> Result<Self, OutlierError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            validate(e.threshold, e.count_fraction)?;
            if e.count_fraction >= 1.0 {
                return Err(OutlierError::BadCountFraction(e.count_fraction));
            }
            if !seen.insert(e.layer) {
                return Err(OutlierError::DuplicateLayer(e.layer));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ThresholdEntry] {
        &self.entries
    }

    pub fn get(&self, layer: usize) -> Option<&ThresholdEntry> {
        self.entries.iter().find(|e| e.layer == layer)
    }

    pub fn load(path: &Path) -> Result<Self, OutlierError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| OutlierError::Table(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

impl TryFrom<Vec<ThresholdEntry>> for ThresholdTable {
    type Error = OutlierError;

    fn try_from(entries: Vec<ThresholdEntry>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<ThresholdTable> for Vec<ThresholdEntry> {
    fn from(t: ThresholdTable) -> Self {
        t.entries
    }
}

fn validate(t: f64, c: f64) -> Result<(), OutlierError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(OutlierError::BadThreshold(t));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(OutlierError::BadCountFraction(c));
    }
    Ok(())
}

/// Smallest token count that satisfies `count ≥ c · rows`.
pub(crate) fn min_count(c: f64, rows: usize) -> usize {
    ((c * rows as f64).ceil() as usize).max(1)
}

/// Outlier summary attached to reports.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierMetadata {
    pub extracted_channels: usize,
    pub fraction: f64,
}

/// Result of splitting a matrix into compacted residual and outlier columns.
#[derive(Clone, Debug, PartialEq)]
pub struct OutlierSplit {
    pub residual: DenseMatrix,
    pub outlier_cols: DenseMatrix,
    pub outlier_idx: Vec<usize>,
    pub hidden: usize,
}

impl OutlierSplit {
    /// Column indices kept in the residual, in order.
    pub fn residual_idx(&self) -> Vec<usize> {
        complement(&self.outlier_idx, self.hidden)
    }

    pub fn metadata(&self) -> OutlierMetadata {
        metadata(self.outlier_idx.len(), self.hidden)
    }
}

fn metadata(m: usize, hidden: usize) -> OutlierMetadata {
    OutlierMetadata {
        extracted_channels: m,
        fraction: if hidden == 0 { 0.0 } else { m as f64 / hidden as f64 },
    }
}

fn complement(idx: &[usize], n: usize) -> Vec<usize> {
    let mut keep = Vec::with_capacity(n - idx.len());
    let mut it = idx.iter().peekable();
    for j in 0..n {
        if it.peek() == Some(&&j) {
            it.next();
        } else {
            keep.push(j);
        }
    }
    keep
}

/// Channels of `x` with at least `c · rows` entries above `t` in magnitude.
pub fn flag_channels(x: &DenseMatrix, t: f64, c: f64) -> Vec<usize> {
    let need = min_count(c, x.rows());
    let mut counts = vec![0usize; x.cols()];
    for i in 0..x.rows() {
        for (n, &v) in counts.iter_mut().zip(x.row(i)) {
            if f64::from(v.abs()) > t {
                *n += 1;
            }
        }
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= need)
        .map(|(j, _)| j)
        .collect()
}

/// Moves flagged channels out of `x`, preserving their order; the residual
/// keeps the other columns, compacted.
pub fn extract_outlier_channels(x: &DenseMatrix, t: f64, c: f64) -> Result<OutlierSplit, OutlierError> {
    validate(t, c)?;
    let outlier_idx = flag_channels(x, t, c);
    let keep = complement(&outlier_idx, x.cols());
    Ok(OutlierSplit {
        residual: x.select_columns(&keep),
        outlier_cols: x.select_columns(&outlier_idx),
        outlier_idx,
        hidden: x.cols(),
    })
}

/// Decomposed residual plus exact outlier columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTrackDecomposition {
    residual: DecomposedMatrix,
    outlier_cols: DenseMatrix,
    outlier_idx: Vec<usize>,
    hidden: usize,
}

impl MultiTrackDecomposition {
    pub fn new(
        residual: DecomposedMatrix,
        outlier_cols: DenseMatrix,
        outlier_idx: Vec<usize>,
        hidden: usize,
    ) -> Result<Self, OutlierError> {
        let m = outlier_idx.len();
        let increasing = outlier_idx.windows(2).all(|w| w[0] < w[1]);
        if !increasing || outlier_idx.last().is_some_and(|&j| j >= hidden) {
            return Err(OutlierError::Table(
                "outlier indices must be strictly increasing and in range".into(),
            ));
        }
        if outlier_cols.cols() != m || outlier_cols.rows() != residual.rows() || residual.cols() + m != hidden {
            return Err(LinalgError::ShapeMismatch {
                op: "multitrack",
                left: (residual.rows(), residual.cols()),
                right: outlier_cols.shape(),
            }
            .into());
        }
        Ok(Self {
            residual,
            outlier_cols,
            outlier_idx,
            hidden,
        })
    }

    pub fn residual(&self) -> &DecomposedMatrix {
        &self.residual
    }

    pub fn outlier_cols(&self) -> &DenseMatrix {
        &self.outlier_cols
    }

    pub fn outlier_idx(&self) -> &[usize] {
        &self.outlier_idx
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn rows(&self) -> usize {
        self.residual.rows()
    }

    pub fn metadata(&self) -> OutlierMetadata {
        metadata(self.outlier_idx.len(), self.hidden)
    }

    /// Dense `S × H` matrix with outlier columns restored bit-exactly.
    pub fn reconstruct(&self) -> DenseMatrix {
        let res = self.residual.reconstruct();
        let keep = complement(&self.outlier_idx, self.hidden);
        let (s, h) = (self.rows(), self.hidden);
        let mut data = vec![0.0f32; s * h];
        for i in 0..s {
            let row = &mut data[i * h..(i + 1) * h];
            for (c, &j) in keep.iter().enumerate() {
                row[j] = res.get(i, c);
            }
            for (c, &j) in self.outlier_idx.iter().enumerate() {
                row[j] = self.outlier_cols.get(i, c);
            }
        }
        DenseMatrix::new(s, h, data).expect("finite parts")
    }
}

/// Extracts outlier channels with `(t, c)` and decomposes the residual at
/// rank `k`.
pub fn multitrack_decompose(
    x: &DenseMatrix,
    k: usize,
    t: f64,
    c: f64,
    opts: &LanczosOptions,
) -> Result<MultiTrackDecomposition, OutlierError> {
    let split = extract_outlier_channels(x, t, c)?;
    let (residual, _) = lanczos_svd(&split.residual, k, opts)?;
    MultiTrackDecomposition::new(residual, split.outlier_cols, split.outlier_idx, split.hidden)
}

/// `reconstruct(mt) · w` computed track by track: the residual against the
/// non-outlier rows of `w`, the outlier columns against the outlier rows.
pub fn multitrack_matmul(
    mt: &MultiTrackDecomposition,
    w: &DenseMatrix,
) -> Result<(DenseMatrix, MatmulStats), OutlierError> {
    if w.rows() != mt.hidden {
        return Err(LinalgError::ShapeMismatch {
            op: "multitrack_matmul",
            left: (mt.rows(), mt.hidden),
            right: w.shape(),
        }
        .into());
    }
    let keep = complement(&mt.outlier_idx, mt.hidden);
    let (res, mut st) = matmul_input_decomposed(&mt.residual, &w.select_rows(&keep))?;
    if mt.outlier_idx.is_empty() {
        return Ok((res, st));
    }
    let side = matmul(&mt.outlier_cols, &w.select_rows(&mt.outlier_idx))?;
    st.stage_flops
        .push(matmul_flops(mt.rows(), mt.outlier_idx.len(), w.cols()));
    st.peak_elements = st.peak_elements.max(side.len());
    Ok((res.add(&side)?, st))
}
