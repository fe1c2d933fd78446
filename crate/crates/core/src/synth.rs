//! Seeded synthetic inputs: prescribed spectra, planted outlier channels and
//! heavy-tailed activation maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::{project_out, DenseMatrix, LinalgError};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Singular-value profiles for synthetic test matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spectrum {
    /// All singular values equal to one.
    Flat,
    /// `σ_i = 2^{-i}`, `i = 0, 1, …`
    Geometric,
    /// `rank` unit singular values followed by exact zeros.
    PlantedRank { rank: usize },
}

impl Spectrum {
    pub fn values(&self, p: usize) -> Vec<f64> {
        match *self {
            Spectrum::Flat => vec![1.0; p],
            Spectrum::Geometric => (0..p).map(|i| 0.5f64.powi(i as i32)).collect(),
            Spectrum::PlantedRank { rank } => (0..p).map(|i| if i < rank { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Spectrum::Flat => "flat".into(),
            Spectrum::Geometric => "geometric".into(),
            Spectrum::PlantedRank { rank } => format!("rank{rank}"),
        }
    }
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let data = (0..rows * cols).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
    DenseMatrix::new(rows, cols, data).expect("gaussian samples are finite")
}

/// `k` orthonormal columns of length `n`, returned column-wise.
pub fn random_orthonormal(n: usize, k: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(k <= n, "cannot draw {k} orthonormal vectors in dimension {n}");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let nrm = project_out(&mut v, &basis, 2);
        if nrm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nrm);
            basis.push(v);
        }
    }
    basis
}

/// `U · diag(values) · Vᵀ` with Haar-like random orthonormal factors.
pub fn with_singular_values(rows: usize, cols: usize, values: &[f64], seed: u64) -> Result<DenseMatrix, LinalgError> {
    let p = values.len();
    if p > rows.min(cols) {
        return Err(LinalgError::InvalidArgument(format!(
            "{p} singular values do not fit a {rows}x{cols} matrix"
        )));
    }
    let mut r = rng(seed);
    let u = random_orthonormal(rows, p, &mut r);
    let v = random_orthonormal(cols, p, &mut r);
    let mut data = vec![0.0f64; rows * cols];
    for (l, &s) in values.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        for i in 0..rows {
            let a = s * u[l][i];
            let row = &mut data[i * cols..(i + 1) * cols];
            for (x, &vj) in row.iter_mut().zip(&v[l]) {
                *x += a * vj;
            }
        }
    }
    DenseMatrix::from_f64(rows, cols, &data)
}

pub fn spectrum_matrix(rows: usize, cols: usize, spectrum: Spectrum, seed: u64) -> Result<DenseMatrix, LinalgError> {
    with_singular_values(rows, cols, &spectrum.values(rows.min(cols)), seed)
}

/// Standard-normal background with every listed channel (column) replaced
/// by `±magnitude` entries of random sign.
pub fn planted_outliers(rows: usize, cols: usize, channels: &[usize], magnitude: f32, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let mut data: Vec<f32> = (0..rows * cols).map(|_| r.sample::<f32, _>(StandardNormal)).collect();
    for &c in channels {
        for i in 0..rows {
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            data[i * cols + c] = sign * magnitude;
        }
    }
    DenseMatrix::new(rows, cols, data).expect("finite samples")
}

/// Activation-like input: a low-rank token/channel structure plus noise,
/// with a few channels scaled far above the rest.
///
/// `outlier_gains[c]` multiplies channel `outlier_channels[c]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActivationProfile {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub noise: f64,
    pub outlier_channels: Vec<usize>,
    pub outlier_gains: Vec<f64>,
}

impl ActivationProfile {
    /// Profile with `count` outlier channels spread over the hidden dimension
    /// and gains decaying linearly from `max_gain` down to half of it.
    pub fn planted(rows: usize, cols: usize, count: usize, max_gain: f64) -> Self {
        let stride = (cols / count.max(1)).max(1);
        let outlier_channels: Vec<usize> = (0..count).map(|i| (i * stride + stride / 2) % cols).collect();
        let outlier_gains = (0..count)
            .map(|i| max_gain * (1.0 - 0.5 * i as f64 / count.max(1) as f64))
            .collect();
        Self {
            rows,
            cols,
            rank: 4,
            noise: 0.05,
            outlier_channels,
            outlier_gains,
        }
    }

    pub fn sample(&self, seed: u64) -> DenseMatrix {
        let mut r = rng(seed);
        let left: Vec<f64> = (0..self.rows * self.rank).map(|_| r.sample(StandardNormal)).collect();
        let right: Vec<f64> = (0..self.rank * self.cols).map(|_| r.sample(StandardNormal)).collect();
        let weights: Vec<f64> = (0..self.rank).map(|l| 0.6f64.powi(l as i32)).collect();
        let mut gain = vec![1.0f64; self.cols];
        for (&c, &g) in self.outlier_channels.iter().zip(&self.outlier_gains) {
            gain[c] = g;
        }
        let mut data = Vec::with_capacity(self.rows * self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut v = 0.0;
                for l in 0..self.rank {
                    v += weights[l] * left[i * self.rank + l] * right[l * self.cols + j];
                }
                let noise: f64 = r.sample(StandardNormal);
                data.push((gain[j] * (v + self.noise * noise)) as f32);
            }
        }
        DenseMatrix::new(self.rows, self.cols, data).expect("finite samples")
    }
}

/// Heavy-tailed per-channel scales: most channels near one, a log-normal
/// tail with a handful of channels an order of magnitude larger. The scales
/// are a fixed property of the layer; tokens are redrawn per sample.
pub fn heavy_tailed_channel_scales(cols: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..cols)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            (0.9 * z).exp()
        })
        .collect()
}

pub fn heavy_tailed_activations(rows: usize, scales: &[f64], seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let cols = scales.len();
    let data = (0..rows * cols)
        .map(|idx| {
            let z: f64 = r.sample(StandardNormal);
            (z * scales[idx % cols]) as f32
        })
        .collect();
    DenseMatrix::new(rows, cols, data).expect("finite samples")
}
