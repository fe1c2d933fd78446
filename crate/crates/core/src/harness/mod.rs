//! Model-level experiments: which layers to decompose, what that saves, and
//! how long it takes.
//!
//! [`estimate_plan`] walks a transformer layer by layer. Undecomposed layers
//! run dense GEMMs on the roofline baseline. Decomposed layers pay for
//! Lanczos on the accelerator model and run their GEMMs on factored
//! operands. [`sweep`] varies one knob and emits one CSV row per value;
//! [`run_convergence_bench`] writes Lanczos-vs-oracle error tables.

mod bench;
mod estimate;
mod sweep;

pub use bench::{run_convergence_bench, MatrixSource};
pub use estimate::{estimate_plan, ExperimentReport, LayerReport, MatmulReport, Totals};
pub use sweep::{sweep, write_sweep_csv, OutlierSynthetic, SweepKey, SweepRow, SweepSpec};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dcomsim::SimError;
use crate::decomp::DecompError;
use crate::lanczos::LanczosError;
use crate::linalg::LinalgError;
use crate::outlier::OutlierError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid plan: {message} (layers {layers:?})")]
    InvalidPlan { message: String, layers: Vec<usize> },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Decomp(#[from] DecompError),
    #[error(transparent)]
    Lanczos(#[from] LanczosError),
    #[error(transparent)]
    Outlier(#[from] OutlierError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Decoder-only transformer dimensions. The defaults are Llama-2-7b-like
/// architectural constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPlan {
    pub name: String,
    pub num_layers: usize,
    pub seq: usize,
    pub hidden: usize,
    /// MLP inner width.
    pub intermediate: usize,
    pub batch: usize,
}

impl Default for ModelPlan {
    fn default() -> Self {
        Self {
            name: "llama-2-7b-like".into(),
            num_layers: 32,
            seq: 4096,
            hidden: 4096,
            intermediate: 11008,
            batch: 64,
        }
    }
}

/// One activation inside a layer and the weights that consume it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Boundary {
    pub name: &'static str,
    pub width: usize,
    /// `(name, output columns)` of every matmul reading this activation.
    pub consumers: Vec<(&'static str, usize)>,
}

impl ModelPlan {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if [self.num_layers, self.seq, self.hidden, self.intermediate, self.batch].contains(&0) {
            return Err(HarnessError::InvalidModel(format!(
                "all dimensions must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// Matmul inputs of one layer, in execution order.
    pub fn inventory(&self) -> Vec<Boundary> {
        let (h, i) = (self.hidden, self.intermediate);
        vec![
            Boundary {
                name: "attn_in",
                width: h,
                consumers: vec![("q", h), ("k", h), ("v", h)],
            },
            Boundary {
                name: "attn_out",
                width: h,
                consumers: vec![("o", h)],
            },
            Boundary {
                name: "mlp_in",
                width: h,
                consumers: vec![("gate", i), ("up", i)],
            },
            Boundary {
                name: "mlp_mid",
                width: i,
                consumers: vec![("down", h)],
            },
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanScheme {
    /// Only activations are decomposed.
    #[default]
    InputOnly,
    /// Weights are decomposed too, at `weight_rank`.
    InputWeight,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutlierPlan {
    pub enabled: bool,
    pub target_fraction: f64,
}

impl Default for OutlierPlan {
    fn default() -> Self {
        Self {
            enabled: false,
            target_fraction: 0.03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecompPlan {
    pub layers: Vec<usize>,
    pub rank: usize,
    pub scheme: PlanScheme,
    /// Keep outputs factored across consecutive decomposed layers.
    pub preserved: bool,
    pub outlier: OutlierPlan,
    pub weight_rank: Option<usize>,
    pub expansion_factor: usize,
}

impl Default for DecompPlan {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            rank: 1,
            scheme: PlanScheme::InputOnly,
            preserved: false,
            outlier: OutlierPlan::default(),
            weight_rank: None,
            expansion_factor: 8,
        }
    }
}

impl DecompPlan {
    pub fn validate(&self, model: &ModelPlan) -> Result<(), HarnessError> {
        let invalid = |message: String, layers: Vec<usize>| Err(HarnessError::InvalidPlan { message, layers });
        let out_of_range: Vec<usize> = self.layers.iter().copied().filter(|&l| l >= model.num_layers).collect();
        if !out_of_range.is_empty() {
            return invalid(format!("layer ids must be below {}", model.num_layers), out_of_range);
        }
        let unordered: Vec<usize> = self.layers.windows(2).filter(|w| w[0] >= w[1]).map(|w| w[1]).collect();
        if !unordered.is_empty() {
            return invalid("layer ids must be unique and sorted".into(), unordered);
        }
        let max_rank = model.seq.min(model.hidden);
        if self.rank == 0 || self.rank > max_rank {
            return invalid(format!("rank {} outside [1, {max_rank}]", self.rank), vec![]);
        }
        if self.scheme == PlanScheme::InputWeight {
            match self.weight_rank {
                Some(p) if p >= 1 && p <= model.hidden.min(model.intermediate) => {}
                _ => return invalid("input_weight scheme needs weight_rank in range".into(), vec![]),
            }
        }
        if self.outlier.enabled && !(self.outlier.target_fraction > 0.0 && self.outlier.target_fraction <= 0.1) {
            return invalid("outlier target_fraction must lie in (0, 0.1]".into(), vec![]);
        }
        if self.expansion_factor == 0 {
            return invalid("expansion_factor must be positive".into(), vec![]);
        }
        Ok(())
    }

    /// Maximal runs of consecutive decomposed layers.
    pub fn runs(&self) -> Vec<Vec<usize>> {
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for &l in &self.layers {
            match runs.last_mut() {
                Some(r) if r.last() == Some(&(l.wrapping_sub(1))) => r.push(l),
                _ => runs.push(vec![l]),
            }
        }
        runs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_split_on_gaps() {
        let p = DecompPlan {
            layers: vec![9, 10, 13, 14, 17],
            ..DecompPlan::default()
        };
        assert_eq!(p.runs(), vec![vec![9, 10], vec![13, 14], vec![17]]);
    }

    #[test]
    fn invalid_layers_are_listed() {
        let m = ModelPlan::default();
        let p = DecompPlan {
            layers: vec![3, 40, 41],
            ..DecompPlan::default()
        };
        match p.validate(&m) {
            Err(HarnessError::InvalidPlan { layers, .. }) => assert_eq!(layers, vec![40, 41]),
            other => panic!("{other:?}"),
        }
        let dup = DecompPlan {
            layers: vec![3, 3],
            ..DecompPlan::default()
        };
        assert!(dup.validate(&m).is_err());
    }

    #[test]
    fn inventory_is_consistent_with_hidden() {
        let m = ModelPlan::default();
        let inv = m.inventory();
        assert_eq!(inv.len(), 4);
        assert_eq!(inv[0].width, m.hidden);
        assert_eq!(inv[3].consumers[0].1, m.hidden);
    }
}
