use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{estimate_plan, DecompPlan, HarnessError, ModelPlan, OutlierPlan};
use crate::dcomsim::{simulate_lanczos, BaselineConfig, HardwareConfig};
use crate::decomp::BatchActivations;
use crate::lanczos::{lanczos_svd, reconstruction_error, LanczosOptions};
use crate::linalg::relative_distance;
use crate::outlier::{calibrate_thresholds, multitrack_decompose, LayerSamples, DEFAULT_COUNT_FRACTION};
use crate::synth::ActivationProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    Rank,
    F,
    Layers,
    #[serde(alias = "outlier_fraction")]
    Outlier,
}

impl SweepKey {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKey::Rank => "rank",
            SweepKey::F => "f",
            SweepKey::Layers => "layers",
            SweepKey::Outlier => "outlier",
        }
    }
}

impl FromStr for SweepKey {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rank" => Ok(SweepKey::Rank),
            "f" => Ok(SweepKey::F),
            "layers" => Ok(SweepKey::Layers),
            "outlier" | "outlier_fraction" => Ok(SweepKey::Outlier),
            other => Err(HarnessError::InvalidSweep(format!(
                "unknown sweep key {other:?}; expected rank, f, layers or outlier"
            ))),
        }
    }
}

/// Values are kept as written; layer sets are comma- or space-separated ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub vary: SweepKey,
    pub values: Vec<String>,
}

/// Planted-outlier activations used to measure reconstruction error in an
/// outlier sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierSynthetic {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub max_gain: f64,
    pub calibration_samples: usize,
    pub seed: u64,
}

impl Default for OutlierSynthetic {
    fn default() -> Self {
        Self {
            rows: 256,
            cols: 128,
            channels: 6,
            max_gain: 40.0,
            calibration_samples: 4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub vary: String,
    pub value: String,
    pub rank: usize,
    pub expansion_factor: usize,
    pub decomposed_layers: usize,
    pub outlier_fraction: f64,
    pub memory_reduction_pct: f64,
    pub flops_reduction_pct: f64,
    pub runtime_reduction_pct: f64,
    pub decomposition_seconds: f64,
    pub total_seconds: f64,
    /// One prompt at the model's hidden width.
    pub lanczos_cycles: f64,
    pub bound_class: String,
    pub decompositions: usize,
    pub re_decompositions: usize,
    /// Only measured by outlier sweeps.
    pub reconstruction_error: Option<f64>,
}

fn parse<T: FromStr>(key: SweepKey, v: &str) -> Result<T, HarnessError> {
    v.trim()
        .parse()
        .map_err(|_| HarnessError::InvalidSweep(format!("bad {} value {v:?}", key.as_str())))
}

fn parse_layers(v: &str) -> Result<Vec<usize>, HarnessError> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse(SweepKey::Layers, t))
        .collect()
}

fn outlier_error(cfg: &OutlierSynthetic, fraction: f64, k: usize) -> Result<f64, HarnessError> {
    let profile = ActivationProfile::planted(cfg.rows, cfg.cols, cfg.channels, cfg.max_gain);
    let x = profile.sample(cfg.seed);
    let opts = LanczosOptions::with_seed(cfg.seed);
    if fraction == 0.0 {
        let (d, _) = lanczos_svd(&x, k, &opts)?;
        return Ok(reconstruction_error(&x, &d)?);
    }
    let prompts = (1..=cfg.calibration_samples as u64)
        .map(|i| profile.sample(cfg.seed + i))
        .collect();
    let samples = [LayerSamples {
        layer: 0,
        batches: vec![BatchActivations::new(prompts)?],
    }];
    let table = calibrate_thresholds(&samples, fraction, DEFAULT_COUNT_FRACTION)?;
    let e = table.get(0).expect("one layer calibrated");
    let mt = multitrack_decompose(&x, k, e.threshold, e.count_fraction, &opts)?;
    Ok(relative_distance(&mt.reconstruct(), &x)?)
}

/// Re-estimates `plan` once per value of the varied knob.
pub fn sweep(
    spec: &SweepSpec,
    model: &ModelPlan,
    plan: &DecompPlan,
    hw: &HardwareConfig,
    baseline: &BaselineConfig,
    synthetic: &OutlierSynthetic,
) -> Result<Vec<SweepRow>, HarnessError> {
    if spec.values.is_empty() {
        return Err(HarnessError::InvalidSweep("no values given".into()));
    }
    let mut rows = Vec::with_capacity(spec.values.len());
    for v in &spec.values {
        let mut p = plan.clone();
        let mut recon = None;
        match spec.vary {
            SweepKey::Rank => p.rank = parse(spec.vary, v)?,
            SweepKey::F => p.expansion_factor = parse(spec.vary, v)?,
            SweepKey::Layers => p.layers = parse_layers(v)?,
            SweepKey::Outlier => {
                let fraction: f64 = parse(spec.vary, v)?;
                if !(0.0..=0.1).contains(&fraction) {
                    return Err(HarnessError::InvalidSweep(format!(
                        "outlier fraction {fraction} outside [0, 0.1]"
                    )));
                }
                p.outlier = OutlierPlan {
                    enabled: fraction > 0.0,
                    target_fraction: if fraction > 0.0 {
                        fraction
                    } else {
                        plan.outlier.target_fraction
                    },
                };
                recon = Some(outlier_error(synthetic, fraction, p.rank.min(synthetic.cols))?);
            }
        }
        let report = estimate_plan(model, &p, hw, baseline)?;
        let lat = simulate_lanczos(model.seq, model.hidden, p.rank, p.expansion_factor, hw)?;
        let t = &report.totals;
        rows.push(SweepRow {
            vary: spec.vary.as_str().into(),
            value: v.trim().into(),
            rank: p.rank,
            expansion_factor: p.expansion_factor,
            decomposed_layers: p.layers.len(),
            outlier_fraction: if p.outlier.enabled {
                p.outlier.target_fraction
            } else {
                0.0
            },
            memory_reduction_pct: t.memory_reduction_pct,
            flops_reduction_pct: t.flops_reduction_pct,
            runtime_reduction_pct: t.runtime_reduction_pct,
            decomposition_seconds: t.decomposition_seconds,
            total_seconds: t.total_seconds,
            lanczos_cycles: lat.cycles_total,
            bound_class: lat.bound_class.as_str().into(),
            decompositions: t.decompositions,
            re_decompositions: t.re_decompositions,
            reconstruction_error: recon,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "vary",
        "value",
        "rank",
        "expansion_factor",
        "decomposed_layers",
        "outlier_fraction",
        "memory_reduction_pct",
        "flops_reduction_pct",
        "runtime_reduction_pct",
        "decomposition_seconds",
        "total_seconds",
        "lanczos_cycles",
        "bound_class",
        "decompositions",
        "re_decompositions",
        "reconstruction_error",
    ])?;
    for r in rows {
        out.write_record([
            r.vary.clone(),
            r.value.clone(),
            r.rank.to_string(),
            r.expansion_factor.to_string(),
            r.decomposed_layers.to_string(),
            r.outlier_fraction.to_string(),
            r.memory_reduction_pct.to_string(),
            r.flops_reduction_pct.to_string(),
            r.runtime_reduction_pct.to_string(),
            r.decomposition_seconds.to_string(),
            r.total_seconds.to_string(),
            r.lanczos_cycles.to_string(),
            r.bound_class.clone(),
            r.decompositions.to_string(),
            r.re_decompositions.to_string(),
            r.reconstruction_error.map_or_else(String::new, |e| e.to_string()),
        ])?;
    }
    out.flush()?;
    Ok(())
}
