use serde::{Deserialize, Serialize};

use super::DecompError;

/// Reported bytes per element (half-precision hardware).
pub const BYTES_PER_ELEMENT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Decomposed input times dense weight, dense output.
    InputOnly,
    /// Decomposed input times dense weight, output keeps `U, Σ` and a new `V*`.
    InputPreserved,
    /// Decomposed input times decomposed weight, dense output.
    InputWeight,
    /// Decomposed input times decomposed weight, output keeps `U_I, V_W` and a
    /// dense core `Σ*`.
    InputWeightPreserved,
}

impl Scheme {
    pub fn uses_weight_ranks(self) -> bool {
        matches!(self, Scheme::InputWeight | Scheme::InputWeightPreserved)
    }

    pub fn is_preserved(self) -> bool {
        matches!(self, Scheme::InputPreserved | Scheme::InputWeightPreserved)
    }
}

/// Batch `B` of `S × H` activations multiplied by an `H × W_cols` weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostDims {
    pub batch: usize,
    pub seq: usize,
    pub hidden: usize,
    pub w_cols: usize,
}

/// Input ranks `r1, r2`; weight ranks `p1, p2` are needed only by the
/// input+weight schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRanks {
    pub r1: usize,
    pub r2: usize,
    #[serde(default)]
    pub p1: Option<usize>,
    #[serde(default)]
    pub p2: Option<usize>,
}

impl CostRanks {
    pub fn input(r: usize) -> Self {
        Self {
            r1: r,
            r2: r,
            p1: None,
            p2: None,
        }
    }

    pub fn input_weight(r: usize, p: usize) -> Self {
        Self {
            r1: r,
            r2: r,
            p1: Some(p),
            p2: Some(p),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub flops: u64,
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    /// Dense FLOPs over the FLOPs of the weight-facing products only.
    pub compute_reduction_ratio_paper: f64,
    /// Dense FLOPs over every FLOP the scheme spends.
    pub compute_reduction_ratio_true: f64,
    pub input_compression_ratio: f64,
    pub weight_compression_ratio: f64,
    /// Largest weight rank for which factored storage beats dense storage.
    pub breakeven_rank: f64,
}

/// Positive root of `H·p + p² + p·W = H·W`.
pub fn breakeven_rank(hidden: usize, w_cols: usize) -> f64 {
    let (h, w) = (hidden as f64, w_cols as f64);
    (((h + w) * (h + w) + 4.0 * h * w).sqrt() - (h + w)) / 2.0
}

fn ratio(num: u64, den: u64) -> f64 {
    num as f64 / den as f64
}

/// Closed-form costs of one scheme. FLOP and byte counts match what the
/// instrumented schemes report, summed over the batch; the weight is shared
/// and counted once.
pub fn cost_report(dims: CostDims, ranks: CostRanks, scheme: Scheme) -> Result<CostReport, DecompError> {
    let CostDims {
        batch,
        seq: s,
        hidden: h,
        w_cols: wc,
    } = dims;
    if batch == 0 || s == 0 || h == 0 || wc == 0 {
        return Err(DecompError::InvalidRanks(format!(
            "dimensions must be positive: {dims:?}"
        )));
    }
    let CostRanks { r1, r2, .. } = ranks;
    if r1 == 0 || r2 == 0 || r1 > s || r2 > h {
        return Err(DecompError::InvalidRanks(format!(
            "need 1 <= r1 <= {s} and 1 <= r2 <= {h}, got r1 = {r1}, r2 = {r2}"
        )));
    }
    let (p1, p2) = if scheme.uses_weight_ranks() {
        match (ranks.p1, ranks.p2) {
            (Some(p1), Some(p2)) if p1 > 0 && p2 > 0 && p1 <= h && p2 <= wc => (p1, p2),
            (Some(p1), Some(p2)) => {
                return Err(DecompError::InvalidRanks(format!(
                    "need 1 <= p1 <= {h} and 1 <= p2 <= {wc}, got p1 = {p1}, p2 = {p2}"
                )))
            }
            _ => {
                return Err(DecompError::InvalidRanks(format!(
                    "{scheme:?} needs weight ranks p1 and p2"
                )))
            }
        }
    } else {
        (0, 0)
    };
    let [b, s, h, wc, r1, r2, p1, p2] = [batch, s, h, wc, r1, r2, p1, p2].map(|x| x as u64);

    let dense = 2 * s * h * wc;
    // weight-facing products
    let input_head = 2 * r2 * h * wc;
    let weight_head = 2 * (r2 * h * p1 + r2 * p1 * p2 + r1 * r2 * p2);
    let (per_prompt, head) = match scheme {
        Scheme::InputOnly => (input_head + 2 * r1 * r2 * wc + 2 * s * r1 * wc, input_head),
        Scheme::InputPreserved => (input_head, input_head),
        Scheme::InputWeight => (weight_head + 2 * r1 * p2 * wc + 2 * s * r1 * wc, weight_head),
        Scheme::InputWeightPreserved => (weight_head, weight_head),
    };

    let input_elems = s * r1 + r1 * r2 + r2 * h;
    let weight_elems = if scheme.uses_weight_ranks() {
        h * p1 + p1 * p2 + p2 * wc
    } else {
        h * wc
    };
    let output_elems = match scheme {
        Scheme::InputOnly | Scheme::InputWeight => s * wc,
        Scheme::InputPreserved => s * r1 + r1 * r2 + r2 * wc,
        Scheme::InputWeightPreserved => s * r1 + r1 * p2 + p2 * wc,
    };

    Ok(CostReport {
        flops: b * per_prompt,
        input_bytes: b * input_elems * BYTES_PER_ELEMENT,
        weight_bytes: weight_elems * BYTES_PER_ELEMENT,
        output_bytes: b * output_elems * BYTES_PER_ELEMENT,
        compute_reduction_ratio_paper: ratio(dense, head),
        compute_reduction_ratio_true: ratio(dense, per_prompt),
        input_compression_ratio: ratio(s * h, input_elems),
        weight_compression_ratio: ratio(h * wc, weight_elems),
        breakeven_rank: breakeven_rank(dims.hidden, dims.w_cols),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(s: usize, h: usize, wc: usize) -> CostDims {
        CostDims {
            batch: 1,
            seq: s,
            hidden: h,
            w_cols: wc,
        }
    }

    #[test]
    fn input_only_spot_value() {
        let r = cost_report(dims(4096, 4096, 4096), CostRanks::input(20), Scheme::InputOnly).unwrap();
        assert_eq!(r.compute_reduction_ratio_paper, 204.8);
        assert!(r.compute_reduction_ratio_true < r.compute_reduction_ratio_paper);
    }

    #[test]
    fn activation_compression_spot_value() {
        let r = cost_report(dims(4096, 4096, 4096), CostRanks::input(20), Scheme::InputOnly).unwrap();
        let want = 4096.0 * 4096.0 / (4096.0 * 20.0 + 400.0 + 20.0 * 4096.0);
        assert_eq!(r.input_compression_ratio, want);
        assert!((r.input_compression_ratio - 102.15).abs() < 0.01);
    }

    #[test]
    fn breakeven_is_bracketed() {
        let p = breakeven_rank(4096, 4096);
        assert!((p - 4096.0 * (2f64.sqrt() - 1.0)).abs() < 1e-9);
        let at = |p| {
            cost_report(
                dims(4096, 4096, 4096),
                CostRanks::input_weight(20, p),
                Scheme::InputWeight,
            )
            .unwrap()
            .weight_compression_ratio
        };
        assert!(at(1696) > 1.0);
        assert!(at(1697) < 1.0);
    }

    #[test]
    fn weight_schemes_need_weight_ranks() {
        assert!(cost_report(dims(8, 8, 8), CostRanks::input(2), Scheme::InputWeight).is_err());
        assert!(cost_report(dims(8, 8, 8), CostRanks::input(9), Scheme::InputOnly).is_err());
        assert!(cost_report(dims(8, 8, 8), CostRanks::input(0), Scheme::InputOnly).is_err());
    }

    #[test]
    fn json_field_names() {
        let r = cost_report(dims(64, 32, 16), CostRanks::input(4), Scheme::InputPreserved).unwrap();
        let v = serde_json::to_value(r).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "breakeven_rank",
                "compute_reduction_ratio_paper",
                "compute_reduction_ratio_true",
                "flops",
                "input_bytes",
                "input_compression_ratio",
                "output_bytes",
                "weight_bytes",
                "weight_compression_ratio",
            ]
        );
    }

    #[test]
    fn batch_scales_flops_not_weight() {
        let one = cost_report(dims(64, 32, 16), CostRanks::input(4), Scheme::InputOnly).unwrap();
        let four = cost_report(
            CostDims {
                batch: 4,
                ..dims(64, 32, 16)
            },
            CostRanks::input(4),
            Scheme::InputOnly,
        )
        .unwrap();
        assert_eq!(four.flops, 4 * one.flops);
        assert_eq!(four.weight_bytes, one.weight_bytes);
        assert_eq!(four.compute_reduction_ratio_true, one.compute_reduction_ratio_true);
    }
}
