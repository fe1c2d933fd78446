use serde::{Deserialize, Serialize};

use super::{BoundClass, EnergyEstimate, LatencyReport, SimError, StageKind, REORTH_PASSES};

/// Roofline parameters of a GPU baseline. Defaults are A100-class: FP16
/// tensor peak, HBM2 bandwidth and a typical kernel launch cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// FLOP/s.
    pub peak_flops: f64,
    /// Bytes/s.
    pub mem_bandwidth: f64,
    /// Seconds per kernel.
    pub kernel_launch_overhead: f64,
    /// Only used to express times as cycles in reports.
    pub clock_hz: f64,
    pub bytes_per_element: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            peak_flops: 312e12,
            mem_bandwidth: 1.555e12,
            kernel_launch_overhead: 5e-6,
            clock_hz: 1.41e9,
            bytes_per_element: 2,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let rates = [self.peak_flops, self.mem_bandwidth, self.clock_hz];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) || self.bytes_per_element == 0 {
            return Err(SimError::InvalidConfig(format!(
                "non-positive baseline parameter in {self:?}"
            )));
        }
        if !(self.kernel_launch_overhead >= 0.0) {
            return Err(SimError::InvalidConfig("launch overhead must be non-negative".into()));
        }
        Ok(())
    }

    /// FLOPs per byte at which compute and memory time are equal.
    pub fn ridge_point(&self) -> f64 {
        self.peak_flops / self.mem_bandwidth
    }
}

/// `max(flops / peak, bytes / bandwidth) + launch overhead`.
pub fn roofline_seconds(flops: u64, bytes: u64, cfg: &BaselineConfig) -> f64 {
    (flops as f64 / cfg.peak_flops).max(bytes as f64 / cfg.mem_bandwidth) + cfg.kernel_launch_overhead
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub kind: StageKind,
    pub iteration: usize,
    pub flops: u64,
    pub bytes: u64,
    pub seconds: f64,
    pub bound: BoundClass,
}

fn kernel(kind: StageKind, iteration: usize, flops: u64, bytes: u64, cfg: &BaselineConfig) -> KernelEstimate {
    KernelEstimate {
        kind,
        iteration,
        flops,
        bytes,
        seconds: roofline_seconds(flops, bytes, cfg),
        bound: BoundClass::classify(bytes as f64 / cfg.mem_bandwidth, flops as f64 / cfg.peak_flops),
    }
}

/// The `4k + 2` kernels of rank-`k` bidiagonalization on one `seq × hidden`
/// prompt: an initial matvec and normalization, then per iteration two
/// matvecs and two reorthogonalization kernels with the normalization fused
/// in.
pub fn baseline_kernels(
    seq: usize,
    hidden: usize,
    k: usize,
    cfg: &BaselineConfig,
) -> Result<Vec<KernelEstimate>, SimError> {
    cfg.validate()?;
    if seq == 0 || hidden == 0 {
        return Err(SimError::InvalidConfig("prompt dimensions must be positive".into()));
    }
    let (n1, n2) = (seq as u64, hidden as u64);
    let b = cfg.bytes_per_element as u64;
    let passes = REORTH_PASSES as u64;
    let mv_flops = 2 * n1 * n2;
    let mv_bytes = (n1 * n2 + n1 + n2) * b;
    let reorth = |n: u64, j: u64| (passes * 4 * n * j + 3 * n, (passes * (j + 2) * n + 3 * n) * b);

    let mut out = Vec::with_capacity(4 * k + 2);
    out.push(kernel(StageKind::Matvec, 0, mv_flops, mv_bytes, cfg));
    out.push(kernel(
        StageKind::Normalization,
        0,
        3 * (n1 + n2),
        3 * (n1 + n2) * b,
        cfg,
    ));
    for j in 1..=k {
        let (vf, vb) = reorth(n2, j as u64);
        let (uf, ub) = reorth(n1, j as u64);
        out.push(kernel(StageKind::Matvec, j, mv_flops, mv_bytes, cfg));
        out.push(kernel(StageKind::ReorthV, j, vf, vb, cfg));
        out.push(kernel(StageKind::Matvec, j, mv_flops, mv_bytes, cfg));
        out.push(kernel(StageKind::ReorthU, j, uf, ub, cfg));
    }
    Ok(out)
}

/// Roofline latency of [`baseline_kernels`], in baseline clock cycles.
///
/// `cycles_total` includes launch overheads, which have no column of their
/// own; reduction and broadcast are zero. The bound class describes the
/// reorthogonalization kernels when `k > 0`.
pub fn baseline_model(seq: usize, hidden: usize, k: usize, cfg: &BaselineConfig) -> Result<LatencyReport, SimError> {
    let kernels = baseline_kernels(seq, hidden, k, cfg)?;
    let clock = cfg.clock_hz;
    let mut r = LatencyReport::default();
    let (mut reorth_mem, mut reorth_comp) = (0.0, 0.0);
    let mut flops = 0u64;
    for kn in &kernels {
        let comp = kn.flops as f64 / cfg.peak_flops * clock;
        let mem = kn.bytes as f64 / cfg.mem_bandwidth * clock;
        r.cycles_compute += comp;
        r.cycles_memory += mem;
        r.cycles_total += kn.seconds * clock;
        flops += kn.flops;
        if matches!(kn.kind, StageKind::ReorthU | StageKind::ReorthV) {
            reorth_mem += mem;
            reorth_comp += comp;
        }
    }
    r.bound_class = if k == 0 {
        BoundClass::classify(r.cycles_memory, r.cycles_compute)
    } else {
        BoundClass::classify(reorth_mem, reorth_comp)
    };
    r.energy_est = EnergyEstimate {
        mac_ops: flops / 2,
        ..EnergyEstimate::default()
    };
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compute_heavy_limb() {
        let cfg = BaselineConfig::default();
        let t = roofline_seconds(1_000_000_000_000, 1000, &cfg);
        assert_eq!(t, 1e12 / cfg.peak_flops + cfg.kernel_launch_overhead);
    }

    #[test]
    fn bandwidth_heavy_limb() {
        let cfg = BaselineConfig::default();
        let t = roofline_seconds(10, 1_000_000_000, &cfg);
        assert_eq!(t, 1e9 / cfg.mem_bandwidth + cfg.kernel_launch_overhead);
    }

    #[test]
    fn kernel_count() {
        let cfg = BaselineConfig::default();
        for k in [0, 1, 10] {
            assert_eq!(baseline_kernels(64, 32, k, &cfg).unwrap().len(), 4 * k + 2);
        }
    }
}
