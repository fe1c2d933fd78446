use serde::{Deserialize, Serialize};

use super::{BoundClass, EnergyEstimate, HardwareConfig, LatencyReport, SimError};

/// Orthogonalization passes per new Krylov vector.
pub const REORTH_PASSES: usize = 2;

/// Placement of one reorthogonalization pass: `j` dot products of length `n`
/// followed by the multiply-subtract `z -= Q c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPlan {
    pub expansion_factor: usize,
    pub n: usize,
    pub j: usize,
    /// Elements each local reduction tree sums, `⌈n / f⌉`.
    pub segment_width: usize,
    pub groups: usize,
    /// Copies of the downstream multiply-subtract.
    pub replication: usize,
    /// Bank columns streaming in parallel, `min(f, clusters_y)`.
    pub active_bank_columns: usize,
}

impl MappingPlan {
    pub fn reduction_depth(&self) -> usize {
        ceil_log2(self.segment_width)
    }

    /// MACs of the replicated multiply-subtract stage.
    pub fn replicated_macs(&self) -> u64 {
        (self.replication * self.n * self.j) as u64
    }

    /// MACs of the dot-product stage, which expansion does not duplicate.
    pub fn reduction_macs(&self) -> u64 {
        (self.n * self.j) as u64
    }

    /// Partial sums exchanged through global memory: each group writes its
    /// `f` partials and reads everyone else's.
    pub fn global_transfers(&self) -> u64 {
        let f = self.groups as u64;
        self.j as u64 * (f + f * f)
    }

    /// Pairwise additions inside the local trees.
    pub fn local_link_transfers(&self) -> u64 {
        (self.j * (self.n - self.groups.min(self.n))) as u64
    }
}

fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Splits a length-`n` reorthogonalization against `j` basis vectors into
/// `f` segments. `f = 1` is the unexpanded graph and `f = n` full expansion.
pub fn map_reorth(n: usize, j: usize, f: usize, hw: &HardwareConfig) -> Result<MappingPlan, SimError> {
    hw.validate()?;
    if n == 0 {
        return Err(SimError::InvalidConfig("vector length must be positive".into()));
    }
    let max = n.min(hw.total_macs());
    if f == 0 || f > max {
        return Err(SimError::Infeasible { f, max });
    }
    Ok(MappingPlan {
        expansion_factor: f,
        n,
        j,
        segment_width: n.div_ceil(f),
        groups: f,
        replication: f,
        active_bank_columns: f.min(hw.clusters_y),
    })
}

/// One reorthogonalization pass.
///
/// * memory: basis plus read and write of `z`, `(j + 2)·n` elements, over
///   `active_bank_columns · clusters_x` banks
/// * compute: replicated and reduction MACs over every MAC in the array
/// * reduction: `⌈log₂(segment width)⌉`
/// * broadcast: one global write+read round
pub fn simulate_reorth(plan: &MappingPlan, hw: &HardwareConfig) -> LatencyReport {
    let bytes = ((plan.j + 2) * plan.n * hw.bytes_per_element) as u64;
    let bandwidth = (plan.active_bank_columns * hw.clusters_x) as f64 * hw.bank_bandwidth_bytes_per_cycle;
    let macs = plan.replicated_macs() + plan.reduction_macs();
    let energy = EnergyEstimate::priced(
        macs,
        bytes,
        plan.local_link_transfers(),
        plan.global_transfers(),
        &hw.energy,
    );
    LatencyReport::stage(
        bytes as f64 / bandwidth,
        macs as f64 / hw.total_macs() as f64,
        plan.reduction_depth() as f64,
        hw.global_broadcast_latency_cycles,
        energy,
    )
}

/// `outputs` dot products of length `inner`, streaming the whole matrix from
/// every bank and reducing across clusters.
fn matvec(outputs: usize, inner: usize, hw: &HardwareConfig) -> LatencyReport {
    let elems = (outputs * inner) as u64;
    let bytes = elems * hw.bytes_per_element as u64;
    let bandwidth = hw.clusters() as f64 * hw.bank_bandwidth_bytes_per_cycle;
    let links = (outputs * inner.saturating_sub(1)) as u64;
    let energy = EnergyEstimate::priced(elems, bytes, links, outputs as u64, &hw.energy);
    LatencyReport::stage(
        bytes as f64 / bandwidth,
        elems as f64 / hw.total_macs() as f64,
        ceil_log2(hw.clusters().min(inner)) as f64,
        hw.global_broadcast_latency_cycles,
        energy,
    )
}

/// Norm (one read) and scaling (read and write) of a length-`n` vector.
fn normalization(n: usize, hw: &HardwareConfig) -> LatencyReport {
    let bytes = (3 * n * hw.bytes_per_element) as u64;
    let bandwidth = hw.clusters() as f64 * hw.bank_bandwidth_bytes_per_cycle;
    let energy = EnergyEstimate::priced(2 * n as u64, bytes, n.saturating_sub(1) as u64, 1, &hw.energy);
    LatencyReport::stage(
        bytes as f64 / bandwidth,
        (2 * n) as f64 / hw.total_macs() as f64,
        ceil_log2(n) as f64,
        hw.global_broadcast_latency_cycles,
        energy,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Matvec,
    ReorthU,
    ReorthV,
    Normalization,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    /// 0 for initialization.
    pub iteration: usize,
    pub report: LatencyReport,
}

/// Every stage of rank-`k` bidiagonalization of one `seq × hidden` prompt,
/// in execution order.
pub fn lanczos_stages(
    seq: usize,
    hidden: usize,
    k: usize,
    f: usize,
    hw: &HardwareConfig,
) -> Result<Vec<Stage>, SimError> {
    hw.validate()?;
    if seq == 0 || hidden == 0 {
        return Err(SimError::InvalidConfig("prompt dimensions must be positive".into()));
    }
    // validates f against both vector lengths even when k = 0
    map_reorth(seq, 1, f, hw)?;
    map_reorth(hidden, 1, f, hw)?;
    let (n1, n2) = (seq, hidden);
    let stage = |kind, iteration, report| Stage {
        kind,
        iteration,
        report,
    };
    let mut out = vec![
        stage(StageKind::Normalization, 0, normalization(n2, hw)),
        stage(StageKind::Matvec, 0, matvec(n1, n2, hw)),
        stage(StageKind::Normalization, 0, normalization(n1, hw)),
    ];
    for j in 1..=k {
        out.push(stage(StageKind::Matvec, j, matvec(n2, n1, hw)));
        let v_pass = simulate_reorth(&map_reorth(n2, j, f, hw)?, hw);
        out.extend((0..REORTH_PASSES).map(|_| stage(StageKind::ReorthV, j, v_pass)));
        out.push(stage(StageKind::Normalization, j, normalization(n2, hw)));
        out.push(stage(StageKind::Matvec, j, matvec(n1, n2, hw)));
        let u_pass = simulate_reorth(&map_reorth(n1, j, f, hw)?, hw);
        out.extend((0..REORTH_PASSES).map(|_| stage(StageKind::ReorthU, j, u_pass)));
        out.push(stage(StageKind::Normalization, j, normalization(n1, hw)));
    }
    Ok(out)
}

/// Sum of [`lanczos_stages`]. The bound class describes the
/// reorthogonalization stages, the only ones the expansion factor changes;
/// with `k = 0` it describes the whole run.
pub fn simulate_lanczos(
    seq: usize,
    hidden: usize,
    k: usize,
    f: usize,
    hw: &HardwareConfig,
) -> Result<LatencyReport, SimError> {
    let stages = lanczos_stages(seq, hidden, k, f, hw)?;
    let mut total = LatencyReport::default();
    let mut reorth = LatencyReport::default();
    for s in &stages {
        total.accumulate(&s.report);
        if matches!(s.kind, StageKind::ReorthU | StageKind::ReorthV) {
            reorth.accumulate(&s.report);
        }
    }
    let basis = if k == 0 { &total } else { &reorth };
    total.bound_class = BoundClass::classify(basis.cycles_memory, basis.cycles_compute);
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw() -> HardwareConfig {
        HardwareConfig::default()
    }

    #[test]
    fn unexpanded_plan() {
        let p = map_reorth(4096, 10, 1, &hw()).unwrap();
        assert_eq!((p.groups, p.replication, p.segment_width), (1, 1, 4096));
    }

    #[test]
    fn eight_segments_of_512() {
        let p = map_reorth(4096, 10, 8, &hw()).unwrap();
        assert_eq!((p.groups, p.segment_width), (8, 512));
    }

    #[test]
    fn full_expansion_has_no_tree() {
        let p = map_reorth(1024, 3, 1024, &hw()).unwrap();
        assert_eq!(p.reduction_depth(), 0);
        assert_eq!(p.replication, 1024);
    }

    #[test]
    fn infeasible_factor() {
        assert!(matches!(
            map_reorth(64, 1, 128, &hw()),
            Err(SimError::Infeasible { max: 64, .. })
        ));
        assert!(matches!(map_reorth(64, 1, 0, &hw()), Err(SimError::Infeasible { .. })));
        let small = HardwareConfig {
            clusters_x: 1,
            clusters_y: 1,
            macs_per_cluster: 4,
            ..hw()
        };
        assert!(map_reorth(64, 1, 8, &small).is_err());
    }

    #[test]
    fn segment_of_64_reduces_in_6() {
        let p = map_reorth(512, 4, 8, &hw()).unwrap();
        assert_eq!(p.segment_width, 64);
        assert_eq!(simulate_reorth(&p, &hw()).cycles_reduction, 6.0);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!([1, 2, 3, 4, 5, 64, 65].map(ceil_log2), [0, 1, 2, 2, 3, 6, 7]);
    }

    #[test]
    fn zero_rank_is_initialization_only() {
        let s = lanczos_stages(64, 32, 0, 1, &hw()).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|s| s.iteration == 0));
    }
}
