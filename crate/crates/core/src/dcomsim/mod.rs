//! Analytical latency and energy model of a clustered decomposition
//! accelerator, plus a roofline model of a GPU baseline.
//!
//! Every stage is costed in closed form:
//!
//! ```text
//! stage cycles = max(memory, compute) + reduction + broadcast
//! ```
//!
//! Memory streaming overlaps compute; tree reductions and the global-memory
//! broadcast sit on the critical path. A run is the sum of its stages.
//!
//! Reorthogonalization is mapped with an expansion factor `f`: each length-`n`
//! dot product is cut into `f` local segments of width `⌈n/f⌉`, whose partial
//! sums are exchanged through the small global memory, and the downstream
//! multiply-subtract is replicated in each of the `f` groups. Larger `f`
//! shortens reduction trees and brings more bank columns online at the price
//! of replicated MACs, moving the kernel from memory-bound to compute-bound.

mod baseline;
mod energy;
mod model;

pub use baseline::{baseline_kernels, baseline_model, roofline_seconds, BaselineConfig, KernelEstimate};
pub use energy::{estimate_area_power, global_reduction_energy, AreaConstants, AreaPower, EnergyConstants};
pub use model::{
    lanczos_stages, map_reorth, simulate_lanczos, simulate_reorth, MappingPlan, Stage, StageKind, REORTH_PASSES,
};

use std::io::Write;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("expansion factor {f} infeasible: must lie in [1, {max}]")]
    Infeasible { f: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Accelerator geometry and calibrated timing constants.
///
/// The defaults describe a 16×16 array of clusters, each with 64 MACs in an
/// 8×8 grid and its own memory bank. Bank bandwidth, broadcast latency and
/// clock were tuned once so that rank-10 Lanczos on a 4096×4096 prompt is
/// balanced at `f = 8`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareConfig {
    pub clusters_x: usize,
    pub clusters_y: usize,
    pub macs_per_cluster: usize,
    pub clock_hz: f64,
    pub bank_bandwidth_bytes_per_cycle: f64,
    pub global_broadcast_latency_cycles: f64,
    pub bytes_per_element: usize,
    pub energy: EnergyConstants,
    pub area: AreaConstants,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            clusters_x: 16,
            clusters_y: 16,
            macs_per_cluster: 64,
            clock_hz: 1.0e9,
            bank_bandwidth_bytes_per_cycle: 32.0,
            global_broadcast_latency_cycles: 8.0,
            bytes_per_element: 2,
            energy: EnergyConstants::default(),
            area: AreaConstants::default(),
        }
    }
}

impl HardwareConfig {
    pub fn clusters(&self) -> usize {
        self.clusters_x * self.clusters_y
    }

    pub fn total_macs(&self) -> usize {
        self.clusters() * self.macs_per_cluster
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let counts = [
            self.clusters_x,
            self.clusters_y,
            self.macs_per_cluster,
            self.bytes_per_element,
        ];
        let rates = [self.clock_hz, self.bank_bandwidth_bytes_per_cycle];
        if counts.contains(&0) || rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(SimError::InvalidConfig(format!(
                "non-positive hardware parameter in {self:?}"
            )));
        }
        if !(self.global_broadcast_latency_cycles >= 0.0) {
            return Err(SimError::InvalidConfig("broadcast latency must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundClass {
    MemoryBound,
    ComputeBound,
    Balanced,
}

impl BoundClass {
    /// Memory-bound or compute-bound when one side exceeds the other by more
    /// than 25%.
    pub fn classify(memory: f64, compute: f64) -> Self {
        if memory > 1.25 * compute {
            BoundClass::MemoryBound
        } else if compute > 1.25 * memory {
            BoundClass::ComputeBound
        } else {
            BoundClass::Balanced
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BoundClass::MemoryBound => "memory-bound",
            BoundClass::ComputeBound => "compute-bound",
            BoundClass::Balanced => "balanced",
        }
    }
}

/// Activity counters priced by [`EnergyConstants`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub mac_ops: u64,
    pub local_bank_bytes: u64,
    pub local_link_transfers: u64,
    pub global_transfers: u64,
    /// Dynamic energy in picojoules.
    pub dynamic_pj: f64,
}

impl EnergyEstimate {
    pub(crate) fn priced(
        mac_ops: u64,
        local_bank_bytes: u64,
        local_link_transfers: u64,
        global_transfers: u64,
        e: &EnergyConstants,
    ) -> Self {
        let dynamic_pj = mac_ops as f64 * e.mac_pj
            + local_bank_bytes as f64 * e.bank_byte_pj
            + local_link_transfers as f64 * e.local_link_pj
            + global_transfers as f64 * e.global_transfer_pj;
        Self {
            mac_ops,
            local_bank_bytes,
            local_link_transfers,
            global_transfers,
            dynamic_pj,
        }
    }

    /// Energy spent moving data between MACs, excluding arithmetic and bank
    /// reads.
    pub fn interconnect_pj(&self, e: &EnergyConstants) -> f64 {
        self.local_link_transfers as f64 * e.local_link_pj + self.global_transfers as f64 * e.global_transfer_pj
    }
}

impl AddAssign for EnergyEstimate {
    fn add_assign(&mut self, o: Self) {
        self.mac_ops += o.mac_ops;
        self.local_bank_bytes += o.local_bank_bytes;
        self.local_link_transfers += o.local_link_transfers;
        self.global_transfers += o.global_transfers;
        self.dynamic_pj += o.dynamic_pj;
    }
}

/// Cycle breakdown of one stage or a sum of stages.
///
/// `cycles_total` is the sum over stages of
/// `max(cycles_memory, cycles_compute) + cycles_reduction + cycles_broadcast`,
/// so it is at least the total of the serialized terms but may be less than
/// the sum of all four columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub cycles_compute: f64,
    pub cycles_memory: f64,
    pub cycles_reduction: f64,
    pub cycles_broadcast: f64,
    pub cycles_total: f64,
    pub energy_est: EnergyEstimate,
    pub bound_class: BoundClass,
}

impl Default for LatencyReport {
    fn default() -> Self {
        Self {
            cycles_compute: 0.0,
            cycles_memory: 0.0,
            cycles_reduction: 0.0,
            cycles_broadcast: 0.0,
            cycles_total: 0.0,
            energy_est: EnergyEstimate::default(),
            bound_class: BoundClass::Balanced,
        }
    }
}

impl LatencyReport {
    pub(crate) fn stage(memory: f64, compute: f64, reduction: f64, broadcast: f64, energy: EnergyEstimate) -> Self {
        Self {
            cycles_compute: compute,
            cycles_memory: memory,
            cycles_reduction: reduction,
            cycles_broadcast: broadcast,
            cycles_total: memory.max(compute) + reduction + broadcast,
            energy_est: energy,
            bound_class: BoundClass::classify(memory, compute),
        }
    }

    /// Adds another report's cycles and counters; the bound class is left
    /// to the caller.
    pub(crate) fn accumulate(&mut self, o: &LatencyReport) {
        self.cycles_compute += o.cycles_compute;
        self.cycles_memory += o.cycles_memory;
        self.cycles_reduction += o.cycles_reduction;
        self.cycles_broadcast += o.cycles_broadcast;
        self.cycles_total += o.cycles_total;
        self.energy_est += o.energy_est;
    }

    pub fn seconds(&self, clock_hz: f64) -> f64 {
        self.cycles_total / clock_hz
    }
}

/// CSV with columns `f, cycles_compute, cycles_memory, cycles_reduction,
/// cycles_broadcast, cycles_total, bound_class`.
pub fn write_sweep_csv<W: Write>(rows: &[(usize, LatencyReport)], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "f",
        "cycles_compute",
        "cycles_memory",
        "cycles_reduction",
        "cycles_broadcast",
        "cycles_total",
        "bound_class",
    ])?;
    for (f, r) in rows {
        out.write_record([
            f.to_string(),
            r.cycles_compute.to_string(),
            r.cycles_memory.to_string(),
            r.cycles_reduction.to_string(),
            r.cycles_broadcast.to_string(),
            r.cycles_total.to_string(),
            r.bound_class.as_str().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
