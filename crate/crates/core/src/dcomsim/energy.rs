//! First-order energy and area. The constants are relative units chosen so
//! that a partial sum moved through a local tree or read from a nearby bank
//! costs less than one sent over the global bus; they are not synthesis
//! results.

use serde::{Deserialize, Serialize};

use super::{EnergyEstimate, HardwareConfig, LatencyReport};

/// Picojoules per counted event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyConstants {
    pub mac_pj: f64,
    pub bank_byte_pj: f64,
    pub local_link_pj: f64,
    pub global_transfer_pj: f64,
}

impl Default for EnergyConstants {
    fn default() -> Self {
        Self {
            mac_pj: 0.5,
            bank_byte_pj: 0.25,
            local_link_pj: 0.3,
            global_transfer_pj: 4.0,
        }
    }
}

/// Area per unit, in arbitrary units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AreaConstants {
    pub mac: f64,
    /// One bank per cluster.
    pub bank: f64,
    /// One reduction-tree adder per MAC.
    pub tree_adder: f64,
    /// One global-memory port per cluster column.
    pub global_port: f64,
}

impl Default for AreaConstants {
    fn default() -> Self {
        Self {
            mac: 1.0,
            bank: 40.0,
            tree_adder: 0.4,
            global_port: 25.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaPower {
    pub area_units: f64,
    pub energy_units: f64,
}

/// Area from unit counts, energy from the activity counters of `activity`.
/// The energy is recomputed from the counters with `hw`'s constants.
pub fn estimate_area_power(hw: &HardwareConfig, activity: &LatencyReport) -> AreaPower {
    let a = &hw.area;
    let macs = hw.total_macs() as f64;
    let area_units =
        macs * (a.mac + a.tree_adder) + hw.clusters() as f64 * a.bank + hw.clusters_x as f64 * a.global_port;
    let e = &activity.energy_est;
    let energy_units = EnergyEstimate::priced(
        e.mac_ops,
        e.local_bank_bytes,
        e.local_link_transfers,
        e.global_transfers,
        &hw.energy,
    )
    .dynamic_pj;
    AreaPower {
        area_units,
        energy_units,
    }
}

/// Counters for the same reorthogonalization pass when every product is
/// summed over the global bus instead of local trees.
pub fn global_reduction_energy(n: usize, j: usize, hw: &HardwareConfig) -> EnergyEstimate {
    let nj = (n * j) as u64;
    let bytes = ((j + 2) * n * hw.bytes_per_element) as u64;
    EnergyEstimate::priced(2 * nj, bytes, 0, nj, &hw.energy)
}
