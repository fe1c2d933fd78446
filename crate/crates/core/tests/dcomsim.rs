use dcom_core::dcomsim::{
    baseline_kernels, baseline_model, estimate_area_power, global_reduction_energy, lanczos_stages, map_reorth,
    roofline_seconds, simulate_lanczos, simulate_reorth, write_sweep_csv, BaselineConfig, BoundClass, HardwareConfig,
    SimError, StageKind,
};
use proptest::prelude::*;

const FACTORS: [usize; 6] = [1, 2, 4, 8, 16, 32];

fn ceil_log2(x: usize) -> f64 {
    (x as f64).log2().ceil().max(0.0)
}

#[test]
fn default_sweep_bottoms_out_at_eight() {
    let hw = HardwareConfig::default();
    let totals: Vec<f64> = FACTORS
        .iter()
        .map(|&f| simulate_lanczos(4096, 4096, 10, f, &hw).unwrap().cycles_total)
        .collect();
    let best = (0..totals.len())
        .min_by(|&a, &b| totals[a].total_cmp(&totals[b]))
        .unwrap();
    assert_eq!(FACTORS[best], 8, "{totals:?}");
    assert!(totals[..=best].windows(2).all(|w| w[0] > w[1]));
    assert!(totals[best..].windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn bound_class_flips_once() {
    let hw = HardwareConfig::default();
    let classes: Vec<BoundClass> = FACTORS
        .iter()
        .map(|&f| simulate_lanczos(4096, 4096, 10, f, &hw).unwrap().bound_class)
        .collect();
    for (&f, c) in FACTORS.iter().zip(&classes) {
        match f {
            f if f < 8 => assert_eq!(*c, BoundClass::MemoryBound, "f = {f}"),
            f if f > 8 => assert_eq!(*c, BoundClass::ComputeBound, "f = {f}"),
            _ => assert_ne!(*c, BoundClass::MemoryBound),
        }
    }
}

#[test]
fn unexpanded_pass_matches_hand_count() {
    let hw = HardwareConfig::default();
    let (n, j) = (4096, 10);
    let plan = map_reorth(n, j, 1, &hw).unwrap();
    assert_eq!((plan.groups, plan.replication, plan.segment_width), (1, 1, n));
    let r = simulate_reorth(&plan, &hw);
    let mem = ((j + 2) * n * 2) as f64 / (hw.clusters_x as f64 * hw.bank_bandwidth_bytes_per_cycle);
    let comp = (2 * n * j) as f64 / hw.total_macs() as f64;
    assert_eq!(r.cycles_memory, mem);
    assert_eq!(r.cycles_compute, comp);
    assert_eq!(r.cycles_reduction, ceil_log2(n));
    assert_eq!(r.cycles_broadcast, hw.global_broadcast_latency_cycles);
    assert_eq!(
        r.cycles_total,
        mem.max(comp) + ceil_log2(n) + hw.global_broadcast_latency_cycles
    );
}

#[test]
fn mapping_examples() {
    let hw = HardwareConfig::default();
    let p = map_reorth(4096, 10, 8, &hw).unwrap();
    assert_eq!((p.groups, p.segment_width), (8, 512));
    let full = map_reorth(4096, 10, 4096, &hw).unwrap();
    assert_eq!((full.reduction_depth(), full.replication), (0, 4096));
    let seg64 = map_reorth(4096, 10, 64, &hw).unwrap();
    assert_eq!(simulate_reorth(&seg64, &hw).cycles_reduction, 6.0);
    assert!(matches!(map_reorth(64, 1, 65, &hw), Err(SimError::Infeasible { .. })));
    assert!(matches!(map_reorth(64, 1, 0, &hw), Err(SimError::Infeasible { .. })));
}

#[test]
fn doubling_bank_bandwidth_halves_memory_cycles() {
    let hw = HardwareConfig::default();
    let fast = HardwareConfig {
        bank_bandwidth_bytes_per_cycle: 2.0 * hw.bank_bandwidth_bytes_per_cycle,
        ..hw.clone()
    };
    for f in FACTORS {
        let plan = map_reorth(4096, 10, f, &hw).unwrap();
        let a = simulate_reorth(&plan, &hw).cycles_memory;
        let b = simulate_reorth(&map_reorth(4096, 10, f, &fast).unwrap(), &fast).cycles_memory;
        assert_eq!(a, 2.0 * b);
    }
}

#[test]
fn work_is_conserved_across_expansion() {
    let hw = HardwareConfig::default();
    let base = map_reorth(2048, 7, 1, &hw).unwrap();
    for f in FACTORS {
        let p = map_reorth(2048, 7, f, &hw).unwrap();
        assert_eq!(p.replicated_macs(), f as u64 * base.replicated_macs());
        assert_eq!(p.reduction_macs(), base.reduction_macs());
    }
}

#[test]
fn halving_clusters_doubles_compute_bound_latency() {
    let hw = HardwareConfig::default();
    let half = HardwareConfig {
        clusters_y: hw.clusters_y / 2,
        ..hw.clone()
    };
    let f = 256;
    let a = simulate_reorth(&map_reorth(4096, 10, f, &hw).unwrap(), &hw);
    let b = simulate_reorth(&map_reorth(4096, 10, f, &half).unwrap(), &half);
    assert_eq!(a.bound_class, BoundClass::ComputeBound);
    let ratio = b.cycles_total / a.cycles_total;
    assert!((ratio - 2.0).abs() <= 0.2, "{ratio}");
}

#[test]
fn latency_grows_with_rank() {
    let hw = HardwareConfig::default();
    let cycles: Vec<f64> = (0..=20)
        .map(|k| simulate_lanczos(1024, 768, k, 8, &hw).unwrap().cycles_total)
        .collect();
    assert!(cycles.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_rank_costs_only_initialization() {
    let hw = HardwareConfig::default();
    let stages = lanczos_stages(512, 256, 0, 4, &hw).unwrap();
    assert_eq!(stages.len(), 3);
    assert!(stages.iter().all(|s| s.iteration == 0));
    let r = simulate_lanczos(512, 256, 0, 4, &hw).unwrap();
    let sum: f64 = stages.iter().map(|s| s.report.cycles_total).sum();
    assert_eq!(r.cycles_total, sum);
}

#[test]
fn totals_are_stage_sums() {
    let hw = HardwareConfig::default();
    let stages = lanczos_stages(4096, 4096, 10, 8, &hw).unwrap();
    let r = simulate_lanczos(4096, 4096, 10, 8, &hw).unwrap();
    let sum: f64 = stages.iter().map(|s| s.report.cycles_total).sum();
    assert!((r.cycles_total - sum).abs() <= 1e-9 * sum);
    let reorth = stages
        .iter()
        .filter(|s| matches!(s.kind, StageKind::ReorthU | StageKind::ReorthV))
        .count();
    assert_eq!(reorth, 2 * 2 * 10);
}

#[test]
fn speedup_over_baseline() {
    let hw = HardwareConfig::default();
    let cfg = BaselineConfig::default();
    let ours = simulate_lanczos(4096, 4096, 10, 8, &hw).unwrap().seconds(hw.clock_hz);
    let theirs = baseline_model(4096, 4096, 10, &cfg).unwrap().seconds(cfg.clock_hz);
    let speedup = theirs / ours;
    assert!(speedup >= 6.0, "{speedup}");
    assert!((speedup - 8.0).abs() <= 0.3 * 8.0, "{speedup}");
}

#[test]
fn baseline_reorth_kernels_are_memory_bound() {
    let cfg = BaselineConfig::default();
    let kernels = baseline_kernels(4096, 4096, 10, &cfg).unwrap();
    assert_eq!(kernels.len(), 4 * 10 + 2);
    for k in kernels
        .iter()
        .filter(|k| matches!(k.kind, StageKind::ReorthU | StageKind::ReorthV))
    {
        let intensity = k.flops as f64 / k.bytes as f64;
        assert!(intensity < cfg.ridge_point());
        assert_eq!(k.bound, BoundClass::MemoryBound);
    }
}

#[test]
fn roofline_limbs() {
    let cfg = BaselineConfig::default();
    let heavy = roofline_seconds(1_000_000_000_000, 1_000, &cfg);
    assert_eq!(heavy, 1e12 / cfg.peak_flops + cfg.kernel_launch_overhead);
    let light = roofline_seconds(1_000, 1_000_000_000, &cfg);
    assert_eq!(light, 1e9 / cfg.mem_bandwidth + cfg.kernel_launch_overhead);
}

#[test]
fn local_reduction_saves_interconnect_energy() {
    let hw = HardwareConfig::default();
    let (n, j) = (4096, 10);
    let ours = simulate_reorth(&map_reorth(n, j, 8, &hw).unwrap(), &hw).energy_est;
    let global = global_reduction_energy(n, j, &hw);
    let interconnect = |e: &dcom_core::dcomsim::EnergyEstimate| {
        e.local_link_transfers as f64 * hw.energy.local_link_pj
            + e.global_transfers as f64 * hw.energy.global_transfer_pj
    };
    assert!(interconnect(&ours) < interconnect(&global));
}

#[test]
fn area_and_energy_are_linear() {
    let hw = HardwareConfig::default();
    let wide = HardwareConfig {
        clusters_x: 2 * hw.clusters_x,
        ..hw.clone()
    };
    let zero = simulate_lanczos(64, 64, 0, 1, &hw).unwrap();
    let a = estimate_area_power(&hw, &zero).area_units;
    let b = estimate_area_power(&wide, &zero).area_units;
    assert!((b - 2.0 * a).abs() <= 1e-9 * a);
    let idle = estimate_area_power(&hw, &Default::default());
    assert_eq!(idle.energy_units, 0.0);
}

#[test]
fn sweep_csv_layout() {
    let hw = HardwareConfig::default();
    let rows: Vec<_> = FACTORS
        .iter()
        .map(|&f| (f, simulate_lanczos(4096, 4096, 10, f, &hw).unwrap()))
        .collect();
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "f,cycles_compute,cycles_memory,cycles_reduction,cycles_broadcast,cycles_total,bound_class"
    );
    assert_eq!(lines.count(), FACTORS.len());
    assert!(text.contains("8,22010,86682,792,664,88138,balanced"));
}

#[test]
fn configs_round_trip_through_json() {
    let hw = HardwareConfig::default();
    let text = serde_json::to_string(&hw).unwrap();
    let back: HardwareConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, hw);
    let partial: HardwareConfig = serde_json::from_str(r#"{"clusters_x": 8}"#).unwrap();
    assert_eq!(partial.clusters_x, 8);
    assert_eq!(partial.clusters_y, hw.clusters_y);
    let r = simulate_lanczos(256, 256, 2, 2, &hw).unwrap();
    let v = serde_json::to_value(r).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    for k in [
        "cycles_compute",
        "cycles_memory",
        "cycles_reduction",
        "cycles_broadcast",
        "cycles_total",
        "energy_est",
        "bound_class",
    ] {
        assert!(keys.contains(&k), "{k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_trades_memory_for_compute(
        n in 64usize..8192,
        j in 1usize..32,
        cx in 1usize..32,
        cy in 1usize..32,
        macs in 1usize..128,
        bw in 1.0f64..128.0,
    ) {
        let hw = HardwareConfig {
            clusters_x: cx,
            clusters_y: cy,
            macs_per_cluster: macs,
            bank_bandwidth_bytes_per_cycle: bw,
            ..HardwareConfig::default()
        };
        let mut prev: Option<(f64, f64)> = None;
        for f in FACTORS.iter().copied().filter(|&f| f <= n.min(hw.total_macs())) {
            let r = simulate_reorth(&map_reorth(n, j, f, &hw).unwrap(), &hw);
            if let Some((mem, comp)) = prev {
                prop_assert!(r.cycles_memory <= mem);
                prop_assert!(r.cycles_compute >= comp);
            }
            prev = Some((r.cycles_memory, r.cycles_compute));
        }
    }
}
