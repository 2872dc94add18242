//! Figures of merit derived from a token-step [`CostResult`].

use serde::{Deserialize, Serialize};

use crate::config::HardwareSpec;
use crate::cost::{Category, CostResult};
use crate::engine::{breakdown_percentages, simulate_graph, ArchMode};
use crate::error::{Error, Result};
use crate::systolic::Dataflow;
use crate::workload::{build_op_graph, mac_counts, ModelSpec, OpGraph};

pub fn tokens_per_second(cost: &CostResult) -> Result<f64> {
    let t = cost.total_latency();
    if !(t > 0.0) {
        return Err(Error::ZeroTotal("tokens per second"));
    }
    Ok(1.0 / t)
}

pub fn tokens_per_joule(cost: &CostResult) -> Result<f64> {
    let e = cost.total_energy();
    if !(e > 0.0) {
        return Err(Error::ZeroTotal("tokens per joule"));
    }
    Ok(1.0 / e)
}

/// Words generated on one battery charge.
pub fn words_per_battery(cost: &CostResult, battery_joules: f64, tokens_per_word: f64) -> Result<f64> {
    Ok(battery_joules * tokens_per_joule(cost)? / tokens_per_word)
}

/// `(GOPS, GOPS/W)` with `ops_per_mac` operations credited per MAC.
pub fn gops_and_gops_per_watt(
    graph: &OpGraph,
    cost: &CostResult,
    ops_per_mac: f64,
) -> Result<(f64, f64)> {
    let ops = ops_per_mac * mac_counts(graph).total() as f64;
    let (t, e) = (cost.total_latency(), cost.total_energy());
    if !(t > 0.0) {
        return Err(Error::ZeroTotal("GOPS"));
    }
    if !(e > 0.0) {
        return Err(Error::ZeroTotal("GOPS/W"));
    }
    Ok((ops / (t * 1e9), ops / (e * 1e9)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub context_len: u64,
    pub mode: ArchMode,
    pub dataflow: Dataflow,
    pub tokens_per_s: f64,
    pub tokens_per_joule: f64,
    pub words_per_battery: f64,
    pub gops: f64,
    pub gops_per_watt: f64,
    /// Baseline latency over this run's latency (1 for the baseline itself).
    pub speedup_vs_tpu: f64,
    pub breakdown: Vec<(Category, f64)>,
    pub cost: CostResult,
}

impl SimReport {
    pub fn average_power_w(&self) -> f64 {
        self.cost.total_energy() / self.cost.total_latency()
    }
}

/// Derives every metric for an already simulated step.
pub fn report_from_cost(
    graph: &OpGraph,
    hw: &HardwareSpec,
    mode: ArchMode,
    cost: CostResult,
    baseline_latency: f64,
) -> Result<SimReport> {
    let (gops, gops_per_watt) = gops_and_gops_per_watt(graph, &cost, hw.system.ops_per_mac)?;
    Ok(SimReport {
        model: graph.model.name.clone(),
        context_len: graph.model.context_len,
        mode,
        dataflow: hw.tpu.dataflow,
        tokens_per_s: tokens_per_second(&cost)?,
        tokens_per_joule: tokens_per_joule(&cost)?,
        words_per_battery: words_per_battery(
            &cost,
            hw.system.battery_joules,
            hw.system.tokens_per_word,
        )?,
        gops,
        gops_per_watt,
        speedup_vs_tpu: baseline_latency / cost.total_latency(),
        breakdown: breakdown_percentages(&cost)?,
        cost,
    })
}

/// Simulates one `(model, mode)` pair and derives its report.
pub fn simulate_report(model: &ModelSpec, hw: &HardwareSpec, mode: ArchMode) -> Result<SimReport> {
    let graph = build_op_graph(model)?;
    let cost = simulate_graph(&graph, hw, mode)?.total();
    let baseline = match mode {
        ArchMode::TpuOnly => cost.total_latency(),
        ArchMode::Hybrid => simulate_graph(&graph, hw, ArchMode::TpuOnly)?
            .total()
            .total_latency(),
    };
    report_from_cost(&graph, hw, mode, cost, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_category(latency: f64, energy: f64) -> CostResult {
        CostResult::single(Category::Systolic, latency, energy)
    }

    #[test]
    fn ten_ms_is_100_tokens() {
        let tps = tokens_per_second(&one_category(0.01, 1.0)).unwrap();
        assert!((tps - 100.0).abs() < 1e-12);
    }

    #[test]
    fn halving_latency_doubles_throughput() {
        let mut c = CostResult::single(Category::Systolic, 0.3, 1.0);
        c.add_to(Category::Buffer, 0.1, 0.0);
        let before = tokens_per_second(&c).unwrap();
        let after = tokens_per_second(&c.scaled(0.5)).unwrap();
        assert!((after / before - 2.0).abs() < 1e-12);
    }

    #[test]
    fn battery_words() {
        // 10 tokens/J
        let c = one_category(1.0, 0.1);
        let words = words_per_battery(&c, 18_000.0, 1.5).unwrap();
        assert!((words - 120_000.0).abs() < 1e-6);
        let c = one_category(1.0, 18_000.0 / 1.5);
        assert!((words_per_battery(&c, 18_000.0, 1.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(words_per_battery(&one_category(1.0, 0.0), 18_000.0, 1.5).is_err());
    }

    #[test]
    fn gops_unit_case() {
        // 5e8 MACs · 2 ops = 1e9 ops in 1 s at 1 W.
        let model = ModelSpec::new("g", 1, 1, 1, 1, 1).unwrap();
        let mut graph = build_op_graph(&model).unwrap();
        graph.ops.truncate(1);
        if let crate::workload::Op::MatMul(mm) = &mut graph.ops[0] {
            mm.m = 500_000_000;
        }
        let (g, gw) = gops_and_gops_per_watt(&graph, &one_category(1.0, 1.0), 2.0).unwrap();
        assert_eq!((g, gw), (1.0, 1.0));
    }

    #[test]
    fn gops_ratio_is_power() {
        let model = ModelSpec::new("g", 8, 2, 16, 2, 4).unwrap();
        let graph = build_op_graph(&model).unwrap();
        let c = one_category(0.25, 3.0);
        let (g, gw) = gops_and_gops_per_watt(&graph, &c, 2.0).unwrap();
        assert!((g / gw - 12.0).abs() / 12.0 < 1e-12);
    }

    #[test]
    fn report_for_baseline_has_unit_speedup() {
        let m = ModelSpec::new("s", 64, 4, 128, 2, 32).unwrap();
        let r = simulate_report(&m, &HardwareSpec::default(), ArchMode::TpuOnly).unwrap();
        assert_eq!(r.speedup_vs_tpu, 1.0);
        let h = simulate_report(&m, &HardwareSpec::default(), ArchMode::Hybrid).unwrap();
        assert!(h.speedup_vs_tpu > 1.0);
        assert!(h.tokens_per_s >= r.tokens_per_s);
    }
}
