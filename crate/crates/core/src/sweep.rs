//! Grid sweeps and the comparison tables built on top of single runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::HardwareSpec;
use crate::engine::ArchMode;
use crate::error::{Error, Result};
use crate::metrics::simulate_report;
use crate::report::RunRecord;
use crate::systolic::{analytic_cycles, nfu_cycles, Dataflow, GemmShape, Residency, TileCost};
use crate::workload::{build_op_graph, mac_counts, ModelSpec, Op};

/// Simulates the full `models × ctx_lens × modes` grid.
///
/// Tuples run in parallel; records come back ordered by model (input
/// order), then context length, then mode.
pub fn run_sweep(
    models: &[ModelSpec],
    hw: &HardwareSpec,
    ctx_lens: &[u64],
    modes: &[ArchMode],
) -> Result<Vec<RunRecord>> {
    if models.is_empty() {
        return Err(Error::Empty("sweep needs at least one model"));
    }
    if ctx_lens.is_empty() {
        return Err(Error::Empty("sweep needs at least one context length"));
    }
    if modes.is_empty() {
        return Err(Error::Empty("sweep needs at least one mode"));
    }
    hw.validate()?;

    let mut ctx: Vec<u64> = ctx_lens.to_vec();
    ctx.sort_unstable();
    ctx.dedup();
    let mut modes: Vec<ArchMode> = modes.to_vec();
    modes.sort_unstable();
    modes.dedup();

    let tuples: Vec<(usize, u64, ArchMode)> = (0..models.len())
        .flat_map(|mi| {
            let modes = &modes;
            ctx.iter()
                .flat_map(move |&l| modes.iter().map(move |&mode| (mi, l, mode)))
        })
        .collect();

    let results: Vec<Result<RunRecord>> = tuples
        .par_iter()
        .map(|&(mi, l, mode)| {
            let model = &models[mi];
            model
                .with_context(l)
                .and_then(|m| simulate_report(&m, hw, mode))
                .map(|report| RunRecord::from_report(&report, hw.calibration))
                .map_err(|e| Error::Sweep {
                    model: model.name.clone(),
                    context_len: l,
                    mode: mode.to_string(),
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataflowRow {
    pub dataflow: Dataflow,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub total_cycles: u64,
    pub sram_reads_bytes: u64,
    pub sram_writes_bytes: u64,
}

/// Whole-step systolic cycles when every op runs on the array, per dataflow.
pub fn compare_dataflows(model: &ModelSpec, hw: &HardwareSpec) -> Result<Vec<DataflowRow>> {
    let graph = build_op_graph(model)?;
    Dataflow::ALL
        .iter()
        .map(|&df| {
            let tpu = hw.tpu.with_dataflow(df);
            let mut total = TileCost::default();
            for op in &graph.ops {
                match op {
                    Op::MatMul(mm) => {
                        let residency = if mm.role.is_attention() {
                            Residency::OnChip
                        } else {
                            Residency::Streamed
                        };
                        total += analytic_cycles(GemmShape::from(mm), &tpu, residency)?;
                    }
                    Op::Nonlinear(nl) => {
                        total.compute_cycles += nfu_cycles(nl.element_count, &tpu);
                    }
                }
            }
            Ok(DataflowRow {
                dataflow: df,
                compute_cycles: total.compute_cycles,
                stall_cycles: total.stall_cycles,
                total_cycles: total.total_cycles(),
                sram_reads_bytes: total.sram_reads_bytes,
                sram_writes_bytes: total.sram_writes_bytes,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionRow {
    pub model: String,
    pub context_len: u64,
    pub low_macs: u64,
    pub high_macs: u64,
    pub low_fraction: f64,
}

/// MAC split between 1-bit and 8-bit weights for each model and context length.
pub fn fraction_table(models: &[ModelSpec], ctx_lens: &[u64]) -> Result<Vec<FractionRow>> {
    let mut rows = Vec::with_capacity(models.len() * ctx_lens.len());
    for model in models {
        for &l in ctx_lens {
            let m = model.with_context(l)?;
            let counts = mac_counts(&build_op_graph(&m)?);
            rows.push(FractionRow {
                model: m.name.clone(),
                context_len: l,
                low_macs: counts.low,
                high_macs: counts.high,
                low_fraction: counts.low_fraction(),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{load_model, zoo_models};
    use crate::engine::simulate_token;

    #[test]
    fn unit_model_dataflows_positive() {
        let m = ModelSpec::new("unit", 1, 1, 1, 1, 1).unwrap();
        let rows = compare_dataflows(&m, &HardwareSpec::default()).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.total_cycles > 0));
    }

    #[test]
    fn os_row_matches_engine() {
        let m = load_model("gpt-774m").unwrap().with_context(256).unwrap();
        let hw = HardwareSpec::default();
        let rows = compare_dataflows(&m, &hw).unwrap();
        let os = rows
            .iter()
            .find(|r| r.dataflow == Dataflow::OutputStationary)
            .unwrap();
        let cost = simulate_token(&m, &hw, ArchMode::TpuOnly).unwrap();
        assert_eq!(os.total_cycles, cost.tpu_cycles());
        assert_eq!(os.compute_cycles, cost.tpu_compute_cycles);
        assert_eq!(os.stall_cycles, cost.tpu_stall_cycles);
    }

    #[test]
    fn single_tuple_sweep_matches_direct_run() {
        let m = load_model("opt-1.3b").unwrap();
        let hw = HardwareSpec::default();
        let recs = run_sweep(&[m.clone()], &hw, &[256], &[ArchMode::Hybrid]).unwrap();
        assert_eq!(recs.len(), 1);
        let direct = simulate_report(&m.with_context(256).unwrap(), &hw, ArchMode::Hybrid).unwrap();
        assert_eq!(recs[0], RunRecord::from_report(&direct, hw.calibration));
    }

    #[test]
    fn sweep_order_is_fixed() {
        let models = zoo_models();
        let recs = run_sweep(
            &models[..2],
            &HardwareSpec::default(),
            &[512, 128],
            &[ArchMode::TpuOnly, ArchMode::Hybrid],
        )
        .unwrap();
        let keys: Vec<(String, u64, ArchMode)> = recs
            .iter()
            .map(|r| (r.model.clone(), r.context_len, r.mode))
            .collect();
        assert_eq!(keys[0], ("gpt-355m".into(), 128, ArchMode::Hybrid));
        assert_eq!(keys[1], ("gpt-355m".into(), 128, ArchMode::TpuOnly));
        assert_eq!(keys[2], ("gpt-355m".into(), 512, ArchMode::Hybrid));
        assert_eq!(keys[4].0, "gpt-774m");
    }

    #[test]
    fn sweep_failure_names_the_tuple() {
        let m = load_model("gpt-355m").unwrap();
        let err = run_sweep(&[m], &HardwareSpec::default(), &[0], &[ArchMode::Hybrid]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gpt-355m") && msg.contains("l=0"), "{msg}");
    }

    #[test]
    fn empty_inputs_rejected() {
        let hw = HardwareSpec::default();
        assert!(run_sweep(&[], &hw, &[128], &[ArchMode::Hybrid]).is_err());
        assert!(run_sweep(&zoo_models(), &hw, &[], &[ArchMode::Hybrid]).is_err());
    }
}
