//! Token-step cost of the hybrid design and of the systolic-only baseline.
//!
//! Layers run one after another and nothing overlaps: a step's latency is
//! the plain sum of its parts. In hybrid mode projections and feed-forward
//! layers go to the crossbars and the attention heads to the systolic array.
//! In baseline mode the systolic array does everything, streaming all
//! projection weights from LPDDR once per step because they cannot stay
//! resident in on-chip SRAM.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

pub use crate::cost::{Category, CostResult};

use crate::config::HardwareSpec;
use crate::error::{Error, Result};
use crate::pim::{capacity_check, pim_layer_cost, postprocess_cost};
use crate::systolic::{
    analytic_cycles, attention_block_cost, nfu_cycles, GemmShape, Residency, TileCost, TpuSpec,
};
use crate::workload::{build_op_graph, ModelSpec, Op, OpGraph, Placement, Precision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchMode {
    Hybrid,
    TpuOnly,
}

impl ArchMode {
    pub const ALL: [ArchMode; 2] = [ArchMode::Hybrid, ArchMode::TpuOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            ArchMode::Hybrid => "hybrid",
            ArchMode::TpuOnly => "tpu-only",
        }
    }
}

impl fmt::Display for ArchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ArchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "hybrid" => Ok(ArchMode::Hybrid),
            "tpu-only" | "tpuonly" | "tpu" => Ok(ArchMode::TpuOnly),
            other => Err(Error::InvalidHardware(format!(
                "unknown mode '{other}' (expected hybrid or tpu-only)"
            ))),
        }
    }
}

/// Token-step cost split by where it was incurred.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenCost {
    /// Attention heads, softmax and KV-cache appends. Identical in both modes.
    pub attention: CostResult,
    /// Projection and feed-forward MatMuls plus LayerNorm/GELU.
    pub projections: CostResult,
    /// Activation vectors crossing between the crossbars and the array.
    pub transfers: CostResult,
}

impl TokenCost {
    pub fn total(&self) -> CostResult {
        self.attention + self.projections + self.transfers
    }
}

/// Converts systolic-array work into categorized seconds and joules.
pub fn tpu_cost(tile: &TileCost, hw: &TpuSpec) -> CostResult {
    let period = 1.0 / hw.freq_hz;
    let mut cost = CostResult::default();
    cost.add_to(
        Category::Systolic,
        tile.compute_cycles as f64 * period,
        tile.mac_energy_pj(hw) * 1e-12,
    );
    cost.add_to(
        Category::Buffer,
        tile.stall_cycles as f64 * period,
        tile.sram_energy_pj(hw) * 1e-12,
    );
    cost.add_to(
        Category::Communication,
        tile.dram_reads_bytes as f64 / hw.dram_bw_bytes_per_cycle * period,
        tile.dram_energy_pj(hw) * 1e-12,
    );
    cost.tpu_compute_cycles = tile.compute_cycles;
    cost.tpu_stall_cycles = tile.stall_cycles;
    cost
}

fn lpddr_transfer(bytes: u64, hw: &HardwareSpec) -> CostResult {
    let b = bytes as f64;
    CostResult::single(
        Category::Communication,
        b / hw.system.lpddr_bw_bytes_per_ns * 1e-9,
        b * hw.system.lpddr_energy_pj_per_byte * 1e-12,
    )
}

/// Appending one K row and one V row to the cache.
fn kv_append(model: &ModelSpec, tpu: &TpuSpec) -> CostResult {
    let bytes = (2 * model.d) as f64;
    CostResult::single(
        Category::Buffer,
        bytes / tpu.sram_bw_bytes_per_cycle as f64 / tpu.freq_hz,
        bytes * tpu.sram_energy_pj_per_byte * 1e-12,
    )
}

fn attention_cost(graph: &OpGraph, hw: &HardwareSpec) -> Result<CostResult> {
    let mut total = CostResult::default();
    for layer in 0..graph.model.n_layers {
        let tile = attention_block_cost(graph.layer(layer), &hw.tpu)?;
        total += tpu_cost(&tile, &hw.tpu);
        total += kv_append(&graph.model, &hw.tpu);
    }
    Ok(total)
}

fn hybrid_projections(graph: &OpGraph, hw: &HardwareSpec) -> Result<CostResult> {
    let mut total = CostResult::default();
    for op in &graph.ops {
        match op {
            Op::MatMul(mm) if mm.precision == Precision::W1A8 => {
                total += pim_layer_cost(mm, &hw.pim)?;
                // Digitized results are written back to LPDDR.
                total += lpddr_transfer(mm.m * mm.n, hw);
            }
            Op::Nonlinear(nl) if nl.placement == Placement::PimPost => {
                total += postprocess_cost(nl, &hw.pim);
            }
            _ => {}
        }
    }
    Ok(total)
}

fn baseline_projections(graph: &OpGraph, hw: &HardwareSpec) -> Result<CostResult> {
    let mut total = CostResult::default();
    for op in &graph.ops {
        match op {
            Op::MatMul(mm) if mm.precision == Precision::W1A8 => {
                let tile = analytic_cycles(GemmShape::from(mm), &hw.tpu, Residency::Streamed)?;
                total += tpu_cost(&tile, &hw.tpu);
            }
            Op::Nonlinear(nl) if nl.placement == Placement::PimPost => {
                let tile = TileCost {
                    compute_cycles: nfu_cycles(nl.element_count, &hw.tpu),
                    ..TileCost::default()
                };
                total += tpu_cost(&tile, &hw.tpu);
            }
            _ => {}
        }
    }
    Ok(total)
}

/// Query vector out to the array and context vector back, per layer.
fn crossing_transfers(model: &ModelSpec, hw: &HardwareSpec) -> CostResult {
    (0..model.n_layers)
        .map(|_| lpddr_transfer(model.d, hw) + lpddr_transfer(model.d, hw))
        .sum()
}

pub fn simulate_graph(graph: &OpGraph, hw: &HardwareSpec, mode: ArchMode) -> Result<TokenCost> {
    hw.validate()?;
    let attention = attention_cost(graph, hw)?;
    Ok(match mode {
        ArchMode::Hybrid => {
            let capacity = capacity_check(graph, &hw.pim)?;
            if !capacity.fits() {
                warn!(
                    "{}: needs {} crossbars but only {} are available; latency assumes all weights resident",
                    graph.model.name, capacity.crossbars_needed, capacity.crossbars_available
                );
            }
            TokenCost {
                attention,
                projections: hybrid_projections(graph, hw)?,
                transfers: crossing_transfers(&graph.model, hw),
            }
        }
        ArchMode::TpuOnly => TokenCost {
            attention,
            projections: baseline_projections(graph, hw)?,
            transfers: CostResult::default(),
        },
    })
}

pub fn simulate_token_detailed(
    model: &ModelSpec,
    hw: &HardwareSpec,
    mode: ArchMode,
) -> Result<TokenCost> {
    simulate_graph(&build_op_graph(model)?, hw, mode)
}

/// Latency and energy of one decode step.
pub fn simulate_token(model: &ModelSpec, hw: &HardwareSpec, mode: ArchMode) -> Result<CostResult> {
    Ok(simulate_token_detailed(model, hw, mode)?.total())
}

/// Baseline latency over hybrid latency at context length `context_len`.
pub fn speedup(model: &ModelSpec, hw: &HardwareSpec, context_len: u64) -> Result<f64> {
    let model = model.with_context(context_len)?;
    let hybrid = simulate_token(&model, hw, ArchMode::Hybrid)?.total_latency();
    let baseline = simulate_token(&model, hw, ArchMode::TpuOnly)?.total_latency();
    Ok(baseline / hybrid)
}

/// Latency share of each category, in percent.
pub fn breakdown_percentages(cost: &CostResult) -> Result<Vec<(Category, f64)>> {
    let total = cost.total_latency();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal("latency breakdown"));
    }
    Ok(Category::ALL
        .iter()
        .map(|&c| (c, 100.0 * cost.latency(c) / total))
        .collect())
}
