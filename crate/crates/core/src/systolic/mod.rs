//! Cost models for an R×C systolic array running 8-bit GEMMs.
//!
//! The GEMM orientation is fixed: `(M × K) · (K × N) = (M × N)`. The left
//! operand is the "matrix" side (weights, or the cached keys/values), the
//! right operand is the activation vector during decode.

mod analytic;
mod oracle;

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::{MatMulOp, NonlinearKind, Op};

pub use analytic::analytic_cycles;
pub use oracle::{cycle_accurate_sim, ORACLE_MAC_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    #[serde(rename = "OS")]
    OutputStationary,
    #[serde(rename = "WS")]
    WeightStationary,
    #[serde(rename = "IS")]
    InputStationary,
}

impl Dataflow {
    pub const ALL: [Dataflow; 3] = [
        Dataflow::OutputStationary,
        Dataflow::WeightStationary,
        Dataflow::InputStationary,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Dataflow::OutputStationary => "OS",
            Dataflow::WeightStationary => "WS",
            Dataflow::InputStationary => "IS",
        }
    }
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Dataflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "OS" => Ok(Dataflow::OutputStationary),
            "WS" => Ok(Dataflow::WeightStationary),
            "IS" => Ok(Dataflow::InputStationary),
            other => Err(Error::InvalidHardware(format!(
                "unknown dataflow '{other}' (expected OS, WS or IS)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SramSizes {
    pub input: u64,
    pub weight: u64,
    pub output: u64,
}

impl SramSizes {
    pub fn total(&self) -> u64 {
        self.input + self.weight + self.output
    }
}

const MIB: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpuSpec {
    pub rows: u64,
    pub cols: u64,
    pub freq_hz: f64,
    pub dataflow: Dataflow,
    pub sram_bytes: SramSizes,
    pub sram_bw_bytes_per_cycle: u64,
    pub dram_bw_bytes_per_cycle: f64,
    pub mac_energy_pj: f64,
    pub sram_energy_pj_per_byte: f64,
    pub dram_energy_pj_per_byte: f64,
    pub nfu_cycles_per_element: f64,
}

impl Default for TpuSpec {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            freq_hz: 1e8,
            dataflow: Dataflow::OutputStationary,
            sram_bytes: SramSizes {
                input: 2 * MIB,
                weight: 4 * MIB,
                output: 2 * MIB,
            },
            sram_bw_bytes_per_cycle: 64,
            dram_bw_bytes_per_cycle: 128.0,
            mac_energy_pj: 0.2,
            sram_energy_pj_per_byte: 1.5,
            dram_energy_pj_per_byte: 30.0,
            nfu_cycles_per_element: 0.0,
        }
    }
}

impl TpuSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidHardware(format!("tpu: {msg}")));
        if self.rows == 0 || self.cols == 0 {
            return bad("rows and cols must be at least 1");
        }
        if !(self.freq_hz > 0.0 && self.freq_hz.is_finite()) {
            return bad("freq_hz must be positive and finite");
        }
        if self.sram_bw_bytes_per_cycle == 0 {
            return bad("sram_bw_bytes_per_cycle must be positive");
        }
        if !(self.dram_bw_bytes_per_cycle > 0.0) {
            return bad("dram_bw_bytes_per_cycle must be positive");
        }
        for (name, v) in [
            ("mac_energy_pj", self.mac_energy_pj),
            ("sram_energy_pj_per_byte", self.sram_energy_pj_per_byte),
            ("dram_energy_pj_per_byte", self.dram_energy_pj_per_byte),
            ("nfu_cycles_per_element", self.nfu_cycles_per_element),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn with_dataflow(&self, dataflow: Dataflow) -> Self {
        Self {
            dataflow,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GemmShape {
    pub m: u64,
    pub k: u64,
    pub n: u64,
}

impl GemmShape {
    pub fn new(m: u64, k: u64, n: u64) -> Result<Self> {
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::BadShape { m, k, n });
        }
        Ok(Self { m, k, n })
    }

    pub fn macs(&self) -> u64 {
        self.m * self.k * self.n
    }
}

impl From<&MatMulOp> for GemmShape {
    fn from(op: &MatMulOp) -> Self {
        Self {
            m: op.m,
            k: op.k,
            n: op.n,
        }
    }
}

/// Where the left (M×K) operand lives between token steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Residency {
    /// Already in on-chip weight memory; only SRAM traffic is charged.
    OnChip,
    /// Streamed in from LPDDR once per token step.
    Streamed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileCost {
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub macs: u64,
    pub sram_reads_bytes: u64,
    pub sram_writes_bytes: u64,
    pub dram_reads_bytes: u64,
}

impl TileCost {
    pub fn total_cycles(&self) -> u64 {
        self.compute_cycles + self.stall_cycles
    }

    pub fn sram_traffic_bytes(&self) -> u64 {
        self.sram_reads_bytes + self.sram_writes_bytes
    }

    pub fn mac_energy_pj(&self, hw: &TpuSpec) -> f64 {
        hw.mac_energy_pj * self.macs as f64
    }

    pub fn sram_energy_pj(&self, hw: &TpuSpec) -> f64 {
        hw.sram_energy_pj_per_byte * self.sram_traffic_bytes() as f64
    }

    pub fn dram_energy_pj(&self, hw: &TpuSpec) -> f64 {
        hw.dram_energy_pj_per_byte * self.dram_reads_bytes as f64
    }

    pub fn energy_pj(&self, hw: &TpuSpec) -> f64 {
        self.mac_energy_pj(hw) + self.sram_energy_pj(hw) + self.dram_energy_pj(hw)
    }
}

impl Add for TileCost {
    type Output = TileCost;

    fn add(mut self, rhs: TileCost) -> TileCost {
        self += rhs;
        self
    }
}

impl AddAssign for TileCost {
    fn add_assign(&mut self, rhs: TileCost) {
        self.compute_cycles += rhs.compute_cycles;
        self.stall_cycles += rhs.stall_cycles;
        self.macs += rhs.macs;
        self.sram_reads_bytes += rhs.sram_reads_bytes;
        self.sram_writes_bytes += rhs.sram_writes_bytes;
        self.dram_reads_bytes += rhs.dram_reads_bytes;
    }
}

/// Double-buffered SRAM: transfers overlap compute up to the port bandwidth.
pub(crate) fn bandwidth_stall(traffic_bytes: u64, compute_cycles: u64, bw: u64) -> u64 {
    traffic_bytes.div_ceil(bw).saturating_sub(compute_cycles)
}

/// Cycles spent on the nonlinear functional unit for `elements` values.
pub fn nfu_cycles(elements: u64, hw: &TpuSpec) -> u64 {
    (hw.nfu_cycles_per_element * elements as f64).ceil() as u64
}

/// Cost of one layer's attention heads plus softmax on the single array.
///
/// Heads run back to back. The cached keys and values are refreshed every
/// step, so they are charged as weight-memory reads each time.
pub fn attention_block_cost<'a>(
    ops: impl IntoIterator<Item = &'a Op>,
    hw: &TpuSpec,
) -> Result<TileCost> {
    let mut total = TileCost::default();
    for op in ops {
        match op {
            Op::MatMul(mm) if mm.role.is_attention() => {
                total += analytic_cycles(GemmShape::from(mm), hw, Residency::OnChip)?;
            }
            Op::Nonlinear(nl) if nl.kind == NonlinearKind::Softmax => {
                total.compute_cycles += nfu_cycles(nl.element_count, hw);
            }
            _ => {}
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{build_op_graph, ModelSpec};

    fn tpu(rows: u64, cols: u64) -> TpuSpec {
        TpuSpec {
            rows,
            cols,
            sram_bw_bytes_per_cycle: u64::MAX,
            ..TpuSpec::default()
        }
    }

    #[test]
    fn unit_attention_block() {
        let m = ModelSpec::new("unit", 1, 1, 1, 1, 1).unwrap();
        let g = build_op_graph(&m).unwrap();
        let cost = attention_block_cost(g.layer(0), &tpu(1, 1)).unwrap();
        assert_eq!(cost.total_cycles(), 2);
        assert_eq!(cost.macs, 2);
    }

    #[test]
    fn opt_layer_attention_composes() {
        let m = ModelSpec::new("opt-6.7b", 4096, 32, 16384, 32, 128).unwrap();
        let g = build_op_graph(&m).unwrap();
        let hw = tpu(32, 32);
        let cost = attention_block_cost(g.layer(0), &hw).unwrap();
        let one = |m, k| {
            analytic_cycles(GemmShape::new(m, k, 1).unwrap(), &hw, Residency::OnChip)
                .unwrap()
                .compute_cycles
        };
        assert_eq!(cost.compute_cycles, 32 * (one(128, 128) + one(128, 128)));
    }

    #[test]
    fn attention_grows_with_context() {
        let hw = TpuSpec::default();
        let cycles = |l| {
            let m = ModelSpec::new("gpt-355m", 1024, 16, 1024, 24, l).unwrap();
            let g = build_op_graph(&m).unwrap();
            attention_block_cost(g.layer(0), &hw).unwrap().total_cycles()
        };
        assert!(cycles(4096) > cycles(128));
    }

    #[test]
    fn softmax_knob_adds_cycles() {
        let m = ModelSpec::new("small", 64, 4, 64, 1, 16).unwrap();
        let g = build_op_graph(&m).unwrap();
        let base = attention_block_cost(g.layer(0), &tpu(8, 8)).unwrap();
        let hw = TpuSpec {
            nfu_cycles_per_element: 0.5,
            ..tpu(8, 8)
        };
        let with_nfu = attention_block_cost(g.layer(0), &hw).unwrap();
        assert_eq!(with_nfu.compute_cycles - base.compute_cycles, 32);
    }

    #[test]
    fn energy_is_additive() {
        let hw = TpuSpec::default();
        let c = analytic_cycles(GemmShape::new(40, 70, 3).unwrap(), &hw, Residency::Streamed)
            .unwrap();
        let expected = hw.mac_energy_pj * (40 * 70 * 3) as f64
            + hw.sram_energy_pj_per_byte * (c.sram_reads_bytes + c.sram_writes_bytes) as f64
            + hw.dram_energy_pj_per_byte * (40 * 70) as f64;
        assert_eq!(c.energy_pj(&hw), expected);
    }

    #[test]
    fn dataflow_parse() {
        assert_eq!("ws".parse::<Dataflow>().unwrap(), Dataflow::WeightStationary);
        assert!("XS".parse::<Dataflow>().is_err());
    }
}
