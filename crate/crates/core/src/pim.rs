//! Analog crossbar side: weight mapping, functional MVM emulation and the
//! per-op latency/energy model.
//!
//! A crossbar cell holds one ternary weight as a differential device pair:
//! `+1 = (on, off)`, `-1 = (off, on)`, `0 = (off, off)`. Activations are
//! applied bit-serially, one 1-bit DAC step per bit, and the column currents
//! are digitized per phase and combined with a digital shift-and-add.

use serde::{Deserialize, Serialize};

use crate::cost::{Category, CostResult};
use crate::error::{Error, Result};
use crate::workload::{MatMulOp, NonlinearOp, OpGraph, Precision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PimSpec {
    pub xbar_rows: u64,
    pub xbar_cols: u64,
    pub adc_bits: u32,
    pub act_bits: u32,
    pub adcs_per_xbar: u64,
    pub t_dac_ns: f64,
    pub t_xbar_ns: f64,
    pub t_adc_ns: f64,
    pub e_dac_pj: f64,
    pub e_xbar_pj_per_row: f64,
    pub e_adc_pj: f64,
    pub xbars_per_pe: u64,
    pub pes_per_tile: u64,
    pub tiles_per_bank: u64,
    pub banks: u64,
    pub noc_bw_bytes_per_ns: f64,
    pub noc_energy_pj_per_byte: f64,
    pub buffer_bw_bytes_per_ns: f64,
    pub buffer_energy_pj_per_byte: f64,
    pub peripheral_ns_per_element: f64,
    pub peripheral_pj_per_element: f64,
}

impl Default for PimSpec {
    fn default() -> Self {
        Self {
            xbar_rows: 256,
            xbar_cols: 256,
            adc_bits: 8,
            act_bits: 8,
            adcs_per_xbar: 32,
            t_dac_ns: 1.0,
            t_xbar_ns: 10.0,
            t_adc_ns: 1.0,
            e_dac_pj: 0.05,
            e_xbar_pj_per_row: 0.1,
            e_adc_pj: 2.0,
            xbars_per_pe: 8,
            pes_per_tile: 16,
            tiles_per_bank: 64,
            banks: 16,
            noc_bw_bytes_per_ns: 32.0,
            noc_energy_pj_per_byte: 0.5,
            buffer_bw_bytes_per_ns: 64.0,
            buffer_energy_pj_per_byte: 0.2,
            peripheral_ns_per_element: 0.0,
            peripheral_pj_per_element: 0.0,
        }
    }
}

impl PimSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidHardware(format!("pim: {msg}")));
        for (name, v) in [
            ("xbar_rows", self.xbar_rows),
            ("xbar_cols", self.xbar_cols),
            ("adcs_per_xbar", self.adcs_per_xbar),
            ("xbars_per_pe", self.xbars_per_pe),
            ("pes_per_tile", self.pes_per_tile),
            ("tiles_per_bank", self.tiles_per_bank),
            ("banks", self.banks),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.adcs_per_xbar > self.xbar_cols {
            return bad(format!(
                "adcs_per_xbar ({}) exceeds xbar_cols ({})",
                self.adcs_per_xbar, self.xbar_cols
            ));
        }
        if !(1..=16).contains(&self.act_bits) || !(1..=32).contains(&self.adc_bits) {
            return bad("act_bits must be in 1..=16 and adc_bits in 1..=32".into());
        }
        for (name, v) in [
            ("noc_bw_bytes_per_ns", self.noc_bw_bytes_per_ns),
            ("buffer_bw_bytes_per_ns", self.buffer_bw_bytes_per_ns),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("t_dac_ns", self.t_dac_ns),
            ("t_xbar_ns", self.t_xbar_ns),
            ("t_adc_ns", self.t_adc_ns),
            ("e_dac_pj", self.e_dac_pj),
            ("e_xbar_pj_per_row", self.e_xbar_pj_per_row),
            ("e_adc_pj", self.e_adc_pj),
            ("noc_energy_pj_per_byte", self.noc_energy_pj_per_byte),
            ("buffer_energy_pj_per_byte", self.buffer_energy_pj_per_byte),
            ("peripheral_ns_per_element", self.peripheral_ns_per_element),
            ("peripheral_pj_per_element", self.peripheral_pj_per_element),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn crossbar_capacity(&self) -> u64 {
        self.banks * self.tiles_per_bank * self.pes_per_tile * self.xbars_per_pe
    }
}

/// Tile grid covering a `weight_rows × weight_cols` matrix. Input rows run
/// along crossbar rows, output columns along crossbar columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarTilePlan {
    pub weight_rows: u64,
    pub weight_cols: u64,
    pub xbar_rows: u64,
    pub xbar_cols: u64,
    pub tiles_r: u64,
    pub tiles_c: u64,
    pub total_tiles: u64,
}

impl CrossbarTilePlan {
    /// Rows occupied in tile row `tr`.
    pub fn rows_used(&self, tr: u64) -> u64 {
        (self.weight_rows - tr * self.xbar_rows).min(self.xbar_rows)
    }

    /// Columns occupied in tile column `tc`.
    pub fn cols_used(&self, tc: u64) -> u64 {
        (self.weight_cols - tc * self.xbar_cols).min(self.xbar_cols)
    }
}

pub fn plan_mapping(weight_rows: u64, weight_cols: u64, hw: &PimSpec) -> Result<CrossbarTilePlan> {
    if weight_rows == 0 || weight_cols == 0 {
        return Err(Error::DimensionMismatch(format!(
            "cannot map a {weight_rows}×{weight_cols} weight matrix"
        )));
    }
    let tiles_r = weight_rows.div_ceil(hw.xbar_rows);
    let tiles_c = weight_cols.div_ceil(hw.xbar_cols);
    Ok(CrossbarTilePlan {
        weight_rows,
        weight_cols,
        xbar_rows: hw.xbar_rows,
        xbar_cols: hw.xbar_cols,
        tiles_r,
        tiles_c,
        total_tiles: tiles_r * tiles_c,
    })
}

/// Row-major ternary weight matrix (`rows` inputs × `cols` outputs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i8>,
}

impl TernaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|w| !(-1..=1).contains(*w)) {
            return Err(Error::OutOfRange(format!("weight {bad} is not ternary")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdcMode {
    /// Column sums are digitized exactly.
    Ideal,
    /// Each per-tile, per-phase column sum saturates to the signed ADC range.
    Quantized,
}

/// Emulates `Wᵀ·x` on the tiled crossbars.
pub fn functional_mvm(
    weights: &TernaryMatrix,
    x: &[i32],
    hw: &PimSpec,
    mode: AdcMode,
) -> Result<Vec<i64>> {
    if x.len() != weights.rows {
        return Err(Error::DimensionMismatch(format!(
            "activation length {} does not match {} weight rows",
            x.len(),
            weights.rows
        )));
    }
    let bits = hw.act_bits;
    let (lo, hi) = (-(1i64 << (bits - 1)), (1i64 << (bits - 1)) - 1);
    if let Some(v) = x.iter().find(|v| !(lo..=hi).contains(&(**v as i64))) {
        return Err(Error::OutOfRange(format!(
            "activation {v} does not fit in {bits} signed bits"
        )));
    }
    let (adc_lo, adc_hi) = (-(1i64 << (hw.adc_bits - 1)), (1i64 << (hw.adc_bits - 1)) - 1);
    let mask = (1u32 << bits) - 1;
    let codes: Vec<u32> = x.iter().map(|&v| (v as u32) & mask).collect();

    let plan = plan_mapping(weights.rows as u64, weights.cols as u64, hw)?;
    let (xr, xc) = (hw.xbar_rows as usize, hw.xbar_cols as usize);
    let nbits = bits as usize;
    let mut out = vec![0i64; weights.cols];
    // Differential pair currents per (phase, column) within one tile.
    let mut pos = vec![0i64; nbits * xc];
    let mut neg = vec![0i64; nbits * xc];

    for tr in 0..plan.tiles_r {
        let r0 = tr as usize * xr;
        let rows_used = plan.rows_used(tr) as usize;
        for tc in 0..plan.tiles_c {
            let c0 = tc as usize * xc;
            let cols_used = plan.cols_used(tc) as usize;
            pos.fill(0);
            neg.fill(0);
            for r in r0..r0 + rows_used {
                let code = codes[r];
                if code == 0 {
                    continue;
                }
                let row = &weights.data[r * weights.cols + c0..r * weights.cols + c0 + cols_used];
                for (c, &w) in row.iter().enumerate() {
                    let lane = match w {
                        1 => &mut pos,
                        -1 => &mut neg,
                        _ => continue,
                    };
                    let mut rest = code;
                    while rest != 0 {
                        let b = rest.trailing_zeros() as usize;
                        lane[b * xc + c] += 1;
                        rest &= rest - 1;
                    }
                }
            }
            for b in 0..nbits {
                // Two's complement: the top phase carries negative weight.
                let sign = if b == nbits - 1 { -1 } else { 1 };
                for c in 0..cols_used {
                    let mut sum = pos[b * xc + c] - neg[b * xc + c];
                    if mode == AdcMode::Quantized {
                        sum = sum.clamp(adc_lo, adc_hi);
                    }
                    out[c0 + c] += sign * (sum << b);
                }
            }
        }
    }
    Ok(out)
}

/// Latency and energy of one W1A8 op on the crossbars.
///
/// The weight matrix is stored `k × m` (inputs on rows, outputs on
/// columns). All tiles fire at once, so latency does not depend on the tile
/// count; energy is summed per tile.
pub fn pim_layer_cost(op: &MatMulOp, hw: &PimSpec) -> Result<CostResult> {
    if op.precision != Precision::W1A8 {
        return Err(Error::WrongDevice {
            role: op.role.to_string(),
        });
    }
    let plan = plan_mapping(op.k, op.m, hw)?;
    let phases = hw.act_bits as f64;
    let adc_rounds = hw.xbar_cols.min(op.m).div_ceil(hw.adcs_per_xbar) as f64;

    // Σ rows_used over every tile, and Σ ADC conversions over every tile.
    let rows_sum = (op.k * plan.tiles_c) as f64;
    let conversions: u64 = (0..plan.tiles_c)
        .map(|tc| plan.cols_used(tc).div_ceil(hw.adcs_per_xbar) * hw.adcs_per_xbar)
        .sum::<u64>()
        * plan.tiles_r;

    let mut cost = CostResult::default();
    cost.add_to(
        Category::Dac,
        ns(phases * hw.t_dac_ns),
        pj(phases * hw.e_dac_pj * rows_sum),
    );
    cost.add_to(
        Category::Xbar,
        ns(phases * hw.t_xbar_ns),
        pj(phases * hw.e_xbar_pj_per_row * rows_sum),
    );
    cost.add_to(
        Category::Adc,
        ns(phases * adc_rounds * hw.t_adc_ns),
        pj(phases * hw.e_adc_pj * conversions as f64),
    );

    let bytes = (op.k + op.m) as f64;
    cost.add_to(
        Category::Communication,
        ns(bytes / hw.noc_bw_bytes_per_ns),
        pj(bytes * hw.noc_energy_pj_per_byte),
    );
    cost.add_to(
        Category::Buffer,
        ns(bytes / hw.buffer_bw_bytes_per_ns),
        pj(bytes * hw.buffer_energy_pj_per_byte),
    );
    // Digital shift-and-add over every output element.
    cost.add_to(
        Category::Peripheral,
        ns(op.m as f64 * hw.peripheral_ns_per_element),
        pj(op.m as f64 * hw.peripheral_pj_per_element),
    );
    // Weights were programmed at configuration time.
    cost.crossbar_writes = 0;
    Ok(cost)
}

/// LayerNorm / GELU on the PE postprocessing units.
pub fn postprocess_cost(op: &NonlinearOp, hw: &PimSpec) -> CostResult {
    let n = op.element_count as f64;
    CostResult::single(
        Category::Peripheral,
        ns(n * hw.peripheral_ns_per_element),
        pj(n * hw.peripheral_pj_per_element),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub crossbars_needed: u64,
    pub crossbars_available: u64,
}

impl CapacityReport {
    pub fn fits(&self) -> bool {
        self.crossbars_needed <= self.crossbars_available
    }
}

/// Crossbars needed to hold every W1A8 weight matrix of the model at once.
pub fn capacity_check(graph: &OpGraph, hw: &PimSpec) -> Result<CapacityReport> {
    let mut needed = 0;
    for op in graph.matmuls().filter(|op| op.precision == Precision::W1A8) {
        needed += plan_mapping(op.k, op.m, hw)?.total_tiles;
    }
    Ok(CapacityReport {
        crossbars_needed: needed,
        crossbars_available: hw.crossbar_capacity(),
    })
}

fn ns(v: f64) -> f64 {
    v * 1e-9
}

fn pj(v: f64) -> f64 {
    v * 1e-12
}
