use super::{bandwidth_stall, Dataflow, GemmShape, Residency, TileCost, TpuSpec};
use crate::error::Result;

/// Closed-form cycle and traffic estimate for one GEMM.
///
/// Per-tile compute is the skewed fill plus drain of the array:
///
/// | dataflow | tiles                   | cycles per tile          |
/// |----------|-------------------------|--------------------------|
/// | OS       | ⌈M/R⌉·⌈N/C⌉             | K + R + C − 2            |
/// | WS       | ⌈K/R⌉·⌈N/C⌉             | R + (M + R + C − 2)      |
/// | IS       | ⌈M/R⌉·⌈K/C⌉             | C + (N + R + C − 2)      |
///
/// The leading R (WS) or C (IS) is the stationary-operand preload. Partial
/// tiles are charged as full tiles. Each operand element costs one SRAM byte
/// per tile that consumes it; partial sums spilled between K-folds are read
/// back and rewritten.
pub fn analytic_cycles(shape: GemmShape, hw: &TpuSpec, residency: Residency) -> Result<TileCost> {
    let GemmShape { m, k, n } = GemmShape::new(shape.m, shape.k, shape.n)?;
    let (r, c) = (hw.rows, hw.cols);

    let (tiles, per_tile, reads, writes) = match hw.dataflow {
        Dataflow::OutputStationary => {
            let tiles = m.div_ceil(r) * n.div_ceil(c);
            let reads = m * k * n.div_ceil(c) + k * n * m.div_ceil(r);
            (tiles, k + r + c - 2, reads, m * n)
        }
        Dataflow::WeightStationary => {
            let folds = k.div_ceil(r);
            let tiles = folds * n.div_ceil(c);
            let reads = k * n + m * k * n.div_ceil(c) + (folds - 1) * m * n;
            (tiles, r + m + r + c - 2, reads, folds * m * n)
        }
        Dataflow::InputStationary => {
            let folds = k.div_ceil(c);
            let tiles = m.div_ceil(r) * folds;
            let reads = m * k + k * n * m.div_ceil(r) + (folds - 1) * m * n;
            (tiles, c + n + r + c - 2, reads, folds * m * n)
        }
    };

    let compute_cycles = tiles * per_tile;
    Ok(TileCost {
        compute_cycles,
        stall_cycles: bandwidth_stall(reads + writes, compute_cycles, hw.sram_bw_bytes_per_cycle),
        macs: m * k * n,
        sram_reads_bytes: reads,
        sram_writes_bytes: writes,
        dram_reads_bytes: match residency {
            Residency::OnChip => 0,
            Residency::Streamed => m * k,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hw(rows: u64, cols: u64, dataflow: Dataflow) -> TpuSpec {
        TpuSpec {
            rows,
            cols,
            dataflow,
            sram_bw_bytes_per_cycle: u64::MAX,
            ..TpuSpec::default()
        }
    }

    fn cycles(df: Dataflow, r: u64, c: u64, m: u64, k: u64, n: u64) -> u64 {
        analytic_cycles(GemmShape { m, k, n }, &hw(r, c, df), Residency::OnChip)
            .unwrap()
            .compute_cycles
    }

    #[test]
    fn os_two_by_two() {
        assert_eq!(cycles(Dataflow::OutputStationary, 2, 2, 2, 3, 2), 5);
    }

    #[test]
    fn single_mac() {
        assert_eq!(cycles(Dataflow::OutputStationary, 1, 1, 1, 1, 1), 1);
    }

    #[test]
    fn ws_projection_example() {
        assert_eq!(cycles(Dataflow::WeightStationary, 32, 32, 1, 128, 4096), 48_640);
    }

    #[test]
    fn unit_array_os_is_serial() {
        assert_eq!(cycles(Dataflow::OutputStationary, 1, 1, 3, 5, 7), 105);
        // One preload cycle per stationary element on the other two.
        assert_eq!(cycles(Dataflow::WeightStationary, 1, 1, 3, 5, 7), 105 + 35);
        assert_eq!(cycles(Dataflow::InputStationary, 1, 1, 3, 5, 7), 105 + 15);
    }

    #[test]
    fn rejects_zero_dims() {
        let err = analytic_cycles(
            GemmShape { m: 0, k: 1, n: 1 },
            &TpuSpec::default(),
            Residency::OnChip,
        );
        assert!(err.is_err());
    }

    #[test]
    fn stall_when_bandwidth_starved() {
        let mut spec = hw(4, 4, Dataflow::OutputStationary);
        spec.sram_bw_bytes_per_cycle = 1;
        let c = analytic_cycles(GemmShape { m: 4, k: 16, n: 4 }, &spec, Residency::OnChip)
            .unwrap();
        // reads 4·16 + 16·4, writes 16; compute 16 + 6
        assert_eq!(c.compute_cycles, 22);
        assert_eq!(c.stall_cycles, 144 - 22);
    }

    #[test]
    fn streamed_operand_hits_dram() {
        let c = analytic_cycles(
            GemmShape { m: 64, k: 32, n: 1 },
            &TpuSpec::default(),
            Residency::Streamed,
        )
        .unwrap();
        assert_eq!(c.dram_reads_bytes, 64 * 32);
    }
}
