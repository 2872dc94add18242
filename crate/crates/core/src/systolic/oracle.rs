//! Discrete-time simulation of the PE grid, used to check the closed forms.
//!
//! Every PE has one eastbound and one southbound operand register. Each cycle
//! all registers shift one hop, the west and north edges receive skewed
//! injections, and each PE performs at most one MAC. Operands travel the
//! full width (or height) of the physical array before leaving it, so a
//! partially used tile still occupies the links of unused PEs. A tile ends on
//! the first cycle the grid is empty with nothing left to inject; the next
//! tile starts after that.
//!
//! Operand values are synthetic small integers. The simulated product is
//! compared against a direct GEMM at the end of every run.

use super::{bandwidth_stall, Dataflow, GemmShape, TileCost, TpuSpec};
use crate::error::{Error, Result};

/// Largest M·K·N the oracle will step through.
pub const ORACLE_MAC_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy)]
struct Token {
    /// Position along the streamed dimension; both operands meeting in a PE
    /// must agree on it.
    idx: u64,
    val: i64,
}

struct Grid {
    rows: usize,
    cols: usize,
    east: Vec<Option<Token>>,
    south: Vec<Option<Token>>,
}

impl Grid {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            east: vec![None; rows * cols],
            south: vec![None; rows * cols],
        }
    }

    fn is_empty(&self) -> bool {
        self.east.iter().chain(&self.south).all(Option::is_none)
    }

    /// Advances every register one hop and fills the edges.
    fn shift(
        &mut self,
        mut inject_west: impl FnMut(usize) -> Option<Token>,
        mut inject_north: impl FnMut(usize) -> Option<Token>,
        mut exit_east: impl FnMut(usize, Token),
        mut exit_south: impl FnMut(usize, Token),
    ) {
        let (rows, cols) = (self.rows, self.cols);
        for i in 0..rows {
            let row = &mut self.east[i * cols..(i + 1) * cols];
            if let Some(tok) = row[cols - 1].take() {
                exit_east(i, tok);
            }
            row.rotate_right(1);
            row[0] = inject_west(i);
        }
        for j in 0..cols {
            if let Some(tok) = self.south[(rows - 1) * cols + j].take() {
                exit_south(j, tok);
            }
            for i in (1..rows).rev() {
                self.south[i * cols + j] = self.south[(i - 1) * cols + j];
            }
            self.south[j] = inject_north(j);
        }
    }
}

/// Skewed edge schedule: lane `lane` carries stream element `cycle - lane`.
fn skewed(cycle: u64, lane: usize, used: usize, len: u64) -> Option<u64> {
    let lane = lane as u64;
    if lane as usize >= used || cycle < lane {
        return None;
    }
    let t = cycle - lane;
    (t < len).then_some(t)
}

fn operand_a(i: u64, k: u64) -> i64 {
    ((i * 7 + k * 3) % 5) as i64 - 2
}

fn operand_b(k: u64, j: u64) -> i64 {
    ((k * 5 + j * 11) % 7) as i64 - 3
}

#[derive(Default)]
struct Tally {
    cycles: u64,
    macs: u64,
    reads: u64,
    writes: u64,
}

struct Problem {
    m: u64,
    k: u64,
    n: u64,
    rows: usize,
    cols: usize,
    a: Vec<i64>,
    b: Vec<i64>,
    y: Vec<i64>,
}

impl Problem {
    fn a(&self, i: u64, k: u64) -> i64 {
        self.a[(i * self.k + k) as usize]
    }

    fn b(&self, k: u64, j: u64) -> i64 {
        self.b[(k * self.n + j) as usize]
    }

    fn y_mut(&mut self, i: u64, j: u64) -> &mut i64 {
        &mut self.y[(i * self.n + j) as usize]
    }
}

/// Steps the grid until the tile drains; returns the cycle count.
fn drain(
    grid: &mut Grid,
    last_inject: u64,
    mut inject_west: impl FnMut(u64, usize) -> Option<Token>,
    mut inject_north: impl FnMut(u64, usize) -> Option<Token>,
    mut exit_east: impl FnMut(Token, usize),
    mut exit_south: impl FnMut(Token, usize),
    mut pe: impl FnMut(&mut Grid, usize),
) -> u64 {
    let mut cycle = 0u64;
    loop {
        grid.shift(
            |i| inject_west(cycle, i),
            |j| inject_north(cycle, j),
            |i, t| exit_east(t, i),
            |j, t| exit_south(t, j),
        );
        if cycle > last_inject && grid.is_empty() {
            return cycle;
        }
        for p in 0..grid.rows * grid.cols {
            pe(grid, p);
        }
        cycle += 1;
    }
}

fn output_stationary(p: &mut Problem, tally: &mut Tally) {
    let (r, c) = (p.rows as u64, p.cols as u64);
    let mut grid = Grid::new(p.rows, p.cols);
    for i0 in (0..p.m).step_by(r as usize) {
        for j0 in (0..p.n).step_by(c as usize) {
            let used_r = (p.m - i0).min(r) as usize;
            let used_c = (p.n - j0).min(c) as usize;
            let mut acc = vec![0i64; p.rows * p.cols];
            let last = p.k - 1 + (used_r.max(used_c) as u64 - 1);
            let prob = &*p;
            let mut reads = 0;
            let mut macs = 0;
            tally.cycles += drain(
                &mut grid,
                last,
                |cy, i| {
                    skewed(cy, i, used_r, prob.k).map(|k| {
                        reads += 1;
                        Token {
                            idx: k,
                            val: prob.a(i0 + i as u64, k),
                        }
                    })
                },
                |cy, j| {
                    skewed(cy, j, used_c, prob.k).map(|k| Token {
                        idx: k,
                        val: prob.b(k, j0 + j as u64),
                    })
                },
                |_, _| {},
                |_, _| {},
                |g, q| {
                    if let (Some(a), Some(b)) = (g.east[q], g.south[q]) {
                        assert_eq!(a.idx, b.idx, "operand skew mismatch");
                        acc[q] += a.val * b.val;
                        macs += 1;
                    }
                },
            );
            // B-side injections: one per used column per K step.
            reads += used_c as u64 * p.k;
            tally.reads += reads;
            tally.macs += macs;
            for i in 0..used_r {
                for j in 0..used_c {
                    *p.y_mut(i0 + i as u64, j0 + j as u64) = acc[i * p.cols + j];
                }
            }
            tally.writes += (used_r * used_c) as u64;
        }
    }
}

/// Shifts the stationary operand into the array one hop per cycle.
/// Returns `(cycles, stationary, real_values_loaded)`.
fn preload(
    rows: usize,
    cols: usize,
    southward: bool,
    value: impl Fn(usize, usize) -> Option<i64>,
) -> (u64, Vec<Option<i64>>, u64) {
    let mut chain: Vec<Option<i64>> = vec![None; rows * cols];
    let mut loaded = 0;
    if southward {
        // Bottom row enters first so row i ends at depth i.
        for step in 0..rows {
            let src = rows - 1 - step;
            for j in 0..cols {
                for i in (1..rows).rev() {
                    chain[i * cols + j] = chain[(i - 1) * cols + j];
                }
                chain[j] = value(src, j);
                loaded += chain[j].is_some() as u64;
            }
        }
        (rows as u64, chain, loaded)
    } else {
        for step in 0..cols {
            let src = cols - 1 - step;
            for i in 0..rows {
                let row = &mut chain[i * cols..(i + 1) * cols];
                row.rotate_right(1);
                row[0] = value(i, src);
                loaded += row[0].is_some() as u64;
            }
        }
        (cols as u64, chain, loaded)
    }
}

fn weight_stationary(p: &mut Problem, tally: &mut Tally) {
    let (r, c) = (p.rows as u64, p.cols as u64);
    let mut grid = Grid::new(p.rows, p.cols);
    for j0 in (0..p.n).step_by(c as usize) {
        for k0 in (0..p.k).step_by(r as usize) {
            let used_r = (p.k - k0).min(r) as usize;
            let used_c = (p.n - j0).min(c) as usize;
            let first_fold = k0 == 0;
            let (pre_cycles, weights, loaded) = preload(p.rows, p.cols, true, |i, j| {
                (i < used_r && j < used_c).then(|| p.b(k0 + i as u64, j0 + j as u64))
            });
            tally.cycles += pre_cycles;
            tally.reads += loaded;

            let last = p.m - 1 + (used_r.max(used_c) as u64 - 1);
            let mut psums_in = vec![0i64; (p.m as usize) * used_c];
            for m in 0..p.m {
                for j in 0..used_c {
                    psums_in[m as usize * used_c + j] = if first_fold {
                        0
                    } else {
                        p.y[(m * p.n + j0 + j as u64) as usize]
                    };
                }
            }
            let mut outputs: Vec<(u64, usize, i64)> = Vec::new();
            let mut reads = 0;
            let mut psum_reads = 0;
            let mut macs = 0;
            let prob = &*p;
            tally.cycles += drain(
                &mut grid,
                last,
                |cy, i| {
                    skewed(cy, i, used_r, prob.m).map(|m| {
                        reads += 1;
                        Token {
                            idx: m,
                            val: prob.a(m, k0 + i as u64),
                        }
                    })
                },
                |cy, j| {
                    skewed(cy, j, used_c, prob.m).map(|m| {
                        if !first_fold {
                            psum_reads += 1;
                        }
                        Token {
                            idx: m,
                            val: psums_in[m as usize * used_c + j],
                        }
                    })
                },
                |_, _| {},
                |tok, j| outputs.push((tok.idx, j, tok.val)),
                |g, q| {
                    if let (Some(a), Some(ps), Some(w)) = (g.east[q], g.south[q], weights[q]) {
                        assert_eq!(a.idx, ps.idx, "operand skew mismatch");
                        g.south[q] = Some(Token {
                            idx: ps.idx,
                            val: ps.val + a.val * w,
                        });
                        macs += 1;
                    }
                },
            );
            tally.reads += reads + psum_reads;
            tally.macs += macs;
            tally.writes += outputs.len() as u64;
            for (m, j, v) in outputs {
                *p.y_mut(m, j0 + j as u64) = v;
            }
        }
    }
}

fn input_stationary(p: &mut Problem, tally: &mut Tally) {
    let (r, c) = (p.rows as u64, p.cols as u64);
    let mut grid = Grid::new(p.rows, p.cols);
    for i0 in (0..p.m).step_by(r as usize) {
        for k0 in (0..p.k).step_by(c as usize) {
            let used_r = (p.m - i0).min(r) as usize;
            let used_c = (p.k - k0).min(c) as usize;
            let first_fold = k0 == 0;
            let (pre_cycles, inputs, loaded) = preload(p.rows, p.cols, false, |i, j| {
                (i < used_r && j < used_c).then(|| p.a(i0 + i as u64, k0 + j as u64))
            });
            tally.cycles += pre_cycles;
            tally.reads += loaded;

            let last = p.n - 1 + (used_r.max(used_c) as u64 - 1);
            let mut outputs: Vec<(usize, u64, i64)> = Vec::new();
            let mut reads = 0;
            let mut psum_reads = 0;
            let mut macs = 0;
            let prob = &*p;
            tally.cycles += drain(
                &mut grid,
                last,
                |cy, i| {
                    skewed(cy, i, used_r, prob.n).map(|n| {
                        let val = if first_fold {
                            0
                        } else {
                            psum_reads += 1;
                            prob.y[((i0 + i as u64) * prob.n + n) as usize]
                        };
                        Token { idx: n, val }
                    })
                },
                |cy, j| {
                    skewed(cy, j, used_c, prob.n).map(|n| {
                        reads += 1;
                        Token {
                            idx: n,
                            val: prob.b(k0 + j as u64, n),
                        }
                    })
                },
                |tok, i| outputs.push((i, tok.idx, tok.val)),
                |_, _| {},
                |g, q| {
                    if let (Some(ps), Some(b), Some(s)) = (g.east[q], g.south[q], inputs[q]) {
                        assert_eq!(ps.idx, b.idx, "operand skew mismatch");
                        g.east[q] = Some(Token {
                            idx: ps.idx,
                            val: ps.val + s * b.val,
                        });
                        macs += 1;
                    }
                },
            );
            tally.reads += reads + psum_reads;
            tally.macs += macs;
            tally.writes += outputs.len() as u64;
            for (i, n, v) in outputs {
                *p.y_mut(i0 + i as u64, n) = v;
            }
        }
    }
}

/// Cycle-accurate reference for [`super::analytic_cycles`].
///
/// Returns the exact cycle count of the tile chain together with the MACs
/// and SRAM bytes actually moved. The left operand is treated as on-chip.
pub fn cycle_accurate_sim(shape: GemmShape, hw: &TpuSpec) -> Result<TileCost> {
    let GemmShape { m, k, n } = GemmShape::new(shape.m, shape.k, shape.n)?;
    let macs = shape.macs();
    if macs > ORACLE_MAC_LIMIT {
        return Err(Error::SimulationTooLarge {
            macs,
            limit: ORACLE_MAC_LIMIT,
        });
    }
    hw.validate()?;

    let mut p = Problem {
        m,
        k,
        n,
        rows: hw.rows as usize,
        cols: hw.cols as usize,
        a: (0..m * k).map(|x| operand_a(x / k, x % k)).collect(),
        b: (0..k * n).map(|x| operand_b(x / n, x % n)).collect(),
        y: vec![0; (m * n) as usize],
    };
    let mut tally = Tally::default();
    match hw.dataflow {
        Dataflow::OutputStationary => output_stationary(&mut p, &mut tally),
        Dataflow::WeightStationary => weight_stationary(&mut p, &mut tally),
        Dataflow::InputStationary => input_stationary(&mut p, &mut tally),
    }

    assert_eq!(tally.macs, macs, "oracle executed the wrong number of MACs");
    for i in 0..m {
        for j in 0..n {
            let expected: i64 = (0..k).map(|kk| p.a(i, kk) * p.b(kk, j)).sum();
            assert_eq!(p.y[(i * n + j) as usize], expected, "wrong output at ({i}, {j})");
        }
    }

    Ok(TileCost {
        compute_cycles: tally.cycles,
        stall_cycles: bandwidth_stall(
            tally.reads + tally.writes,
            tally.cycles,
            hw.sram_bw_bytes_per_cycle,
        ),
        macs: tally.macs,
        sram_reads_bytes: tally.reads,
        sram_writes_bytes: tally.writes,
        dram_reads_bytes: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{analytic_cycles, Residency};
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

    #[test]
    fn two_by_two_hand_trace() {
        let cost = cycle_accurate_sim(
            GemmShape { m: 2, k: 3, n: 2 },
            &hw(2, 2, Dataflow::OutputStationary),
        )
        .unwrap();
        assert_eq!(cost.compute_cycles, 5);
        assert_eq!(cost.macs, 12);
    }

    #[test]
    fn single_pe_is_serial() {
        let shape = GemmShape { m: 3, k: 4, n: 5 };
        let os = cycle_accurate_sim(shape, &hw(1, 1, Dataflow::OutputStationary)).unwrap();
        assert_eq!(os.compute_cycles, 60);
        // WS and IS add one preload cycle per stationary element.
        let ws = cycle_accurate_sim(shape, &hw(1, 1, Dataflow::WeightStationary)).unwrap();
        assert_eq!(ws.compute_cycles, 60 + 4 * 5);
        let is = cycle_accurate_sim(shape, &hw(1, 1, Dataflow::InputStationary)).unwrap();
        assert_eq!(is.compute_cycles, 60 + 3 * 4);
    }

    #[test]
    fn ws_projection_downscaled() {
        // Same shape family as the 32×32 example, scaled to a 4×4 array.
        let spec = hw(4, 4, Dataflow::WeightStationary);
        let shape = GemmShape { m: 1, k: 16, n: 64 };
        let sim = cycle_accurate_sim(shape, &spec).unwrap();
        let closed = analytic_cycles(shape, &spec, Residency::OnChip).unwrap();
        assert_eq!(sim.compute_cycles, closed.compute_cycles);
        assert_eq!(sim.compute_cycles, 4 * 16 * (4 + 1 + 4 + 4 - 2));
    }

    #[test]
    fn traffic_matches_closed_form_on_full_tiles() {
        for df in Dataflow::ALL {
            let spec = hw(3, 4, df);
            let shape = GemmShape { m: 6, k: 12, n: 8 };
            let sim = cycle_accurate_sim(shape, &spec).unwrap();
            let closed = analytic_cycles(shape, &spec, Residency::OnChip).unwrap();
            assert_eq!(sim.sram_reads_bytes, closed.sram_reads_bytes, "{df} reads");
            assert_eq!(sim.sram_writes_bytes, closed.sram_writes_bytes, "{df} writes");
        }
    }

    #[test]
    fn refuses_oversized_runs() {
        let err = cycle_accurate_sim(
            GemmShape {
                m: 1 << 10,
                k: 1 << 10,
                n: 1 << 5,
            },
            &TpuSpec::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SimulationTooLarge { .. }));
    }
}
