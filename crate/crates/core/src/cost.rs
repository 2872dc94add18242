//! Per-category latency/energy accounting for one token step.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Systolic,
    Xbar,
    Dac,
    Adc,
    Peripheral,
    Communication,
    Buffer,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Systolic,
        Category::Xbar,
        Category::Dac,
        Category::Adc,
        Category::Peripheral,
        Category::Communication,
        Category::Buffer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column_name(self) -> &'static str {
        match self {
            Category::Systolic => "systolic",
            Category::Xbar => "xbar",
            Category::Dac => "dac",
            Category::Adc => "adc",
            Category::Peripheral => "peripheral",
            Category::Communication => "communication",
            Category::Buffer => "buffer",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column_name())
    }
}

/// Latency in seconds and energy in joules, split by [`Category`].
///
/// Totals are always recomputed from the categories in a fixed order, so
/// they are bit-identical across runs and exactly additive.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostResult {
    latency_s: [f64; 7],
    energy_j: [f64; 7],
    /// Systolic-array compute cycles (including NFU work) behind `Systolic`.
    pub tpu_compute_cycles: u64,
    /// SRAM bandwidth stalls, accounted under `Buffer`.
    pub tpu_stall_cycles: u64,
    /// Crossbar cell writes incurred during the step.
    pub crossbar_writes: u64,
}

impl CostResult {
    pub fn single(category: Category, latency_s: f64, energy_j: f64) -> Self {
        let mut c = Self::default();
        c.add_to(category, latency_s, energy_j);
        c
    }

    pub fn add_to(&mut self, category: Category, latency_s: f64, energy_j: f64) {
        debug_assert!(latency_s >= 0.0 && energy_j >= 0.0);
        self.latency_s[category.index()] += latency_s;
        self.energy_j[category.index()] += energy_j;
    }

    pub fn latency(&self, category: Category) -> f64 {
        self.latency_s[category.index()]
    }

    pub fn energy(&self, category: Category) -> f64 {
        self.energy_j[category.index()]
    }

    pub fn total_latency(&self) -> f64 {
        self.latency_s.iter().sum()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy_j.iter().sum()
    }

    pub fn tpu_cycles(&self) -> u64 {
        self.tpu_compute_cycles + self.tpu_stall_cycles
    }

    /// Every entry multiplied by `factor` (cycle counters are left alone).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        out.latency_s.iter_mut().for_each(|v| *v *= factor);
        out.energy_j.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

impl AddAssign for CostResult {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..7 {
            self.latency_s[i] += rhs.latency_s[i];
            self.energy_j[i] += rhs.energy_j[i];
        }
        self.tpu_compute_cycles += rhs.tpu_compute_cycles;
        self.tpu_stall_cycles += rhs.tpu_stall_cycles;
        self.crossbar_writes += rhs.crossbar_writes;
    }
}

impl Add for CostResult {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl std::iter::Sum for CostResult {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}
