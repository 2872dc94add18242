//! Performance and energy simulator for a hybrid accelerator that runs the
//! 1-bit projection layers of decoder-only LLMs on analog crossbars and the
//! 8-bit attention heads on a digital systolic array.
//!
//! The crate is organized bottom-up:
//!
//! - [`workload`]: per-token operation graph and MAC accounting
//! - [`systolic`]: closed-form and cycle-accurate systolic-array cost models
//! - [`pim`]: crossbar mapping, functional MVM emulation, crossbar cost model
//! - [`engine`]: token-step composition for the hybrid and baseline designs
//! - [`metrics`]: tokens/s, tokens/J, words per battery, GOPS, GOPS/W
//! - [`config`], [`sweep`], [`report`]: config files, sweeps and CSV/JSON output

pub mod config;
pub mod cost;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod pim;
pub mod report;
pub mod sweep;
pub mod systolic;
pub mod workload;

pub use config::{parse_configs, HardwareSpec, LoadedConfig};
pub use cost::{Category, CostResult};
pub use engine::{simulate_token, speedup, ArchMode};
pub use error::{Error, Result};
pub use metrics::SimReport;
pub use report::RunRecord;
pub use workload::{build_op_graph, ModelSpec, OpGraph};
