//! Hardware description, config-file ingestion and the bundled model zoo.
//!
//! Config files are TOML with up to four tables: `[model]`, `[tpu]`, `[pim]`
//! and `[system]`. Every key is optional except the model fields; unknown
//! keys are rejected. Each value filled from a default is reported together
//! with where that default comes from.

use std::fmt;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pim::PimSpec;
use crate::systolic::{Dataflow, TpuSpec};
use crate::workload::ModelSpec;

/// Context length used when a model file does not pin one.
pub const DEFAULT_CONTEXT_LEN: u64 = 128;

/// Context lengths swept by default.
pub const DEFAULT_CONTEXT_LENS: [u64; 6] = [128, 256, 512, 1024, 2048, 4096];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub battery_joules: f64,
    pub tokens_per_word: f64,
    pub lpddr_bw_bytes_per_ns: f64,
    pub lpddr_energy_pj_per_byte: f64,
    /// Operations credited per MAC when computing GOPS.
    pub ops_per_mac: f64,
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self {
            // 5 Wh edge battery.
            battery_joules: 18_000.0,
            tokens_per_word: 1.5,
            lpddr_bw_bytes_per_ns: 12.8,
            lpddr_energy_pj_per_byte: 30.0,
            ops_per_mac: 2.0,
        }
    }
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("battery_joules", self.battery_joules),
            ("tokens_per_word", self.tokens_per_word),
            ("lpddr_bw_bytes_per_ns", self.lpddr_bw_bytes_per_ns),
            ("ops_per_mac", self.ops_per_mac),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidHardware(format!(
                    "system: {name} must be positive and finite"
                )));
            }
        }
        if !(self.lpddr_energy_pj_per_byte >= 0.0 && self.lpddr_energy_pj_per_byte.is_finite()) {
            return Err(Error::InvalidHardware(
                "system: lpddr_energy_pj_per_byte must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Whether any cost parameter still sits at an uncalibrated placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Calibration {
    Uncalibrated,
    UserSupplied,
}

impl Calibration {
    pub fn as_str(self) -> &'static str {
        match self {
            Calibration::Uncalibrated => "uncalibrated",
            Calibration::UserSupplied => "user-supplied",
        }
    }
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareSpec {
    pub tpu: TpuSpec,
    pub pim: PimSpec,
    pub system: SystemSpec,
    pub calibration: Calibration,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        Self {
            tpu: TpuSpec::default(),
            pim: PimSpec::default(),
            system: SystemSpec::default(),
            calibration: Calibration::Uncalibrated,
        }
    }
}

impl HardwareSpec {
    pub fn validate(&self) -> Result<()> {
        self.tpu.validate()?;
        self.pim.validate()?;
        self.system.validate()
    }

    pub fn with_dataflow(&self, dataflow: Dataflow) -> Self {
        Self {
            tpu: self.tpu.with_dataflow(dataflow),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    /// Stated in the published architecture description.
    Published,
    /// Stand-in value; not calibrated against any synthesized design.
    Placeholder,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Published => "published constant",
            Provenance::Placeholder => "uncalibrated placeholder",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefaultUsed {
    pub key: String,
    pub value: String,
    pub provenance: Provenance,
}

impl fmt::Display for DefaultUsed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} ({})", self.key, self.value, self.provenance)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    model: Option<RawModel>,
    tpu: Option<RawTpu>,
    pim: Option<RawPim>,
    system: Option<RawSystem>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: String,
    d: u64,
    h: u64,
    d_ff: u64,
    n_layers: u64,
    context_len: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTpu {
    rows: Option<u64>,
    cols: Option<u64>,
    freq_hz: Option<f64>,
    dataflow: Option<String>,
    sram_input_bytes: Option<u64>,
    sram_weight_bytes: Option<u64>,
    sram_output_bytes: Option<u64>,
    sram_bw_bytes_per_cycle: Option<u64>,
    dram_bw_bytes_per_cycle: Option<f64>,
    mac_energy_pj: Option<f64>,
    sram_energy_pj_per_byte: Option<f64>,
    dram_energy_pj_per_byte: Option<f64>,
    nfu_cycles_per_element: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPim {
    xbar_rows: Option<u64>,
    xbar_cols: Option<u64>,
    adc_bits: Option<u32>,
    act_bits: Option<u32>,
    adcs_per_xbar: Option<u64>,
    t_dac_ns: Option<f64>,
    t_xbar_ns: Option<f64>,
    t_adc_ns: Option<f64>,
    e_dac_pj: Option<f64>,
    e_xbar_pj_per_row: Option<f64>,
    e_adc_pj: Option<f64>,
    xbars_per_pe: Option<u64>,
    pes_per_tile: Option<u64>,
    tiles_per_bank: Option<u64>,
    banks: Option<u64>,
    noc_bw_bytes_per_ns: Option<f64>,
    noc_energy_pj_per_byte: Option<f64>,
    buffer_bw_bytes_per_ns: Option<f64>,
    buffer_energy_pj_per_byte: Option<f64>,
    peripheral_ns_per_element: Option<f64>,
    peripheral_pj_per_element: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    battery_joules: Option<f64>,
    tokens_per_word: Option<f64>,
    lpddr_bw_bytes_per_ns: Option<f64>,
    lpddr_energy_pj_per_byte: Option<f64>,
    ops_per_mac: Option<f64>,
}

/// Copies present keys over the defaults and records every absent one.
macro_rules! merge {
    ($raw:expr, $target:expr, $section:literal, $log:expr, { $($field:ident => $prov:ident),* $(,)? }) => {
        $(
            match $raw.$field {
                Some(v) => $target.$field = v,
                None => $log.push(DefaultUsed {
                    key: concat!($section, ".", stringify!($field)).to_string(),
                    value: format!("{:?}", $target.$field),
                    provenance: Provenance::$prov,
                }),
            }
        )*
    };
}

fn build_hardware(
    tpu: RawTpu,
    pim: RawPim,
    system: RawSystem,
    log: &mut Vec<DefaultUsed>,
) -> Result<HardwareSpec> {
    let mut hw = HardwareSpec::default();

    let dataflow = tpu.dataflow.as_deref().map(str::parse::<Dataflow>).transpose()?;
    let mut t = RawTpu {
        dataflow: None,
        ..tpu
    };
    match dataflow {
        Some(df) => hw.tpu.dataflow = df,
        None => log.push(DefaultUsed {
            key: "tpu.dataflow".into(),
            value: hw.tpu.dataflow.to_string(),
            provenance: Provenance::Published,
        }),
    }
    let mut sram = hw.tpu.sram_bytes;
    for (key, raw, slot) in [
        ("tpu.sram_input_bytes", t.sram_input_bytes.take(), &mut sram.input),
        ("tpu.sram_weight_bytes", t.sram_weight_bytes.take(), &mut sram.weight),
        ("tpu.sram_output_bytes", t.sram_output_bytes.take(), &mut sram.output),
    ] {
        match raw {
            Some(v) => *slot = v,
            None => log.push(DefaultUsed {
                key: key.into(),
                value: slot.to_string(),
                provenance: Provenance::Published,
            }),
        }
    }
    hw.tpu.sram_bytes = sram;
    merge!(t, hw.tpu, "tpu", log, {
        rows => Published,
        cols => Published,
        freq_hz => Published,
        sram_bw_bytes_per_cycle => Placeholder,
        dram_bw_bytes_per_cycle => Placeholder,
        mac_energy_pj => Placeholder,
        sram_energy_pj_per_byte => Placeholder,
        dram_energy_pj_per_byte => Placeholder,
        nfu_cycles_per_element => Published,
    });

    merge!(pim, hw.pim, "pim", log, {
        xbar_rows => Published,
        xbar_cols => Published,
        adc_bits => Published,
        act_bits => Published,
        adcs_per_xbar => Placeholder,
        t_dac_ns => Placeholder,
        t_xbar_ns => Placeholder,
        t_adc_ns => Placeholder,
        e_dac_pj => Placeholder,
        e_xbar_pj_per_row => Placeholder,
        e_adc_pj => Placeholder,
        xbars_per_pe => Placeholder,
        pes_per_tile => Placeholder,
        tiles_per_bank => Placeholder,
        banks => Placeholder,
        noc_bw_bytes_per_ns => Placeholder,
        noc_energy_pj_per_byte => Placeholder,
        buffer_bw_bytes_per_ns => Placeholder,
        buffer_energy_pj_per_byte => Placeholder,
        peripheral_ns_per_element => Placeholder,
        peripheral_pj_per_element => Placeholder,
    });

    merge!(system, hw.system, "system", log, {
        battery_joules => Published,
        tokens_per_word => Published,
        lpddr_bw_bytes_per_ns => Placeholder,
        lpddr_energy_pj_per_byte => Placeholder,
        ops_per_mac => Placeholder,
    });

    hw.calibration = if log.iter().any(|d| d.provenance == Provenance::Placeholder) {
        Calibration::Uncalibrated
    } else {
        Calibration::UserSupplied
    };
    hw.validate()?;
    Ok(hw)
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub model: ModelSpec,
    pub hardware: HardwareSpec,
    pub defaults: Vec<DefaultUsed>,
}

fn read_document(path: &Path) -> Result<RawDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: format!("cannot read file: {e}"),
    })?;
    parse_document(&text, path)
}

fn parse_document(text: &str, path: &Path) -> Result<RawDocument> {
    toml::from_str(text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn model_from_raw(raw: RawModel, log: &mut Vec<DefaultUsed>) -> Result<ModelSpec> {
    let context_len = raw.context_len.unwrap_or_else(|| {
        log.push(DefaultUsed {
            key: "model.context_len".into(),
            value: DEFAULT_CONTEXT_LEN.to_string(),
            provenance: Provenance::Published,
        });
        DEFAULT_CONTEXT_LEN
    });
    ModelSpec::new(raw.name, raw.d, raw.h, raw.d_ff, raw.n_layers, context_len)
}

fn model_document(text: &str, path: &Path, log: &mut Vec<DefaultUsed>) -> Result<ModelSpec> {
    let doc = parse_document(text, path)?;
    if doc.tpu.is_some() || doc.pim.is_some() || doc.system.is_some() {
        return Err(Error::Config {
            path: path.to_path_buf(),
            message: "hardware sections belong in the hardware file".into(),
        });
    }
    let raw = doc.model.ok_or_else(|| Error::Config {
        path: path.to_path_buf(),
        message: "missing [model] section".into(),
    })?;
    model_from_raw(raw, log)
}

/// Loads a model by zoo name or file path.
pub fn load_model(name_or_path: &str) -> Result<ModelSpec> {
    load_model_logged(name_or_path, &mut Vec::new())
}

fn load_model_logged(name_or_path: &str, log: &mut Vec<DefaultUsed>) -> Result<ModelSpec> {
    let path = Path::new(name_or_path);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return model_document(&text, path, log);
    }
    match zoo_source(name_or_path) {
        Some(text) => model_document(text, Path::new(name_or_path), log),
        None if path.extension().is_some() || name_or_path.contains('/') => Err(Error::Config {
            path: path.to_path_buf(),
            message: "file does not exist".into(),
        }),
        None => Err(Error::UnknownModel(name_or_path.to_string())),
    }
}

/// Reads a hardware file; `None` means all defaults.
pub fn load_hardware(path: Option<&Path>) -> Result<(HardwareSpec, Vec<DefaultUsed>)> {
    let doc = match path {
        Some(p) => read_document(p)?,
        None => RawDocument::default(),
    };
    if doc.model.is_some() {
        return Err(Error::Config {
            path: path.map(Path::to_path_buf).unwrap_or_default(),
            message: "[model] belongs in the model file".into(),
        });
    }
    let mut log = Vec::new();
    let hw = build_hardware(
        doc.tpu.unwrap_or_default(),
        doc.pim.unwrap_or_default(),
        doc.system.unwrap_or_default(),
        &mut log,
    )
    .map_err(|e| match (e, path) {
        (Error::InvalidHardware(msg), Some(p)) => Error::Config {
            path: p.to_path_buf(),
            message: msg,
        },
        (e, _) => e,
    })?;
    Ok((hw, log))
}

/// Parses a model (zoo name or path) and an optional hardware file.
pub fn parse_configs(model: &str, hw_path: Option<&Path>) -> Result<LoadedConfig> {
    let mut defaults = Vec::new();
    let model = load_model_logged(model, &mut defaults)?;
    let (hardware, hw_defaults) = load_hardware(hw_path)?;
    defaults.extend(hw_defaults);
    for d in &defaults {
        info!("default {d}");
    }
    Ok(LoadedConfig {
        model,
        hardware,
        defaults,
    })
}

const ZOO: [(&str, &str); 7] = [
    ("gpt-355m", include_str!("../zoo/gpt-355m.toml")),
    ("gpt-774m", include_str!("../zoo/gpt-774m.toml")),
    ("gpt-1.5b", include_str!("../zoo/gpt-1.5b.toml")),
    ("opt-1.3b", include_str!("../zoo/opt-1.3b.toml")),
    ("opt-2.7b", include_str!("../zoo/opt-2.7b.toml")),
    ("opt-6.7b", include_str!("../zoo/opt-6.7b.toml")),
    ("llama-7b", include_str!("../zoo/llama-7b.toml")),
];

fn zoo_source(name: &str) -> Option<&'static str> {
    let name = name.to_ascii_lowercase();
    ZOO.iter().find(|(n, _)| *n == name).map(|(_, src)| *src)
}

pub fn zoo_names() -> impl Iterator<Item = &'static str> {
    ZOO.iter().map(|(n, _)| *n)
}

/// Every bundled model at the default context length.
pub fn zoo_models() -> Vec<ModelSpec> {
    zoo_names()
        .map(|n| load_model(n).expect("bundled zoo entry is valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".toml").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn zoo_opt_6_7b() {
        let m = load_model("opt-6.7b").unwrap();
        assert_eq!((m.d, m.h, m.d_ff, m.n_layers), (4096, 32, 16384, 32));
        assert_eq!(zoo_models().len(), 7);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let f = temp("[model]\nname = \"bad\"\nd = 10\nh = 3\nd_ff = 4\nn_layers = 1\n");
        let err = load_model(f.path().to_str().unwrap()).unwrap_err();
        assert!(err.to_string().contains("d not divisible by h"), "{err}");
    }

    #[test]
    fn empty_hardware_file_is_all_defaults() {
        let f = temp("");
        let (hw, log) = load_hardware(Some(f.path())).unwrap();
        assert_eq!(hw, HardwareSpec::default());
        assert_eq!(log.len(), 13 + 21 + 5);
        assert!(log
            .iter()
            .any(|d| d.key == "pim.t_adc_ns" && d.provenance == Provenance::Placeholder));
        assert!(log
            .iter()
            .any(|d| d.key == "system.battery_joules" && d.provenance == Provenance::Published));
        assert_eq!(hw.calibration, Calibration::Uncalibrated);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let f = temp("[tpu]\nrow = 16\n");
        let err = load_hardware(Some(f.path())).unwrap_err();
        assert!(err.to_string().contains("row"), "{err}");
        let f = temp("[gpu]\n");
        assert!(load_hardware(Some(f.path())).is_err());
    }

    #[test]
    fn overrides_apply() {
        let f = temp("[tpu]\nrows = 16\ndataflow = \"WS\"\nsram_weight_bytes = 1024\n[pim]\nadcs_per_xbar = 64\n");
        let (hw, log) = load_hardware(Some(f.path())).unwrap();
        assert_eq!(hw.tpu.rows, 16);
        assert_eq!(hw.tpu.dataflow, Dataflow::WeightStationary);
        assert_eq!(hw.tpu.sram_bytes.weight, 1024);
        assert_eq!(hw.pim.adcs_per_xbar, 64);
        assert!(!log.iter().any(|d| d.key == "tpu.rows" || d.key == "tpu.dataflow"));
    }

    #[test]
    fn invariant_violation_names_the_file() {
        let f = temp("[pim]\nxbar_cols = 16\nadcs_per_xbar = 32\n");
        let err = load_hardware(Some(f.path())).unwrap_err();
        assert!(err.to_string().contains("adcs_per_xbar"), "{err}");
    }

    #[test]
    fn missing_files() {
        assert!(load_hardware(Some(Path::new("/nonexistent/hw.toml"))).is_err());
        assert!(matches!(
            load_model("not-a-model"),
            Err(Error::UnknownModel(_))
        ));
        assert!(matches!(
            load_model("/nonexistent/m.toml"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn parse_configs_logs_context_default() {
        let cfg = parse_configs("gpt-355m", None).unwrap();
        assert_eq!(cfg.model.context_len, DEFAULT_CONTEXT_LEN);
        assert!(cfg.defaults.iter().any(|d| d.key == "model.context_len"));
    }

    #[test]
    fn sections_stay_in_their_files() {
        let f = temp("[model]\nname = \"m\"\nd = 4\nh = 1\nd_ff = 4\nn_layers = 1\n[tpu]\nrows = 2\n");
        assert!(load_model(f.path().to_str().unwrap()).is_err());
        assert!(load_hardware(Some(f.path())).is_err());
    }
}
