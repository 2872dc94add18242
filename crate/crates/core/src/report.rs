//! Run records and their CSV / JSON encodings.
//!
//! Both formats carry the same columns in the same order. Floats are printed
//! with six significant digits; the JSON numbers are the values of those
//! printed strings, so both files hold identical values.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::Calibration;
use crate::cost::Category;
use crate::engine::ArchMode;
use crate::error::{Error, Result};
use crate::metrics::SimReport;
use crate::systolic::Dataflow;

/// Bumped whenever the column set or order changes.
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: String,
    pub context_len: u64,
    pub mode: ArchMode,
    pub dataflow: Dataflow,
    pub calibration: Calibration,
    pub latency_s: f64,
    pub energy_j: f64,
    pub tokens_per_s: f64,
    pub tokens_per_joule: f64,
    pub words_per_battery: f64,
    pub gops: f64,
    pub gops_per_watt: f64,
    pub speedup_vs_tpu: f64,
    pub category_latency_s: [f64; 7],
    pub category_energy_j: [f64; 7],
    pub category_pct: [f64; 7],
}

impl RunRecord {
    pub fn from_report(report: &SimReport, calibration: Calibration) -> Self {
        let mut pct = [0.0; 7];
        for (c, p) in &report.breakdown {
            pct[c.index()] = *p;
        }
        Self {
            model: report.model.clone(),
            context_len: report.context_len,
            mode: report.mode,
            dataflow: report.dataflow,
            calibration,
            latency_s: report.cost.total_latency(),
            energy_j: report.cost.total_energy(),
            tokens_per_s: report.tokens_per_s,
            tokens_per_joule: report.tokens_per_joule,
            words_per_battery: report.words_per_battery,
            gops: report.gops,
            gops_per_watt: report.gops_per_watt,
            speedup_vs_tpu: report.speedup_vs_tpu,
            category_latency_s: Category::ALL.map(|c| report.cost.latency(c)),
            category_energy_j: Category::ALL.map(|c| report.cost.energy(c)),
            category_pct: pct,
        }
    }

    /// The same record with every float rounded to its printed precision.
    pub fn rounded(&self) -> Self {
        let r = |v: f64| format_sig6(v).parse::<f64>().expect("formatted float parses");
        Self {
            latency_s: r(self.latency_s),
            energy_j: r(self.energy_j),
            tokens_per_s: r(self.tokens_per_s),
            tokens_per_joule: r(self.tokens_per_joule),
            words_per_battery: r(self.words_per_battery),
            gops: r(self.gops),
            gops_per_watt: r(self.gops_per_watt),
            speedup_vs_tpu: r(self.speedup_vs_tpu),
            category_latency_s: self.category_latency_s.map(r),
            category_energy_j: self.category_energy_j.map(r),
            category_pct: self.category_pct.map(r),
            ..self.clone()
        }
    }

    fn scalar_floats(&self) -> [(&'static str, f64); 8] {
        [
            ("latency_s", self.latency_s),
            ("energy_j", self.energy_j),
            ("tokens_per_s", self.tokens_per_s),
            ("tokens_per_joule", self.tokens_per_joule),
            ("words_per_battery", self.words_per_battery),
            ("gops", self.gops),
            ("gops_per_watt", self.gops_per_watt),
            ("speedup_vs_tpu", self.speedup_vs_tpu),
        ]
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![
            Cell::Int(RECORD_SCHEMA_VERSION as u64),
            Cell::Text(self.model.clone()),
            Cell::Int(self.context_len),
            Cell::Text(self.mode.to_string()),
            Cell::Text(self.dataflow.to_string()),
            Cell::Text(self.calibration.to_string()),
        ];
        cells.extend(self.scalar_floats().iter().map(|(_, v)| Cell::Float(*v)));
        for c in Category::ALL {
            cells.push(Cell::Float(self.category_latency_s[c.index()]));
            cells.push(Cell::Float(self.category_energy_j[c.index()]));
            cells.push(Cell::Float(self.category_pct[c.index()]));
        }
        cells
    }

    fn from_cells(fields: &[String]) -> Result<Self> {
        let columns = columns();
        if fields.len() != columns.len() {
            return Err(Error::DimensionMismatch(format!(
                "record has {} fields, expected {}",
                fields.len(),
                columns.len()
            )));
        }
        let bad = |i: usize| Error::OutOfRange(format!("column {}: '{}'", columns[i], fields[i]));
        let float = |i: usize| fields[i].parse::<f64>().map_err(|_| bad(i));
        let int = |i: usize| fields[i].parse::<u64>().map_err(|_| bad(i));
        if int(0)? != RECORD_SCHEMA_VERSION as u64 {
            return Err(bad(0));
        }
        let calibration = match fields[5].as_str() {
            "uncalibrated" => Calibration::Uncalibrated,
            "user-supplied" => Calibration::UserSupplied,
            _ => return Err(bad(5)),
        };
        let mut lat = [0.0; 7];
        let mut en = [0.0; 7];
        let mut pct = [0.0; 7];
        for c in Category::ALL {
            let base = 14 + 3 * c.index();
            lat[c.index()] = float(base)?;
            en[c.index()] = float(base + 1)?;
            pct[c.index()] = float(base + 2)?;
        }
        Ok(Self {
            model: fields[1].clone(),
            context_len: int(2)?,
            mode: fields[3].parse().map_err(|_| bad(3))?,
            dataflow: fields[4].parse().map_err(|_| bad(4))?,
            calibration,
            latency_s: float(6)?,
            energy_j: float(7)?,
            tokens_per_s: float(8)?,
            tokens_per_joule: float(9)?,
            words_per_battery: float(10)?,
            gops: float(11)?,
            gops_per_watt: float(12)?,
            speedup_vs_tpu: float(13)?,
            category_latency_s: lat,
            category_energy_j: en,
            category_pct: pct,
        })
    }
}

enum Cell {
    Int(u64),
    Text(String),
    Float(f64),
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Float(v) => format_sig6(*v),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Float(v) => {
                let printed: f64 = format_sig6(*v).parse().expect("formatted float parses");
                serde_json::Number::from_f64(printed)
                    .map(Value::Number)
                    .unwrap_or(Value::Null)
            }
        }
    }
}

/// Column names in output order.
pub fn columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "schema_version",
        "model",
        "context_len",
        "mode",
        "dataflow",
        "calibration",
        "latency_s",
        "energy_j",
        "tokens_per_s",
        "tokens_per_joule",
        "words_per_battery",
        "gops",
        "gops_per_watt",
        "speedup_vs_tpu",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for c in Category::ALL {
        cols.push(format!("latency_{c}_s"));
        cols.push(format!("energy_{c}_j"));
        cols.push(format!("pct_{c}"));
    }
    cols
}

/// `%.6g`-style formatting: six significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("LowerExp output has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(out);
    w.write_record(columns())?;
    for r in records {
        w.write_record(r.cells().iter().map(Cell::to_csv))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_json_value(records: &[RunRecord]) -> Value {
    let cols = columns();
    Value::Array(
        records
            .iter()
            .map(|r| {
                let obj: Map<String, Value> = cols
                    .iter()
                    .cloned()
                    .zip(r.cells().iter().map(Cell::to_json))
                    .collect();
                Value::Object(obj)
            })
            .collect(),
    )
}

pub fn write_json<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &to_json_value(records))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes `records` to `path` in the chosen format.
pub fn emit(records: &[RunRecord], format: OutputFormat, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Empty("no records to emit"));
    }
    let file = File::create(path).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: format!("cannot write output: {e}"),
    })?;
    let mut out = BufWriter::new(file);
    match format {
        OutputFormat::Csv => write_csv(records, &mut out)?,
        OutputFormat::Json => write_json(records, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != columns() {
        return Err(Error::DimensionMismatch("CSV header does not match the record schema".into()));
    }
    rdr.records()
        .map(|row| {
            let fields: Vec<String> = row?.iter().map(str::to_string).collect();
            RunRecord::from_cells(&fields)
        })
        .collect()
}

pub fn parse_json(text: &str) -> Result<Vec<RunRecord>> {
    let value: Value = serde_json::from_str(text)?;
    let rows = value
        .as_array()
        .ok_or_else(|| Error::DimensionMismatch("JSON output must be an array".into()))?;
    let cols = columns();
    rows.iter()
        .map(|row| {
            let fields = cols
                .iter()
                .map(|c| match row.get(c) {
                    Some(Value::String(s)) => Ok(s.clone()),
                    Some(Value::Number(n)) => Ok(n.to_string()),
                    _ => Err(Error::DimensionMismatch(format!("missing field {c}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            RunRecord::from_cells(&fields)
        })
        .collect()
}
