use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hybridsim::config::{load_hardware, load_model, parse_configs, zoo_models, DEFAULT_CONTEXT_LENS};
use hybridsim::engine::{breakdown_percentages, simulate_token, ArchMode};
use hybridsim::metrics::simulate_report;
use hybridsim::report::{emit, format_sig6, to_json_value, OutputFormat, RunRecord};
use hybridsim::sweep::{compare_dataflows, fraction_table, run_sweep};
use hybridsim::{Error, HardwareSpec, ModelSpec, Result};

#[derive(Parser)]
#[command(name = "hybridsim", version, about = "Hybrid crossbar + systolic-array LLM decode simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hybrid,
    TpuOnly,
}

impl From<ModeArg> for ArchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hybrid => ArchMode::Hybrid,
            ModeArg::TpuOnly => ArchMode::TpuOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one (model, context length, mode) and print its report.
    Simulate {
        /// Zoo name (e.g. opt-6.7b) or path to a model file.
        #[arg(long)]
        model: String,
        /// Hardware config file; defaults apply to anything it leaves out.
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        ctx: u64,
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: ModeArg,
        /// Print the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a models × context lengths × modes grid and write CSV or JSON.
    Sweep {
        /// Models to sweep (default: the whole zoo).
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ctx: Vec<u64>,
        #[arg(long, value_enum, value_delimiter = ',')]
        mode: Vec<ModeArg>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Compare whole-step systolic cycles across OS, WS and IS dataflows.
    Dataflows {
        #[arg(long)]
        model: String,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        ctx: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Latency share of each cost category.
    Breakdown {
        #[arg(long)]
        model: String,
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        ctx: u64,
        #[arg(long, value_enum, default_value = "hybrid")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Share of MACs with 1-bit weights, per model and context length.
    Fractions {
        #[arg(long, value_delimiter = ',')]
        model: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        ctx: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn models_or_zoo(names: &[String]) -> Result<Vec<ModelSpec>> {
    if names.is_empty() {
        Ok(zoo_models())
    } else {
        names.iter().map(|n| load_model(n)).collect()
    }
}

fn ctx_or_default(ctx: Vec<u64>) -> Vec<u64> {
    if ctx.is_empty() {
        DEFAULT_CONTEXT_LENS.to_vec()
    } else {
        ctx
    }
}

fn note_calibration(hw: &HardwareSpec) {
    if hw.calibration == hybridsim::config::Calibration::Uncalibrated {
        eprintln!(
            "note: cost parameters include uncalibrated placeholder defaults; \
             absolute numbers are illustrative, trends are what the model captures"
        );
    }
}

/// Writes CSV-style `rows` to `out` or stdout.
fn write_table(header: &[&str], rows: Vec<Vec<String>>, out: Option<PathBuf>) -> Result<()> {
    let sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::Config {
            path: p.clone(),
            message: format!("cannot write output: {e}"),
        })?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(sink);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            model,
            hw,
            ctx,
            mode,
            json,
        } => {
            let cfg = parse_configs(&model, hw.as_deref())?;
            let model = cfg.model.with_context(ctx)?;
            let report = simulate_report(&model, &cfg.hardware, mode.into())?;
            if json {
                let record = RunRecord::from_report(&report, cfg.hardware.calibration);
                let value = to_json_value(&[record]);
                println!("{}", serde_json::to_string_pretty(&value[0])?);
            } else {
                note_calibration(&cfg.hardware);
                println!("model              {}", report.model);
                println!("context length     {}", report.context_len);
                println!("mode               {}", report.mode);
                println!("dataflow           {}", report.dataflow);
                println!("latency (s)        {}", format_sig6(report.cost.total_latency()));
                println!("energy (J)         {}", format_sig6(report.cost.total_energy()));
                println!("tokens/s           {}", format_sig6(report.tokens_per_s));
                println!("tokens/J           {}", format_sig6(report.tokens_per_joule));
                println!("words/battery      {}", format_sig6(report.words_per_battery));
                println!("GOPS               {}", format_sig6(report.gops));
                println!("GOPS/W             {}", format_sig6(report.gops_per_watt));
                println!("speedup vs TPU     {}", format_sig6(report.speedup_vs_tpu));
                for (c, pct) in &report.breakdown {
                    println!("  {:<16} {:>10}%", c.column_name(), format_sig6(*pct));
                }
            }
        }
        Command::Sweep {
            model,
            hw,
            ctx,
            mode,
            out,
            format,
        } => {
            let models = models_or_zoo(&model)?;
            let (hw, _) = load_hardware(hw.as_deref())?;
            note_calibration(&hw);
            let modes: Vec<ArchMode> = if mode.is_empty() {
                ArchMode::ALL.to_vec()
            } else {
                mode.into_iter().map(Into::into).collect()
            };
            let records = run_sweep(&models, &hw, &ctx_or_default(ctx), &modes)?;
            emit(&records, format.into(), &out)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Dataflows { model, hw, ctx, out } => {
            let cfg = parse_configs(&model, hw.as_deref())?;
            let model = cfg.model.with_context(ctx)?;
            let rows = compare_dataflows(&model, &cfg.hardware)?;
            eprintln!(
                "note: the reference design reports OS as the fastest dataflow; \
                 these totals depend on the GEMM orientation and memory model used here"
            );
            write_table(
                &[
                    "model",
                    "context_len",
                    "dataflow",
                    "compute_cycles",
                    "stall_cycles",
                    "total_cycles",
                    "sram_read_bytes",
                    "sram_write_bytes",
                ],
                rows.into_iter()
                    .map(|r| {
                        vec![
                            model.name.clone(),
                            model.context_len.to_string(),
                            r.dataflow.to_string(),
                            r.compute_cycles.to_string(),
                            r.stall_cycles.to_string(),
                            r.total_cycles.to_string(),
                            r.sram_reads_bytes.to_string(),
                            r.sram_writes_bytes.to_string(),
                        ]
                    })
                    .collect(),
                out,
            )?;
        }
        Command::Breakdown {
            model,
            hw,
            ctx,
            mode,
            out,
        } => {
            let cfg = parse_configs(&model, hw.as_deref())?;
            let model = cfg.model.with_context(ctx)?;
            note_calibration(&cfg.hardware);
            let cost = simulate_token(&model, &cfg.hardware, mode.into())?;
            let pct = breakdown_percentages(&cost)?;
            write_table(
                &["category", "latency_s", "percent"],
                pct.into_iter()
                    .map(|(c, p)| {
                        vec![
                            c.column_name().to_string(),
                            format_sig6(cost.latency(c)),
                            format_sig6(p),
                        ]
                    })
                    .collect(),
                out,
            )?;
        }
        Command::Fractions { model, ctx, out } => {
            let models = models_or_zoo(&model)?;
            let rows = fraction_table(&models, &ctx_or_default(ctx))?;
            write_table(
                &["model", "context_len", "low_macs", "high_macs", "low_fraction"],
                rows.into_iter()
                    .map(|r| {
                        vec![
                            r.model,
                            r.context_len.to_string(),
                            r.low_macs.to_string(),
                            r.high_macs.to_string(),
                            format_sig6(r.low_fraction),
                        ]
                    })
                    .collect(),
                out,
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
