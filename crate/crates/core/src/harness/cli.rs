//! `qprox` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad configuration (unknown
//! key, unparsable value, bad usage), 3 violated precondition.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{exit_code, parse_bits, prepare, reproduce_fig1, RunConfig};
use crate::analysis::analyze;
use crate::central::Trace;
use crate::distributed::save_quant_log;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::problem::{generator_csv, save_instance};

#[derive(Debug, Parser)]
#[command(name = "qprox", version, about = "Distributed Prox-SVRG with dithered quantization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; replaces `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Codeword width, or `unquantized`.
    #[arg(long)]
    bits: Option<String>,
    /// Number of outer rounds.
    #[arg(long)]
    outer: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run even when the step-size precondition fails.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an instance container and the CSV of its generator vector.
    Generate(Common),
    /// Run centralized inexact Prox-SVRG and write its trace.
    RunCentral(Common),
    /// Run the distributed quantized method; writes the trace, bit ledger and
    /// (with `keep_log = true`) the quantization log.
    RunDistributed(Common),
    /// Constants, fitted rates and envelope verdicts for a trace.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Trace CSV to analyze; the configured distributed run otherwise.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run n = 11, 13, 15 and unquantized on one instance.
    ReproduceFig1(Common),
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::parse(&fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.master_seed = seed;
    }
    if let Some(bits) = &c.bits {
        cfg.bits = parse_bits(bits)
            .ok_or_else(|| Error::Config { line: 0, message: format!("--bits must be an integer or `unquantized`, got `{bits}`") })?;
    }
    if let Some(outer) = c.outer {
        cfg.outer = outer;
    }
    if let Some(out) = &c.out {
        cfg.out = Some(out.clone());
    }
    cfg.force |= c.force;
    Ok(cfg)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn warn(prep: &super::Prepared) {
    for w in &prep.warnings {
        eprintln!("warning: {w}");
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(c) => {
            let cfg = load_config(&c)?;
            let inst = super::load_or_generate(&cfg)?;
            let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("instance.qprx"));
            let mut w = BufWriter::new(File::create(&out)?);
            save_instance(&inst, &mut w)?;
            w.flush()?;
            fs::write(sibling(&out, "xgen.csv"), generator_csv(&inst))?;
            let report = inst.smoothness();
            eprintln!(
                "wrote {} (P = {}, L_bar = {:.6}, mu = {:.6})",
                out.display(),
                inst.dim(),
                report.l_bar,
                report.mu
            );
        }
        Command::RunCentral(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            warn(&prep);
            emit(cfg.out.as_deref(), &prep.run_central(&cfg)?.to_csv())?;
        }
        Command::RunDistributed(c) => {
            let cfg = load_config(&c)?;
            let prep = prepare(&cfg)?;
            warn(&prep);
            let run = prep.run_distributed(&cfg)?;
            emit(cfg.out.as_deref(), &run.trace.to_csv())?;
            if let Some(out) = &cfg.out {
                fs::write(sibling(out, "ledger.csv"), run.ledger.to_csv())?;
                if let Some(log) = &run.log {
                    let mut w = BufWriter::new(File::create(sibling(out, "log.qprx"))?);
                    save_quant_log(log, &prep.inst, &mut w)?;
                    w.flush()?;
                }
            }
            if run.trace.total_overflows() > 0 {
                eprintln!("warning: {} overflow events; envelope statements void", run.trace.total_overflows());
            }
        }
        Command::Analyze { common, trace } => {
            let cfg = load_config(&common)?;
            let prep = prepare(&cfg)?;
            warn(&prep);
            let trace = match trace {
                Some(path) => Trace::from_csv(&fs::read_to_string(path)?)?,
                None => prep.run_distributed(&cfg)?.trace,
            };
            let report = analyze(&trace, &prep.envelope_params(&cfg))?;
            emit(cfg.out.as_deref(), &report.to_csv())?;
            let summary = report.summary();
            if let Some(out) = &cfg.out {
                fs::write(sibling(out, "summary.txt"), &summary)?;
            }
            eprint!("{summary}");
        }
        Command::ReproduceFig1(c) => {
            let cfg = load_config(&c)?;
            let fig = reproduce_fig1(&cfg, Execution::default())?;
            emit(cfg.out.as_deref(), &fig.to_csv())?;
            eprint!("{}", fig.summary());
        }
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
