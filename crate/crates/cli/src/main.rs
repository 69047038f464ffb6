//! `tcs`: simulate, analyze and deconvolve double/triple Compton polarimetry runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use tcs_core::config::RunConfig;
use tcs_core::pipeline::{analyze_stream, run_simulate};
use tcs_core::report::{deconvolve_reports, write_analysis, write_deconvolution, Report};
use tcs_core::xsec_table::{xsec_table_csv, XsecGrid};

const SCHEMAS_DOC: &str = include_str!("../../../docs/SCHEMAS.md");
const CONFIG_SCHEMA: &str = include_str!("../../../schemas/config.schema.json");
const REPORT_SCHEMA: &str = include_str!("../../../schemas/report.schema.json");
const TRUTH_SCHEMA: &str = include_str!("../../../schemas/truth-event.schema.json");
const DETECTOR_SCHEMA: &str = include_str!("../../../schemas/detector-event.schema.json");
const PROVENANCE_SCHEMA: &str = include_str!("../../../schemas/provenance.schema.json");

const DEFAULT_OUTPUT_DIR: &str = "tcs-out";

#[derive(Parser)]
#[command(name = "tcs", version, about = "Compton polarimetry of entangled annihilation photons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutDir {
    /// Output directory; defaults to the config's output_dir, then $TCS_OUTPUT_DIR, then ./tcs-out.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate events and write the truth and digitized streams plus provenance.
    Simulate(RunArgs),
    /// Simulate and analyze in one pass.
    Run(RunArgs),
    /// Analyze an event stream (truth or digitized, plain or gzip).
    Analyze {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, short)]
        events: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Deconvolve an experimental R series with simulated "all" and TCS series.
    Deconvolve {
        #[arg(long)]
        expt: PathBuf,
        #[arg(long)]
        sim_all: PathBuf,
        #[arg(long)]
        sim_tcs: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Tabulate cross sections and R over a grid.
    Xsec {
        #[arg(long, short)]
        grid: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the file-format documentation, or one JSON schema.
    #[command(long_about = SCHEMAS_DOC)]
    Report {
        #[arg(long, value_enum)]
        schema: Option<SchemaName>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaName {
    Config,
    Report,
    Truth,
    Detector,
    Provenance,
}

fn output_dir(flag: &OutDir, cfg: Option<&RunConfig>) -> PathBuf {
    flag.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os("TCS_OUTPUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn load_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

fn simulate(args: &RunArgs, analyze: bool) -> anyhow::Result<()> {
    let cfg = load_config(args)?;
    let run = cfg.resolve()?;
    let dir = output_dir(&args.out, Some(&cfg));
    let out = run_simulate(&run, &dir, analyze)?;
    print_files(&out.files);
    if let Some(acc) = &out.accumulator {
        let (report, hists) = Report::from_accumulator(&run, acc)?;
        print_files(&write_analysis(&dir, &report, &hists)?);
    }
    Ok(())
}

fn analyze(config: &Path, events: &Path, out: &OutDir) -> anyhow::Result<()> {
    let cfg = RunConfig::load(config)?;
    let run = cfg.resolve()?;
    let (acc, _) = analyze_stream(&run, events)?;
    let (report, hists) = Report::from_accumulator(&run, &acc)?;
    print_files(&write_analysis(&output_dir(out, Some(&cfg)), &report, &hists)?);
    Ok(())
}

fn xsec(grid: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(grid).map_err(|e| tcs_core::Error::Io { path: grid.display().to_string(), source: e })?;
    let csv = xsec_table_csv(&XsecGrid::from_json(&text)?)?;
    match out {
        Some(p) => std::fs::write(p, csv).map_err(|e| tcs_core::Error::Io { path: p.display().to_string(), source: e })?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, false),
        Command::Run(a) => simulate(&a, true),
        Command::Analyze { config, events, out } => analyze(&config, &events, &out),
        Command::Deconvolve { expt, sim_all, sim_tcs, out } => {
            let load = |p: &Path| Report::load(p).with_context(|| format!("reading {}", p.display()));
            let r = deconvolve_reports(&load(&expt)?, &load(&sim_all)?, &load(&sim_tcs)?)?;
            println!("{}", write_deconvolution(&output_dir(&out, None), &r)?.display());
            Ok(())
        }
        Command::Xsec { grid, out } => xsec(&grid, out.as_deref()),
        Command::Report { schema } => {
            print!(
                "{}",
                match schema {
                    None => SCHEMAS_DOC,
                    Some(SchemaName::Config) => CONFIG_SCHEMA,
                    Some(SchemaName::Report) => REPORT_SCHEMA,
                    Some(SchemaName::Truth) => TRUTH_SCHEMA,
                    Some(SchemaName::Detector) => DETECTOR_SCHEMA,
                    Some(SchemaName::Provenance) => PROVENANCE_SCHEMA,
                }
            );
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<tcs_core::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(5)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
