use std::path::PathBuf;
use std::process::ExitCode;

use beaconsim_cli::figures::{
    figure_sweeps, render_table3, table3_rows, write_median_ranges, Figure, TABLE3_COLUMNS,
};
use beaconsim_cli::output::{probe_writable, write_csv};
use beaconsim_cli::sweep::AGGREGATE_FILE;
use beaconsim_cli::{run_sweep, CliError, ConfigDocument, RunSettings, SweepSpec};
use beaconsim_core::phy::render_mcs_table;
use clap::Parser;

/// Simulates periodic V2X beaconing over 802.11p* and LTE-V2X Mode 4.
#[derive(Debug, Parser)]
#[command(name = "beaconsim", version)]
struct Args {
    /// TOML config file; unspecified keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one key, e.g. `--set pt_dbm=8` or `--set sps.keep_probability=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Run the preset sweep behind a figure (fig1..fig6) or print table3.
    #[arg(long, value_name = "NAME")]
    figure: Option<String>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    replications: Option<u32>,

    /// Worker threads (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,

    /// Write per-node MAC traces.
    #[arg(long)]
    trace_mac: bool,

    /// Write per-node CBR/CR/V traces.
    #[arg(long)]
    trace_dcc: bool,

    /// Print the MCS table and exit.
    #[arg(long)]
    print_mcs: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(args: &Args) -> Result<(), CliError> {
    if args.print_mcs {
        print!("{}", render_mcs_table());
        return Ok(());
    }
    let figure = args.figure.as_deref().map(str::parse::<Figure>).transpose()?;
    if figure == Some(Figure::Table3) {
        print!("{}", render_table3());
        probe_writable(&args.out)?;
        write_csv(&args.out.join("table3.csv"), &TABLE3_COLUMNS, &table3_rows())?;
        return Ok(());
    }

    let mut doc = match &args.config {
        Some(p) => ConfigDocument::load(p)?,
        None => ConfigDocument::default(),
    };
    for s in &args.set {
        doc.set(s)?;
    }
    if let Some(seed) = args.seed {
        doc.set(&format!("seed={seed}"))?;
    }
    if let Some(r) = args.replications {
        doc.set(&format!("replications={r}"))?;
    }
    let settings = RunSettings { trace_mac: args.trace_mac, trace_dcc: args.trace_dcc, jobs: args.jobs };

    let specs = match figure {
        Some(f) => {
            let specs = figure_sweeps(f, &doc, &args.out)?;
            if f == Figure::Fig1 {
                let (base, _) = doc.config()?;
                probe_writable(&args.out)?;
                write_median_ranges(&base, &args.out)?;
            }
            specs
        }
        None => vec![SweepSpec::from_document(doc, args.out.clone())],
    };
    for spec in &specs {
        let outcome = run_sweep(spec, &settings)?;
        println!("{} points -> {}", outcome.rows.len(), spec.output_dir.join(AGGREGATE_FILE).display());
    }
    Ok(())
}
