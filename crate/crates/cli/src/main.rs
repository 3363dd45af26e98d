use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::builder::PossibleValuesParser;
use clap::{Parser, Subcommand};
use veisim_core::pipeline::{self, Overrides, TimingShift};
use veisim_core::variants::VariantId;

#[derive(Parser)]
#[command(name = "veisim", version, about = "Reconstruct and replay vehicle / e-scooter encounters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a scenario file from a GPS log and rider annotations.
    Reconstruct {
        #[arg(long)]
        gps: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rider timing shift in seconds, or `auto` to search for the closest encounter.
        #[arg(long, default_value = "auto", value_parser = parse_shift)]
        timing_shift: TimingShift,
    },
    /// Run one variant and write trace.csv and report.json.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = PossibleValuesParser::new(VariantId::names()))]
        variant: String,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all five variants and write a comparison summary.
    Matrix {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_shift(s: &str) -> Result<TimingShift, String> {
    if s == "auto" {
        return Ok(TimingShift::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(TimingShift::Fixed(v)),
        _ => Err(format!("expected `auto` or a number of seconds, got `{s}`")),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Reconstruct {
            gps,
            annotations,
            out,
            timing_shift,
        } => {
            let stats = pipeline::cmd_reconstruct(&gps, &annotations, &out, timing_shift)?;
            println!(
                "{} GPS fixes, {} annotations, {} dropped",
                stats.gps_records, stats.annotations, stats.dropped
            );
            for (id, n) in &stats.keyframes {
                println!("  {id}: {n} keyframes");
            }
            for w in &stats.warnings {
                println!("  warning: {w}");
            }
            println!("timing shift {} s -> {}", stats.timing_shift, out.display());
        }
        Command::Run {
            scenario,
            variant,
            dt,
            duration,
            out,
        } => {
            let id: VariantId = variant.parse()?;
            let trace = pipeline::cmd_run(&scenario, id, &out, Overrides { dt, duration })
                .with_context(|| format!("running `{id}`"))?;
            let report = veisim_core::metrics::safety_report(&trace);
            println!(
                "{id}: collided={} safety_index={} -> {}",
                report.collided,
                report.index,
                out.display()
            );
        }
        Command::Matrix {
            scenario,
            dt,
            duration,
            out,
        } => {
            let runs = pipeline::cmd_matrix(&scenario, &out, Overrides { dt, duration })?;
            let mut failed = 0;
            for r in &runs {
                match &r.result {
                    Ok(trace) => {
                        let report = veisim_core::metrics::safety_report(trace);
                        println!(
                            "{:<15} collided={:<5} safety_index={:.3} speed_std={:.3}",
                            r.id.name(),
                            report.collided,
                            report.index,
                            report.speed_std
                        );
                    }
                    Err(e) => {
                        failed += 1;
                        println!("{:<15} failed: {e}", r.id.name());
                    }
                }
            }
            if failed > 0 {
                anyhow::bail!("{failed} variant(s) failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VEISIM_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
