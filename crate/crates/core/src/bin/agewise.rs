// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use agewise::campaign::{self, CampaignConfig, CampaignError, ChipResult, DEFAULT_CONFIG};
use clap::{Parser, Subcommand};

/// Recycled-chip detection study: every stage reads and writes plain files
/// under the run directory given by --out.
#[derive(Parser)]
#[command(name = "agewise", version)]
struct Cli {
    /// Global seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config file; defaults to <out>/config.toml, then built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    /// Config override, `section.key=value`; repeatable.
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the design netlist.
    Gen {
        /// Print the documented default config instead.
        #[arg(long)]
        print_default_config: bool,
    },
    /// Simulate reference activity, or a chip's usage with --chip.
    Activity {
        #[arg(long)]
        chip: Option<String>,
    },
    /// Fabricate a chip of the matrix.
    Fab {
        #[arg(long)]
        chip: String,
    },
    /// Age a fabricated chip.
    Age {
        #[arg(long)]
        chip: String,
        /// Months of use; the chip matrix entry by default.
        #[arg(long)]
        months: Option<f64>,
    },
    /// Measure a chip with the frequency-sweep tester.
    Cfst {
        #[arg(long)]
        chip: String,
    },
    /// Enumerate paths and pick the MAP and LAP sets.
    Adp,
    /// Build the chip's golden timing model and classify it.
    Detect {
        #[arg(long)]
        chip: String,
    },
    /// Run every stage for the whole chip matrix.
    Campaign,
    /// Summarize a finished run.
    Report,
}

fn run(cli: Cli) -> Result<(), CampaignError> {
    if let Cmd::Gen { print_default_config: true } = cli.cmd {
        print!("{DEFAULT_CONFIG}");
        return Ok(());
    }
    let out = &cli.out;
    let cfg: CampaignConfig = campaign::load_config(cli.config.as_deref(), out, cli.seed, &cli.overrides)?;
    match &cli.cmd {
        Cmd::Gen { .. } => {
            let nl = campaign::cmd_gen(&cfg, out)?;
            println!("{} gates, {} flip-flops, period {} ps", nl.gates.len(), nl.flip_flops.len(), nl.period);
        }
        Cmd::Activity { chip } => {
            let a = campaign::cmd_activity(&cfg, out, chip.as_deref())?;
            println!("{} nets over {} cycles", a.nets.len(), a.cycles);
        }
        Cmd::Fab { chip } => {
            campaign::cmd_fab(&cfg, out, chip)?;
            println!("fabricated {chip}");
        }
        Cmd::Age { chip, months } => {
            let c = campaign::cmd_age(&cfg, out, chip, *months)?;
            println!("aged {chip} by {} months", c.age_months);
        }
        Cmd::Cfst { chip } => {
            let m = campaign::cmd_cfst(&cfg, out, chip)?;
            println!("{} paths measured, {} unmeasurable", m.measured.len(), m.unmeasurable.len());
        }
        Cmd::Adp => {
            let a = campaign::cmd_adp(&cfg, out, None)?;
            println!("MAP {} LAP {} dropped {} unmeasurable {}", a.map.len(), a.lap.len(), a.dropped.len(), a.unmeasurable.len());
        }
        Cmd::Detect { chip } => match campaign::cmd_detect(&cfg, out, chip)? {
            ChipResult::Detected(r) => println!("{chip}: MS {:.2} ps, verdict {}", r.ms_ps, r.verdict),
            ChipResult::Failed(f) => {
                return Err(CampaignError::Stage { stage: "detect", msg: format!("{}: {}", f.stage, f.cause) })
            }
        },
        Cmd::Campaign => {
            campaign::cmd_campaign(&cfg, out, None)?;
            print!("{}", std::fs::read_to_string(campaign::report_dir(out).join("summary.txt")).unwrap_or_default());
        }
        Cmd::Report => {
            campaign::cmd_report(out)?;
            print!("{}", std::fs::read_to_string(campaign::report_dir(out).join("summary.txt")).unwrap_or_default());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("agewise=info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("agewise: [{}] {e}", e.stage());
            ExitCode::FAILURE
        }
    }
}
