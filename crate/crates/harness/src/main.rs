use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fpnet_harness::commands;
use fpnet_harness::{render, reproduce, ExperimentConfig, Profile, Row, Workspace};

#[derive(Parser)]
#[command(name = "fpnet", version, about = "Joint CSI feedback and positioning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML file overlaid on the profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    /// quick, default or paper-scale.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Progress on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate and store the base dataset splits.
    GenData,
    /// Train the configured joint model.
    Train,
    /// Evaluate the trained model next to the standard codecs.
    Eval,
    /// Sequential network, KNN and standard codec baselines.
    Baseline,
    SweepAlpha {
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    SweepBits {
        #[arg(long, value_delimiter = ',')]
        lens: Option<Vec<usize>>,
    },
    SweepZones {
        #[arg(long, value_delimiter = ',')]
        zones: Option<Vec<usize>>,
    },
    Drift {
        #[arg(long)]
        intensity: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Anomaly detector calibration and test.
    AdEval,
    /// Render summary.md and per-table CSVs from stored results.
    Report,
    /// Recompute one stored metric and compare bit for bit.
    Reproduce {
        /// `report/row/field`; random when omitted.
        #[arg(long)]
        metric: Option<String>,
    },
}

fn workspace(c: &Common) -> Result<Workspace> {
    let stored = c.out.join(fpnet_harness::runs::CONFIG_FILE);
    let fresh = c.config.is_some() || c.profile.is_some() || c.seed.is_some() || !stored.exists();
    let mut ws = if fresh {
        let profile: Profile = c.profile.as_deref().unwrap_or("default").parse()?;
        let cfg = ExperimentConfig::load(c.config.as_deref(), profile, c.seed)?;
        Workspace::create(&c.out, cfg)?
    } else {
        Workspace::open(&c.out)?
    };
    ws.verbose = c.verbose;
    Ok(ws)
}

fn print_rows(rows: &[Row]) {
    for r in rows {
        let nums: Vec<String> = r.numbers().iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        println!("{:<12} {:<20} {}", r.id, r.report.method, nums.join(" "));
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ws = workspace(&cli.common).context("preparing the run directory")?;
    let cfg = ws.cfg.clone();
    match cli.cmd {
        Cmd::GenData => {
            for p in commands::gen_data(&ws)? {
                println!("{}", p.display());
            }
        }
        Cmd::Train => println!("{}", commands::train(&ws)?.display()),
        Cmd::Eval => print_rows(&commands::eval(&ws)?),
        Cmd::Baseline => print_rows(&commands::baseline(&ws)?),
        Cmd::SweepAlpha { alphas } => print_rows(&commands::sweep_alpha(&ws, &alphas.unwrap_or(cfg.sweeps.alphas))?),
        Cmd::SweepBits { lens } => print_rows(&commands::sweep_bits(&ws, &lens.unwrap_or(cfg.sweeps.codeword_lens))?),
        Cmd::SweepZones { zones } => print_rows(&commands::sweep_zones(&ws, &zones.unwrap_or(cfg.sweeps.zone_counts))?),
        Cmd::Drift { intensity, sizes, epochs } => print_rows(&commands::drift(
            &ws,
            intensity.unwrap_or(cfg.sweeps.drift_intensity),
            &sizes.unwrap_or(cfg.sweeps.fine_tune_sizes),
            epochs.unwrap_or(cfg.sweeps.fine_tune_epochs),
        )?),
        Cmd::AdEval => print_rows(&commands::ad_eval(&ws)?),
        Cmd::Report => print!("{}", render(&ws)?),
        Cmd::Reproduce { metric } => {
            let r = reproduce(&ws, metric.as_deref())?;
            println!("{}: stored {} recomputed {} identical {}", r.key, r.stored, r.recomputed, r.identical);
            if !r.identical {
                bail!("{} did not reproduce", r.key);
            }
        }
    }
    Ok(())
}
