use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use isac_pulse::experiments::{self, ExperimentConfig};
use isac_pulse::Error;

/// Pulse-shaping design and evaluation for ISAC frames.
#[derive(Parser, Debug)]
#[command(name = "isac-pulse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the design for each roll-off; writes spectrum.csv, pulse.csv, result.json.
    Design,
    /// Theoretical vs Monte-Carlo SACF of RRC and optimized pulses; writes sacf_curves.csv.
    Fig1,
    /// Second sidelobe level vs bit rate over a roll-off sweep; writes sidelobe_vs_bitrate.csv.
    Fig2,
    /// ISLR vs bit rate over a roll-off sweep; writes islr_vs_bitrate.csv.
    Fig3,
    /// Zero-ISI, KKT and objective certificates; writes validation.json.
    Validate,
}

/// Flags override the config file field by field.
#[derive(Args, Debug)]
struct Overrides {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Roll-off factor(s), comma separated.
    #[arg(long, global = true)]
    beta: Option<String>,

    /// Symbols per frame.
    #[arg(long, global = true)]
    frame_len: Option<usize>,

    /// qam4, qam16, qam64, qam256, pskN, bpsk or qpsk.
    #[arg(long, global = true)]
    constellation: Option<String>,

    /// Samples per symbol.
    #[arg(long, global = true)]
    nt: Option<usize>,

    /// Fixed DFT length (default: smallest exact grid >= min Lg).
    #[arg(long, global = true)]
    lg: Option<usize>,

    #[arg(long, global = true)]
    min_lg: Option<usize>,

    /// ISLR region in symbols, "lo,hi".
    #[arg(long, global = true)]
    region: Option<String>,

    /// Monte-Carlo frames.
    #[arg(long, global = true)]
    frames: Option<usize>,

    /// Base seed; frame i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Bandwidth in Hz for the bit-rate column.
    #[arg(long, global = true)]
    bandwidth: Option<f64>,

    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().with_context(|| format!("bad list entry {t:?}")))
        .collect()
}

fn load_config(o: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(b) = &o.beta {
        cfg.beta = Some(parse_list(b)?);
    }
    if let Some(r) = &o.region {
        let v: Vec<usize> = parse_list(r)?;
        let [lo, hi] = v[..] else {
            anyhow::bail!("region takes two values, got {r:?}");
        };
        cfg.region = [lo, hi];
    }
    cfg.frame_len = o.frame_len.unwrap_or(cfg.frame_len);
    cfg.constellation = o.constellation.clone().unwrap_or(cfg.constellation);
    cfg.nt = o.nt.unwrap_or(cfg.nt);
    cfg.lg = o.lg.or(cfg.lg);
    cfg.min_lg = o.min_lg.unwrap_or(cfg.min_lg);
    cfg.n_frames = o.frames.unwrap_or(cfg.n_frames);
    cfg.base_seed = o.seed.unwrap_or(cfg.base_seed);
    cfg.bandwidth_hz = o.bandwidth.unwrap_or(cfg.bandwidth_hz);
    cfg.out_dir = o.out.clone().unwrap_or(cfg.out_dir);
    cfg.cache_dir = o.cache_dir.clone().or(cfg.cache_dir);
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: &Command, cfg: &ExperimentConfig) -> Result<bool, Error> {
    match command {
        Command::Design => {
            for s in experiments::cmd_design(cfg)? {
                println!(
                    "beta={} Lg={} NB={}: ISLR {:.3} dB (RRC {:.3} dB), KKT {:.1e}{}",
                    s.beta,
                    s.lg,
                    s.nb,
                    s.islr_opt_db,
                    s.islr_rrc_db,
                    s.kkt_residual,
                    if s.degenerate { ", feasible set is a single point" } else { "" }
                );
            }
        }
        Command::Fig1 => {
            let r = experiments::cmd_fig1(cfg)?;
            println!(
                "beta={}: MC vs theory max gap RRC {:.3} dB, optimized {:.3} dB",
                r.beta, r.rrc_mc.theory_gap_db, r.opt_mc.theory_gap_db
            );
            println!("theory sidelobe peaks RRC {:?} dB", r.rrc_theory_peaks_db);
            println!("theory sidelobe peaks opt {:?} dB", r.opt_theory_peaks_db);
        }
        Command::Fig2 => print!("{}", experiments::cmd_fig2(cfg)?.render()),
        Command::Fig3 => print!("{}", experiments::cmd_fig3(cfg)?.render()),
        Command::Validate => {
            let checks = experiments::cmd_validate(cfg)?;
            for c in &checks {
                println!(
                    "{} beta={} {}: {:.3e} (tol {:.0e})",
                    if c.pass { "ok  " } else { "FAIL" },
                    c.beta,
                    c.name,
                    c.value,
                    c.tol
                );
            }
            return Ok(checks.iter().all(|c| c.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match load_config(&cli.overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cli.command, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ (Error::InvalidArgument(_) | Error::InvalidGrid(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
