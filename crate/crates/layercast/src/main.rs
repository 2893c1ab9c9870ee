use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use layercast::config::{BoundSel, Cap, Command, McMode, RunConfig};
use layercast::descriptor::FadingSource;
use layercast::output::Format;
use layercast::{run, CliError};

#[derive(Parser)]
#[command(name = "layercast", version, about = "Layered broadcast power allocation without transmitter CSI")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Fading descriptor: JSON file path or inline JSON.
    #[arg(long)]
    fading: Option<String>,
    /// Bandwidth ratio(s), comma-separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    b: Vec<f64>,
    /// Total power(s) in dB, comma-separated.
    #[arg(long = "snr-db", value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Vec<f64>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format {s:?}; expected csv or json")),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimal split between two layers.
    TwoLayer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        u: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        w: Vec<f64>,
        /// Lower-layer gain (default 1).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        beta: Vec<f64>,
        /// Sets w = p2, u = 1 - p2.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        p2: Vec<f64>,
    },
    /// Minimum expected distortion over a discrete pmf.
    AllocDiscrete {
        #[command(flatten)]
        common: Common,
    },
    /// Continuous power distribution.
    AllocContinuous {
        #[command(flatten)]
        common: Common,
        /// Gain samples per SNR.
        #[arg(long, default_value_t = 200)]
        grid: usize,
        #[arg(long = "gamma-max")]
        gamma_max: Option<f64>,
        /// One row per SNR instead of the full profile.
        #[arg(long)]
        summary: bool,
    },
    /// Risk-sensitive or constrained allocation.
    MinCost {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        phi: Vec<f64>,
        /// Upper limit on E[D].
        #[arg(long, allow_negative_numbers = true)]
        dmax: Option<f64>,
        /// Upper limit on VAR[D].
        #[arg(long, allow_negative_numbers = true)]
        vmax: Option<f64>,
        /// `k=value`: distortion cap on state k (1-based); repeatable.
        #[arg(long = "cap")]
        caps: Vec<Cap>,
        #[arg(long = "gap-tolerance")]
        gap_tolerance: Option<f64>,
    },
    /// Reference curves.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "all")]
        which: Vec<BoundSel>,
    },
    /// Simulated E[D] with a fixed seed.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON output of alloc-discrete or min-cost.
        #[arg(long)]
        alloc: Option<PathBuf>,
        #[arg(long, default_value = "auto")]
        mode: McMode,
    },
    /// Runs a JSON config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base(command: Command, c: Common) -> RunConfig {
    let mut cfg = RunConfig::new(command);
    cfg.fading = c.fading.as_deref().map(FadingSource::from_arg);
    cfg.b = c.b;
    cfg.snr_db = c.snr_db;
    cfg.out = c.out;
    cfg.format = c.format;
    cfg
}

fn config(cmd: Cmd) -> Result<RunConfig, CliError> {
    Ok(match cmd {
        Cmd::TwoLayer { common, u, w, alpha, beta, p2 } => {
            let mut cfg = base(Command::TwoLayer, common);
            (cfg.u, cfg.w, cfg.alpha, cfg.beta, cfg.p2) = (u, w, alpha, beta, p2);
            cfg
        }
        Cmd::AllocDiscrete { common } => base(Command::AllocDiscrete, common),
        Cmd::AllocContinuous { common, grid, gamma_max, summary } => {
            let mut cfg = base(Command::AllocContinuous, common);
            (cfg.grid, cfg.gamma_max, cfg.summary) = (grid, gamma_max, summary);
            cfg
        }
        Cmd::MinCost { common, phi, dmax, vmax, caps, gap_tolerance } => {
            let mut cfg = base(Command::MinCost, common);
            (cfg.phi, cfg.dmax, cfg.vmax, cfg.caps, cfg.gap_tolerance) = (phi, dmax, vmax, caps, gap_tolerance);
            cfg
        }
        Cmd::Bounds { common, which } => {
            let mut cfg = base(Command::Bounds, common);
            cfg.which = which;
            cfg
        }
        Cmd::Montecarlo { common, samples, seed, alloc, mode } => {
            let mut cfg = base(Command::Montecarlo, common);
            (cfg.samples, cfg.seed, cfg.alloc, cfg.mode) = (samples, seed, alloc, mode);
            cfg
        }
        Cmd::Sweep { config, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if out.is_some() {
                // Keep the format the config's own output path implied.
                cfg.format = Some(cfg.output_format());
                cfg.out = out;
            }
            cfg
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config(cli.command).and_then(|cfg| run(&cfg)?.write(cfg.out.as_ref()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
