//! `knot-energy`: command-line experiments on the Moebius-invariant knot energy.
//!
//! Exit codes: 0 success, 2 input error, 3 geometry guard (self-intersection,
//! non-immersed curve, inversion pole), 4 descent stopped at the embeddedness
//! barrier.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use settings::Settings;

/// Environment variable holding the default worker count.
const THREADS_ENV: &str = "KNOT_ENERGY_THREADS";

#[derive(Parser, Debug)]
#[command(name = "knot-energy", version, about = "Moebius-invariant knot energy experiments")]
struct Cli {
    /// JSON file with default values for any flag (snake_case keys); a run manifest also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the parallel kernels [default: $KNOT_ENERGY_THREADS, else all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CurveArgs {
    /// Built-in curve: circle, ellipse, trefoil, figure-eight.
    #[arg(long)]
    builtin: Option<String>,
    /// Curve JSON file (`fourier` or `samples` document).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct OutArgs {
    /// Output file; stdout when absent. A `.manifest.json` sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiagonalArg {
    Limit,
    ExcludeAdjacent,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SamplerArg {
    Halton,
    Random,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Energy of one curve (JSON report).
    Energy {
        #[command(flatten)]
        curve: CurveArgs,
        /// Truncate the integral to arc distance >= epsilon instead of regularizing.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Treatment of the diagonal samples.
        #[arg(long, value_enum)]
        diagonal: Option<DiagonalArg>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Energy before and after random sphere inversions (CSV audit).
    Invariance {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Gradient descent on the energy (CSV trace plus final curve JSON).
    Minimize {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        step_init: Option<f64>,
        #[arg(long)]
        step_shrink: Option<f64>,
        #[arg(long)]
        step_grow: Option<f64>,
        #[arg(long)]
        grad_tol: Option<f64>,
        #[arg(long)]
        resample_every: Option<usize>,
        #[arg(long)]
        min_separation: Option<f64>,
        #[arg(long)]
        sobolev_order: Option<f64>,
        /// Where to write the final curve [default: next to --out as `<stem>.final.json`].
        #[arg(long)]
        final_curve: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Projection crossing counts and the crossing/energy bound (JSON).
    Crossings {
        #[command(flatten)]
        curve: CurveArgs,
        #[arg(long)]
        directions: Option<usize>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
        /// Seed for `--sampler random`.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Energy against sample count and truncation radius (CSV).
    Convergence {
        #[command(flatten)]
        curve: CurveArgs,
        /// Sample counts for the N sweep.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        /// Truncation radii for the epsilon sweep (at --n samples).
        #[arg(long, value_delimiter = ',')]
        epsilon_list: Option<Vec<f64>>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Knot-count bounds by energy and by crossing number (CSV).
    Bounds {
        /// Energy levels M.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        m_list: Option<Vec<f64>>,
        /// Crossing numbers n.
        #[arg(long, value_delimiter = ',')]
        k_list: Option<Vec<u32>>,
        #[command(flatten)]
        out: OutArgs,
    },
}

impl CurveArgs {
    fn into_settings(self, out: OutArgs) -> Settings {
        Settings {
            builtin: self.builtin,
            curve: self.curve,
            n: self.n,
            out: out.out,
            ..Settings::default()
        }
    }
}

fn flags(command: Command) -> (&'static str, Settings) {
    match command {
        Command::Energy {
            curve,
            epsilon,
            diagonal,
            out,
        } => (
            "energy",
            Settings {
                epsilon,
                diagonal: diagonal.map(|d| match d {
                    DiagonalArg::Limit => "limit".to_string(),
                    DiagonalArg::ExcludeAdjacent => "exclude_adjacent".to_string(),
                }),
                ..curve.into_settings(out)
            },
        ),
        Command::Invariance {
            curve,
            trials,
            seed,
            out,
        } => (
            "invariance",
            Settings {
                trials,
                seed,
                ..curve.into_settings(out)
            },
        ),
        Command::Minimize {
            curve,
            max_iters,
            step_init,
            step_shrink,
            step_grow,
            grad_tol,
            resample_every,
            min_separation,
            sobolev_order,
            final_curve,
            out,
        } => (
            "minimize",
            Settings {
                max_iters,
                step_init,
                step_shrink,
                step_grow,
                grad_tol,
                resample_every,
                min_separation,
                sobolev_order,
                final_curve,
                ..curve.into_settings(out)
            },
        ),
        Command::Crossings {
            curve,
            directions,
            sampler,
            seed,
            out,
        } => (
            "crossings",
            Settings {
                directions,
                sampler: sampler.map(|s| match s {
                    SamplerArg::Halton => "halton".to_string(),
                    SamplerArg::Random => "random".to_string(),
                }),
                seed,
                ..curve.into_settings(out)
            },
        ),
        Command::Convergence {
            curve,
            n_list,
            epsilon_list,
            out,
        } => (
            "convergence",
            Settings {
                n_list,
                epsilon_list,
                ..curve.into_settings(out)
            },
        ),
        Command::Bounds { m_list, k_list, out } => (
            "bounds",
            Settings {
                m_list,
                k_list,
                out: out.out,
                ..Settings::default()
            },
        ),
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let (name, mut settings) = flags(cli.command);
    settings.threads = cli.threads;
    let mut settings = settings.over(file);
    if settings.threads.is_none() {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            let n = v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
            settings.threads = Some(n);
        }
    }
    if let Some(n) = settings.threads {
        anyhow::ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    commands::dispatch(name, settings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
