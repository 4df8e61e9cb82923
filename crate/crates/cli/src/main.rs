//! `kotani`: experiments on symplectic cocycles, rotation numbers, Kotani theory and strip
//! operators. Every subcommand writes `<out>/<command>.csv` and a JSON sidecar.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] kotani_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use kotani_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Core(E::Input(_)) => 2,
            CliError::Core(E::NotFound(_)) => 4,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kotani", version, about = "Symplectic cocycles, rotation numbers and Kotani theory on strips")]
struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker pool (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cocycle: CocycleArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CocycleArgs {
    /// `random`, `identity`, `strip` (alias `free` for a zero potential).
    #[arg(long, global = true)]
    family: Option<String>,
    /// Group tag of the generators (SpR, SpC, HSp, SHSp, Udd, SUdd, UddCapSpC).
    #[arg(long, global = true)]
    tag: Option<String>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    period: Option<usize>,
    /// Size of the random algebra elements.
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    energy: Option<f64>,
    /// Strip potential: `zero`, `constant:X`, `anderson:W:K` or a CSV/JSON table.
    /// Implies `--family strip`.
    #[arg(long = "v", global = true)]
    potential: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lyapunov spectrum.
    Lyapunov {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// `auto` (exact for periodic bases) or `qr`.
        #[arg(long)]
        method: Option<String>,
    },
    /// Rotation function and `L^d` along `sigma + i t`.
    Rotation {
        #[arg(long, allow_negative_numbers = true)]
        sigma_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        sigma_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// The invariant section m+ or m- at `sigma + i t` (`sigma - i t` for m-).
    Mfield {
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        /// `plus` or `minus`.
        #[arg(long)]
        side: Option<String>,
    },
    /// `L^d` identities through tau and q, the key equation and the conjugate relation.
    KotaniCheck {
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Small-t behaviour of the m-functions at a real parameter with zero exponent.
    SmallT {
        #[arg(long, allow_negative_numbers = true)]
        sigma: Option<f64>,
        /// Comma separated heights.
        #[arg(long, value_delimiter = ',')]
        t_list: Option<Vec<f64>>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Simple-unimodular bands of `theta -> R(theta) A` or of `E` for periodic strips.
    Bands {
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        refine_tol: Option<f64>,
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
    },
    /// Lebesgue measure of the zero set of the top exponent over an energy window.
    StripScan {
        #[arg(long, num_args = 2, allow_negative_numbers = true)]
        range: Option<Vec<f64>>,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// The weighted integral Phi_eps for a random `a` in the eta ball and `b = J`.
    PhiEps {
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Search for a perturbation below `delta` with positive `L^d`.
    DensitySearch {
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Runs the invariant suite.
    Verify,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut s = match &cli.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    set(&mut s.seed, cli.seed);
    if cli.threads.is_some() {
        s.threads = cli.threads;
    }
    set(&mut s.out, cli.out.clone());
    let c = &cli.cocycle;
    set(&mut s.cocycle.family, c.family.clone());
    set(&mut s.cocycle.tag, c.tag.clone());
    set(&mut s.cocycle.d, c.d);
    set(&mut s.cocycle.period, c.period);
    set(&mut s.cocycle.scale, c.scale);
    set(&mut s.cocycle.energy, c.energy);
    if let Some(p) = &c.potential {
        s.cocycle.potential = p.clone();
        if c.family.is_none() {
            s.cocycle.family = "strip".into();
        }
    }
    if s.cocycle.family == "free" {
        s.cocycle.family = "strip".into();
        s.cocycle.potential = "zero".into();
    }
    let pair = |v: &Option<Vec<f64>>| v.as_ref().map(|r| [r[0], r[1]]);
    match &cli.command {
        Command::Lyapunov { n, samples, method } => {
            set(&mut s.lyapunov.n, *n);
            set(&mut s.lyapunov.samples, *samples);
            set(&mut s.lyapunov.method, method.clone());
        }
        Command::Rotation { sigma_min, sigma_max, points, t, n } => {
            set(&mut s.rotation.sigma_min, *sigma_min);
            set(&mut s.rotation.sigma_max, *sigma_max);
            set(&mut s.rotation.points, *points);
            set(&mut s.rotation.t, *t);
            set(&mut s.rotation.n, *n);
        }
        Command::Mfield { sigma, t, side } => {
            set(&mut s.mfield.sigma, *sigma);
            set(&mut s.mfield.t, *t);
            set(&mut s.mfield.side, side.clone());
        }
        Command::KotaniCheck { sigma, t } => {
            set(&mut s.kotani.sigma, *sigma);
            set(&mut s.kotani.t, *t);
        }
        Command::SmallT { sigma, t_list, n } => {
            set(&mut s.small_t.sigma, *sigma);
            set(&mut s.small_t.t_list, t_list.clone());
            set(&mut s.small_t.n, *n);
        }
        Command::Bands { grid, refine_tol, range } => {
            set(&mut s.bands.grid, *grid);
            set(&mut s.bands.refine_tol, *refine_tol);
            if range.is_some() {
                s.bands.range = pair(range);
            }
        }
        Command::StripScan { range, grid, threshold, n } => {
            set(&mut s.strip_scan.range, pair(range));
            set(&mut s.strip_scan.grid, *grid);
            set(&mut s.strip_scan.threshold, *threshold);
            set(&mut s.strip_scan.n, *n);
        }
        Command::PhiEps { epsilon, eta, nodes } => {
            set(&mut s.phi_eps.epsilon, *epsilon);
            set(&mut s.phi_eps.eta, *eta);
            set(&mut s.phi_eps.nodes, *nodes);
        }
        Command::DensitySearch { delta, eta, epsilon, trials } => {
            set(&mut s.density.delta, *delta);
            set(&mut s.density.eta, *eta);
            set(&mut s.density.epsilon, *epsilon);
            set(&mut s.density.trials, *trials);
        }
        Command::Verify => {}
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let s = settings(cli)?;
    if let Some(n) = s.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    std::fs::create_dir_all(&s.out)?;
    match &cli.command {
        Command::Lyapunov { .. } => commands::lyapunov(&s),
        Command::Rotation { .. } => commands::rotation(&s),
        Command::Mfield { .. } => commands::mfield(&s),
        Command::KotaniCheck { .. } => commands::kotani_check(&s),
        Command::SmallT { .. } => commands::small_t(&s),
        Command::Bands { .. } => commands::bands(&s),
        Command::StripScan { .. } => commands::strip_scan(&s),
        Command::PhiEps { .. } => commands::phi_eps(&s),
        Command::DensitySearch { .. } => commands::density_search(&s),
        Command::Verify => verify::run(&s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kotani: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
