//! `benjamin-lab`: command-line front end for the solitary-wave experiments.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "benjamin-lab",
    version,
    about = "Solitary waves of u_t + u_xxx + gamma H u_xx + u u_x = 0: profiles, evolution and stability experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed for noise perturbations and random ensembles.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Wave speed.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Number of grid nodes (power of two).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Box length.
    #[arg(long = "L", global = true, value_name = "L")]
    pub length: Option<f64>,
    /// Time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Final time.
    #[arg(long = "T", global = true, value_name = "T")]
    pub t_final: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute Q_{gamma,c} and write its profile.
    SolveWave,
    /// Evolve a perturbed solitary wave and record conserved quantities.
    Evolve {
        /// Perturbation size relative to ||Q||_{H1}.
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Asymptotic-stability run: c*, right half-line errors, x'(t).
    Stability {
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Distance of Q_{gamma,c} from the KdV soliton as gamma -> 0.
    KdvLimit {
        /// Comma-separated list of gamma values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        gammas: Vec<f64>,
    },
    /// Tails of the perturbation equation against R^{-1/4}.
    Liouville {
        /// Nonlinear coupling, 0 <= b < 1/64.
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Almost-monotonicity defects of the localized functionals.
    Monotonicity {
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
        #[arg(long)]
        amplitude: Option<f64>,
    },
    /// Commutator ratios over a random ensemble and the cutoff family.
    CommutatorTest {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
    },
    /// Apply the scaling symmetry u -> lambda^2 u(lambda x) to Q_{gamma,c}.
    Rescale {
        #[arg(long, default_value_t = 1.1)]
        lambda: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
