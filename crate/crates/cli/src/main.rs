//! `decaf`: canonical frames, density fingerprints, and GP regression from
//! extended-XYZ input.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decaf::{CenterSelector, OracleSpec};

use crate::commands::Target;

#[derive(Debug, Parser)]
#[command(name = "decaf", version, about = "Rotation-invariant density fingerprints and Gaussian-process regression")]
#[command(
    after_help = "Exit codes: 0 success, 2 bad input or config, 3 outside the model domain, 4 numerical failure."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (TOML); defaults apply when omitted
    #[arg(long, global = true, env = "DECAF_CONFIG", value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for fingerprint extraction; output order does not depend on it
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the canonical frames of each center with minisum diagnostics
    Frame {
        /// Extended-XYZ input
        input: PathBuf,
        /// Fingerprint centers: all, atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "all")]
        center: CenterSelector,
    },
    /// Extract fingerprints of each center
    Fingerprint {
        /// Extended-XYZ input
        input: PathBuf,
        /// Fingerprint centers: all, atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "all")]
        center: CenterSelector,
        /// Output format
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Output file; standard output when omitted
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Pairwise fingerprint distances between all centers as a CSV matrix
    Distmat {
        /// Extended-XYZ input
        input: PathBuf,
        /// Fingerprint centers: all, atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "all")]
        center: CenterSelector,
    },
    /// Fit a model to labeled structures and save it
    Fit {
        /// Labeled extended-XYZ input
        input: PathBuf,
        /// What to learn: energy, forces, or dipole
        #[arg(long, value_enum)]
        target: FitTarget,
        /// Center of each structure for energy models: atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "com")]
        center: CenterSelector,
        /// Model file to write
        #[arg(long, short, value_name = "FILE")]
        output: PathBuf,
    },
    /// Predict with a saved model
    Predict {
        /// Model file written by fit or active-learn
        model: PathBuf,
        /// Extended-XYZ input
        input: PathBuf,
        /// Center of each structure for scalar models: atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "com")]
        center: CenterSelector,
    },
    /// Grow a training set from a candidate pool by querying an oracle
    ActiveLearn {
        /// Candidate pool (extended XYZ)
        pool: PathBuf,
        /// Labeling oracle: lj:EPS,SIGMA, morse:D,A,R0, dimer, or cmd:PATH
        #[arg(long)]
        oracle: OracleSpec,
        /// Learned quantity: energy or force:ATOM:AXIS (AXIS is x, y, or z)
        #[arg(long, default_value = "energy")]
        target: Target,
        /// Center of each candidate: atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "com")]
        center: CenterSelector,
        /// Pool indices labeled before the loop; first and last candidate when omitted
        #[arg(long, value_delimiter = ',', value_name = "I,J,..")]
        seeds: Vec<usize>,
        /// Stop once 2 x max posterior std falls below this; overrides the config
        #[arg(long, value_name = "U")]
        max_uncertainty: Option<f64>,
        /// Acquisition budget beyond the seeds; overrides the config
        #[arg(long, value_name = "N")]
        max_samples: Option<usize>,
        /// Model file to write
        #[arg(long, short, value_name = "FILE")]
        output: PathBuf,
    },
    /// Dump the configured quadrature grid as CSV
    Quadrature,
    /// Smallest nontrivial normalized-Laplacian eigenvalues of the density graph (experimental)
    Graphspec {
        /// Extended-XYZ input
        input: PathBuf,
        /// Fingerprint centers: all, atom:I, com, or point:X,Y,Z
        #[arg(long, default_value = "all")]
        center: CenterSelector,
        /// Eigenvalues per center
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Width of the atom-node Gaussian kernel in Å
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitTarget {
    /// Structure energy at one center per structure
    Energy,
    /// Per-atom force vectors at every atom
    Forces,
    /// Molecular dipole at the center of mass
    Dipole,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code)
        }
    }
}
