//! `sapx`: batch front end for spectra, kernels, extensions, profile checks
//! and the gluing pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;
mod io;

#[derive(Parser)]
#[command(name = "sapx", version, about = "Approximation of semi-almost periodic functions on the disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    /// Input JSON file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory for report.json and CSV files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// JSON file overriding the numerical defaults of the subcommand.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for a random fixture, used when no input is given.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical spectrum of an exponential sum.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Choose a Fejér kernel for a family and check its certified bound.
    Kernel {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.05, allow_negative_numbers = true)]
        epsilon: f64,
    },
    /// Poisson extension of strip boundary data against the closed form.
    Extend {
        #[command(flatten)]
        common: Common,
    },
    /// Check a candidate profile at a singular point.
    SapVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        epsilon: Option<f64>,
    },
    /// Run the gluing pipeline on one function.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        epsilon: f64,
        /// Directory for the CSV grid fields.
        #[arg(long)]
        fields_dir: Option<PathBuf>,
        /// Extra singular angles, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        singular: Vec<f64>,
    },
    /// Factor-wise approximation of a sum of products on the polydisk.
    Tensor {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        epsilon: f64,
        #[arg(long)]
        fields_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // usage errors count as input errors; 2 is reserved for failed checks
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Spectrum { common } => commands::spectrum(&common),
        Command::Kernel { common, epsilon } => commands::kernel(&common, epsilon),
        Command::Extend { common } => commands::extend(&common),
        Command::SapVerify { common, epsilon } => commands::sap_verify(&common, epsilon),
        Command::Pipeline { common, epsilon, fields_dir, singular } => {
            commands::pipeline(&common, epsilon, fields_dir.as_deref(), &singular)
        }
        Command::Tensor { common, epsilon, fields_dir } => commands::tensor(&common, epsilon, fields_dir.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed; see the report");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
