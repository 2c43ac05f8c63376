//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "loewner", version, about = "Construct and verify Loewner chains with an attracting origin")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Polynomial field file (JSON).
    #[arg(long, global = true, conflicts_with = "builtin")]
    pub field: Option<PathBuf>,
    /// Built-in field family.
    #[arg(long, global = true)]
    pub builtin: Option<String>,
    /// Family parameter `key=value`; repeatable.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Local error tolerance of the flow integrator.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_ode: f64,
    /// Tolerance of the adaptive quadratures.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol_quad: f64,
    /// Convergence tolerance of the chain limit.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_chain: f64,
    /// Number of schedule steps N.
    #[arg(long, global = true, default_value_t = 200)]
    pub horizon: usize,
    /// Output directory; without it results go to stdout and the manifest to stderr.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Emit every accepted integrator step instead of endpoints only.
    #[arg(long, global = true)]
    pub dense: bool,
    /// Seed of the sampling plans.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Classify A(t) against the existence theorems and sample the class N, Gurganus and growth bounds.
    Analyze,
    /// Integrate the Loewner ODE from s to t.
    Flow {
        #[arg(long, default_value_t = 0.0)]
        s: f64,
        #[arg(long)]
        t: f64,
        /// Points separated by `;`, coordinates by `,` (for example `0.3+0.1i,0.2;0.1`).
        #[arg(long)]
        z: String,
    },
    /// Compute the time discretization and its parameters.
    Schedule {
        /// Supply ℓ instead of estimating it on a grid.
        #[arg(long)]
        ell: Option<f64>,
        /// Override the midpoint radius.
        #[arg(long)]
        r: Option<f64>,
    },
    /// Evaluate the chain f_t at the given times.
    Chain {
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Run the full invariant suite.
    Verify {
        /// Run the built-in corpus instead of a single field.
        #[arg(long)]
        corpus: bool,
        /// Samples per radius shell in the class N and Gurganus checks.
        #[arg(long)]
        per_shell: Option<usize>,
    },
    /// Sample the range of the chain.
    Range {
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,0.75")]
        radii: Vec<f64>,
        /// Sphere directions per radius.
        #[arg(long, default_value_t = 16)]
        directions: usize,
    },
}

/// Sample points of the chain command: explicit points or radii times directions.
#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Points separated by `;`, coordinates by `,`.
    #[arg(long, conflicts_with_all = ["radii", "directions"])]
    pub z: Option<String>,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<f64>,
    /// Sphere directions per radius.
    #[arg(long)]
    pub directions: Option<usize>,
}
