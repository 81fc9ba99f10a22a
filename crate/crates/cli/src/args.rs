use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "chaosdiag", version, about = "Partition lattices, diagram formulae and chaos decompositions")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    pub format: Format,

    /// Largest ground set enumerated (overrides CHAOSDIAG_CAP).
    #[arg(long, global = true)]
    pub cap: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Machine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Gaussian,
    Poisson,
}

impl From<Kind> for chaos_diagrams::chaos::MeasureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Gaussian => Self::Gaussian,
            Kind::Poisson => Self::Poisson,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List or count set partitions of {1..n}.
    Partitions {
        #[arg(long)]
        n: usize,
        /// Only partitions whose block sizes form this integer partition, e.g. "(1^1 2^3)".
        #[arg(long)]
        class: Option<String>,
        /// Print the count only.
        #[arg(long)]
        count: bool,
    },
    /// Möbius function μ(σ, π) of the partition lattice.
    Mobius {
        #[arg(long)]
        n: usize,
        /// A partition, `0hat` or `1hat`.
        #[arg(long)]
        sigma: String,
        /// A partition, `0hat` or `1hat`.
        #[arg(long)]
        pi: String,
    },
    /// Enumerate diagrams over a row partition, or inspect one.
    Diagrams {
        /// Row partition π.
        #[arg(long)]
        pi: String,
        /// Only σ with σ ∧ π = 0̂.
        #[arg(long, conflicts_with = "class")]
        nonflat: bool,
        /// Partition class: M, M0, M2, M2_0, Mge2, Mge2_0 or M2c.
        #[arg(long)]
        class: Option<String>,
        /// Print the count only.
        #[arg(long)]
        count: bool,
        /// Render and classify the single diagram Γ(π, σ).
        #[arg(long, conflicts_with_all = ["nonflat", "class", "count"])]
        sigma: Option<String>,
    },
    /// Joint moment E[I(f_1) ⋯ I(f_k)] by the diagram formula.
    Moment(Factors),
    /// Joint cumulant χ(I(f_1), ..., I(f_k)) by the diagram formula.
    Cumulant(Factors),
    /// Chaos decomposition of a product of multiple integrals.
    Product {
        #[command(flatten)]
        factors: Factors,
        /// Expand over partitions σ instead of folding the binary formula.
        #[arg(long)]
        general: bool,
        /// Print the decomposition as a kernel spec file.
        #[arg(long)]
        emit_spec: bool,
    },
    /// Fourth-moment CLT diagnostics for a kernel.
    Clt {
        #[command(flatten)]
        input: KernelInput,
        /// Advisory threshold for verdict flags.
        #[arg(long, default_value_t = chaos_diagrams::clt::DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Fourth cumulant from diagrams and from contractions.
        #[arg(long)]
        fourth: bool,
        /// Total-variation bound.
        #[arg(long)]
        tv: bool,
        /// Contraction norms.
        #[arg(long)]
        contractions: bool,
        /// Circular-diagram rank identities.
        #[arg(long)]
        circular: bool,
        /// Poisson double-integral norms and their diagram integrals.
        #[arg(long)]
        poisson_double: bool,
        /// Largest circular integral next to cumulants of orders 3 up to this one.
        #[arg(long)]
        rank_sufficiency: Option<usize>,
        /// Multidimensional check with this covariance, rows separated by `;`.
        #[arg(long)]
        covariance: Option<String>,
    },
    /// Monte Carlo estimates of moments and cumulants.
    Simulate {
        #[command(flatten)]
        factors: Factors,
        #[arg(long)]
        samples: u64,
        #[arg(long)]
        seed: u64,
        /// Characteristic-function grid for a single degree-1 kernel, e.g. "0.5,1,2".
        #[arg(long)]
        cf: Option<String>,
    },
    /// Run the cross-check suite; exits with status 1 on any failure.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Number of random oracle configurations.
        #[arg(long, default_value_t = 50)]
        configs: usize,
    },
}

#[derive(Debug, Args)]
pub struct KernelInput {
    /// Kernel spec file.
    #[arg(long)]
    pub kernel: PathBuf,
    /// Comma-separated kernel names (default: every kernel in the file).
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
}

#[derive(Debug, Args)]
pub struct Factors {
    #[arg(long, value_enum, default_value_t = Kind::Gaussian)]
    pub kind: Kind,
    #[command(flatten)]
    pub input: KernelInput,
    /// Repeat the selected kernels this many times.
    #[arg(long)]
    pub copies: Option<usize>,
    /// Number of factors; a single kernel is repeated to this count.
    #[arg(long)]
    pub order: Option<usize>,
    /// Also list the contribution of every partition.
    #[arg(long)]
    pub terms: bool,
}
