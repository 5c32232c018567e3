//! `mmlab`: generators, analyses and verification suites for finite metric
//! measure spaces, with JSON reports and reproducible run manifests.
//!
//! Exit codes: 0 all checks pass, 1 a verification check failed (the report
//! is still written), 2 input or usage error, 3 numerical failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmlab_core::spectral::Boundary;
use mmlab_core::{Error, RunManifest};

use crate::output::Sink;

#[derive(Parser, Debug)]
#[command(name = "mmlab", version, about = "Metric measure spaces, dyadic cubes, maximal functions and spectral checks")]
struct Cli {
    /// Seed for every randomized step (the MMLAB_SEED variable overrides it).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON report path; a `<out>.manifest.json` sidecar records the run.
    /// For `gen` and `cubes build` this is where the space or hierarchy goes.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flattened `key,value` CSV of the report.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    /// SVG plot of a constant-vs-scale sweep.
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
    /// Print the JSON report to stdout instead of the summary lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a space and write it as JSON.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Volume profiles of a space.
    Analyze(AnalyzeArgs),
    /// Build or verify dyadic cube hierarchies.
    #[command(subcommand)]
    Cubes(CubesCmd),
    /// Maximal functions of a function on a space.
    Maximal(MaximalArgs),
    /// Morrey norm of a potential.
    Morrey(MorreyArgs),
    /// Eigenvalues, Faber-Krahn fits, heat, Riesz and Bessel kernels.
    #[command(subcommand)]
    Spectral(SpectralCmd),
    /// Empirical checks of the main inequalities.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Batteries of checks.
    #[command(subcommand)]
    Suite(SuiteCmd),
}

#[derive(Subcommand, Debug)]
enum GenCmd {
    /// Lattice {0..side}^dim with spacing h and constant weight sigma^2.
    Grid {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        side: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
    },
    /// Path with n points and spacing h.
    Path {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
    },
    /// Complete binary tree with counting measure.
    Tree {
        #[arg(long)]
        depth: usize,
    },
    /// Unit grids `dim:side` chained by necks of unit edges.
    ConnectedSum {
        #[arg(long, value_delimiter = ',', required = true)]
        copies: Vec<String>,
        #[arg(long)]
        neck: usize,
    },
    /// Product of a saved space with a path of n_line points.
    Product {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        n_line: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AnalyzeKind {
    Doubling,
    Annuli,
    Cover,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    kind: AnalyzeKind,
    #[arg(long)]
    space: PathBuf,
    /// Scale(s); several values give a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    radius: Vec<f64>,
    /// Separation of the cover.
    #[arg(long)]
    delta: Option<f64>,
    /// Center of the covered ball.
    #[arg(long, default_value_t = 0)]
    center: usize,
}

#[derive(Subcommand, Debug)]
enum CubesCmd {
    /// Build a hierarchy and write it as JSON.
    Build {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 8.0)]
        rho: f64,
        #[arg(long, allow_hyphen_values = true)]
        level_min: Option<i64>,
    },
    /// Check the partition, nesting and sandwich properties of a hierarchy file.
    Verify {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MaximalKindArg {
    Centered,
    Uncentered,
    Fractional,
    Dyadic,
}

#[derive(Args, Debug)]
struct MaximalArgs {
    kind: MaximalKindArg,
    #[arg(long)]
    space: PathBuf,
    /// Function as `point_id,value` CSV or a JSON array.
    #[arg(long = "fn")]
    function: PathBuf,
    /// Order of the fractional maximal function.
    #[arg(short = 's', long = "order", default_value_t = 0.0)]
    s: f64,
    /// Radius bound (centered/uncentered/fractional) or largest cube side (dyadic).
    #[arg(long, default_value_t = f64::INFINITY)]
    delta: f64,
    /// Cube parameter for the dyadic maximal function.
    #[arg(long, default_value_t = 8.0)]
    rho: f64,
    /// Precomputed hierarchy for the dyadic maximal function.
    #[arg(long)]
    hierarchy: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MorreyArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    potential: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Scale(s) R; `inf` for the scale-free norm.
    #[arg(long, value_delimiter = ',', default_value = "inf")]
    radius: Vec<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BoundaryArg {
    Free,
    Dirichlet,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Boundary {
        match b {
            BoundaryArg::Free => Boundary::Free,
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
        }
    }
}

#[derive(Subcommand, Debug)]
enum SpectralCmd {
    /// Bottom of the spectrum on a domain, optionally of `L - V`.
    Lambda1 {
        #[arg(long)]
        space: PathBuf,
        /// `all`, `interior`, `ball:<x>:<r>` or a comma-separated id list.
        #[arg(long, default_value = "all")]
        domain: String,
        #[arg(long)]
        potential: Option<PathBuf>,
    },
    /// Relative Faber-Krahn constant b at one or more scales.
    FkFit {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        radius: Vec<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Free)]
        boundary: BoundaryArg,
    },
    /// Heat kernel checks and optional Gaussian fit.
    Heat {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Free)]
        boundary: BoundaryArg,
        /// Fit Gaussian constants at this scale R.
        #[arg(long)]
        gaussian_radius: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        c: f64,
        /// `(lambda, gamma)` for the refined fit.
        #[arg(long, num_args = 2, value_names = ["LAMBDA", "GAMMA"])]
        lambda_gamma: Option<Vec<f64>>,
        /// Write `p_t` for each time to `<prefix>.<i>.bin`.
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Riesz kernel and its bound constant.
    Riesz {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
        boundary: BoundaryArg,
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
    /// Bessel kernel and its near/far separation.
    Bessel {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        gammas: Vec<f64>,
        #[arg(long, default_value_t = 10.0)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
        boundary: BoundaryArg,
        #[arg(long)]
        matrix_out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum VerifyCmd {
    /// Empirical Fefferman-Phong constant at one or more scales.
    FeffermanPhong {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        radius: Vec<f64>,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Free)]
        boundary: BoundaryArg,
    },
    /// Positivity statements with a spectral gap and the lambda sweep.
    WeakPositivity {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        cp: f64,
        #[arg(long)]
        lambda1_m: Option<f64>,
        /// Values of lambda for the `Q + lambda^2 ||.||^2` sweep.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
        boundary: BoundaryArg,
    },
    /// Hardy constant, potential size and necessity witnesses.
    Hardy {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        origin: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Scale for the Morrey size K_p (skipped when absent).
        #[arg(long)]
        radius: Option<f64>,
        /// Cutoff witness `r,R,nu`; repeatable.
        #[arg(long)]
        witness: Vec<String>,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Dirichlet)]
        boundary: BoundaryArg,
    },
    /// Two-sided bound on the bottom of the spectrum of `L - V`.
    SpectrumBounds {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        c1: Option<f64>,
        /// Frozen C_p; calibrated on `--calibrate` potentials when absent.
        #[arg(long)]
        cp: Option<f64>,
        #[arg(long, default_value_t = 20)]
        calibrate: usize,
        #[arg(long, default_value_t = 0)]
        tent_stride: usize,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Free)]
        boundary: BoundaryArg,
    },
    /// Identities for the product with a line.
    ProductIdentity {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        potential: PathBuf,
        #[arg(long)]
        n_line: usize,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 4.0)]
        radius: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10")]
        times: Vec<f64>,
    },
    /// Domination of a truncated kernel operator by its phi-maximal function.
    Domination {
        #[arg(long)]
        space: PathBuf,
        /// Kernel spec JSON; the closed-form Riesz kernel of order `--riesz-s` otherwise.
        #[arg(long)]
        kernel: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        riesz_s: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long, default_value_t = 40)]
        trials: usize,
        #[arg(long, default_value_t = 8.0)]
        rho: f64,
        /// Also measure the phi growth condition.
        #[arg(long)]
        growth: bool,
    },
}

#[derive(Subcommand, Debug)]
enum SuiteCmd {
    /// The acceptance battery.
    Acceptance {
        #[arg(long, default_value = "small")]
        scale: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => 3,
        Error::Construction { .. } => 1,
        _ => 2,
    }
}

/// Argument list without output locations, so that reports written to
/// different paths stay byte-identical. The seed is recorded on its own.
fn recorded_command(args: &[String]) -> Vec<String> {
    let skip = ["--out", "--csv", "--plot", "--threads", "--seed"];
    let mut out = Vec::new();
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        if skip.contains(&a.as_str()) {
            it.next();
        } else if !skip.iter().any(|s| a.starts_with(&format!("{s}="))) && a != "--json" {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let seed = match std::env::var("MMLAB_SEED") {
        Ok(s) => match s.trim().parse::<u64>() {
            Ok(v) => v,
            Err(_) => {
                eprintln!("error: MMLAB_SEED must be an unsigned integer, got {s:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => cli.seed,
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut sink = Sink {
        manifest: RunManifest::new(recorded_command(&argv), seed),
        out: cli.out,
        csv: cli.csv,
        plot: cli.plot,
        json: cli.json,
        start: Instant::now(),
    };
    match commands::run(cli.command, seed, &mut sink) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
