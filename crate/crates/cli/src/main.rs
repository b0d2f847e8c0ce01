//! szeta: decide whether two Schottky presentations carry the same zeta data,
//! and emit every intermediate table on the way there (dimension estimates,
//! cylinder measures, filtration diagnostics, zeta series, coefficient
//! tables, recovered measures).
//!
//! Exit codes: 0 success, 1 compare verdict NOT-EQUIVALENT, 2 input error,
//! 3 numeric failure (divergence region, missing bracket, degenerate data).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use schottky_zeta::gns::Symbol;
use schottky_zeta::psmeasure::DimensionMethod;
use schottky_zeta::Error;

/// Hard ceiling on every depth argument. Word counts grow by 2g-1 per level;
/// beyond this the tables stop being desk-scale.
pub const DEPTH_CAP: usize = 8;

#[derive(Parser)]
#[command(
    name = "szeta",
    version,
    about = "Zeta data for Schottky presentations of Riemann surfaces"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Comma-separated rows under a versioned `#` header.
    Csv,
    /// One JSON object per line, meta object first.
    JsonLines,
}

#[derive(Subcommand)]
pub enum Command {
    /// Verify the disk picture: loxodromic generators, disjoint disks,
    /// boundary pairing, exterior basepoint
    Check {
        /// Group spec (JSON)
        spec: PathBuf,
    },

    /// Hausdorff-dimension estimates, one row per depth from 2 up
    Dim {
        spec: PathBuf,
        /// Deepest level-sum pair to use
        #[arg(long, value_parser = parse_depth_min2)]
        depth: usize,
        #[arg(long, default_value = "level-ratio", value_parser = parse_method)]
        method: DimensionMethod,
        /// Bisection tolerance on the defect
        #[arg(long, default_value_t = 1e-10, value_parser = parse_positive)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        /// Write here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Cylinder-mass table at one depth, cached by spec hash
    Measure {
        spec: PathBuf,
        #[arg(long, value_parser = parse_depth)]
        depth: usize,
        /// level-ratio pairs with the shadow estimator, transfer-eigenvalue
        /// with the Perron eigenvector
        #[arg(long, default_value = "level-ratio", value_parser = parse_method)]
        method: DimensionMethod,
        #[arg(long, default_value_t = 1e-10, value_parser = parse_positive)]
        tol: f64,
        #[arg(long, default_value = ".szeta-cache")]
        cache_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Filtration diagnostics: shell dimensions, eigenvalues, orthonormality
    /// and Parseval residuals
    Triple {
        spec: PathBuf,
        #[arg(long, value_parser = parse_depth)]
        depth: usize,
    },

    /// Zeta series of a symbol, with optional evaluation or a per-word
    /// coefficient table for recovery
    Zeta {
        spec: PathBuf,
        #[arg(long, value_parser = parse_depth)]
        depth: usize,
        /// "unit" (or "1"), or a cylinder like "chi:a1.a2'"
        #[arg(long, default_value = "unit", value_parser = parse_symbol)]
        symbol: Symbol,
        /// Evaluate at this point, written re,im (needs Re(s) < -1/3)
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        s: Option<Complex64>,
        /// Emit the per-word coefficient table instead of the series
        /// (requires --out; this is the file `recover` consumes)
        #[arg(long, conflicts_with_all = ["symbol", "s"])]
        coefficients: bool,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Values along the vertical line Re(s) = const, for plotting
    ZetaLine {
        spec: PathBuf,
        #[arg(long, value_parser = parse_depth)]
        depth: usize,
        /// Real part of the line (needs Re(s) < -1/3)
        #[arg(long, allow_hyphen_values = true)]
        re: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        im_from: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        im_to: f64,
        #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(usize))]
        points: usize,
        #[arg(long, default_value = "unit", value_parser = parse_symbol)]
        symbol: Symbol,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Rebuild cylinder masses from a coefficient table
    Recover {
        /// Coefficient table written by `zeta --coefficients`
        coefficients: PathBuf,
        /// When given, the table must carry this spec's hash
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Compare two presentations through their zeta data
    Compare {
        spec_a: PathBuf,
        spec_b: PathBuf,
        #[arg(long, value_parser = parse_depth)]
        depth: usize,
        #[arg(long, default_value_t = 1e-9, value_parser = parse_positive)]
        tol: f64,
    },
}

fn parse_depth(s: &str) -> Result<usize, String> {
    let d: usize = s.parse().map_err(|_| format!("bad depth {s:?}"))?;
    if d == 0 || d > DEPTH_CAP {
        return Err(format!("depth must be in 1..={DEPTH_CAP}"));
    }
    Ok(d)
}

fn parse_depth_min2(s: &str) -> Result<usize, String> {
    let d = parse_depth(s)?;
    if d < 2 {
        return Err("dimension estimates need depth >= 2".into());
    }
    Ok(d)
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad number {s:?}"))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err("tolerance must be a positive number".into());
    }
    Ok(v)
}

fn parse_method(s: &str) -> Result<DimensionMethod, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_symbol(s: &str) -> Result<Symbol, String> {
    if s == "unit" {
        return Ok(Symbol::Unit);
    }
    s.parse().map_err(|e| format!("{e}"))
}

/// `re,im` decimal pair, e.g. `-1,0` or `-0.5,2.25`.
fn parse_complex(s: &str) -> Result<Complex64, String> {
    let (re, im) = s
        .split_once(',')
        .ok_or_else(|| format!("expected re,im — got {s:?}"))?;
    let re: f64 = re.trim().parse().map_err(|_| format!("bad real part {re:?}"))?;
    let im: f64 = im.trim().parse().map_err(|_| format!("bad imaginary part {im:?}"))?;
    Ok(Complex64::new(re, im))
}

/// 2 for anything wrong with the inputs, 3 for numerics that failed on
/// legitimate inputs.
fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Divergent { .. }
        | Error::ClosedFormPole
        | Error::NoBracket { .. }
        | Error::SingularMatrix { .. }
        | Error::IdentityMap
        | Error::UnboundedCircleImage
        | Error::DegenerateMass { .. }
        | Error::DegenerateNorm { .. }
        | Error::DegenerateKappa { .. }
        | Error::InconsistentSeries { .. }
        | Error::InconsistentTable { .. }
        | Error::MeasureDepth { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cfg = RunConfig::parse();
    match commands::dispatch(cfg.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
