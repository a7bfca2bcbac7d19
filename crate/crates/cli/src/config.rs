//! Run configuration: an optional TOML file with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use hjm_core::pricing::{caplet_forward, forward_swap_rate};
use hjm_core::qmc::PathConstruction;
use hjm_core::{demo, ForwardCurve, ModelState, Payoff, PayoffKind, PointKind, Scheme, SimConfig, VolSpec};
use serde::Deserialize;

/// Spacing and extent of the built-in initial curve.
const DEMO_CURVE_SPACING: f64 = 1.0 / 12.0;
const DEMO_CURVE_EXTENT: f64 = 30.0;

/// Keys accepted in a run configuration file. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFile {
    pub model: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub v0: Option<f64>,
    pub scheme: Option<Scheme>,
    pub steps_per_year: Option<usize>,
    pub paths: Option<usize>,
    pub points: Option<PointKind>,
    pub construction: Option<PathConstruction>,
    pub seed: Option<u64>,
    pub skip: Option<u64>,
    pub randomized_swss: Option<bool>,
    pub extrapolation_levels: Option<usize>,
    pub payoffs: Vec<String>,
    pub surface: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

/// Flags shared by every simulating command; each overrides the file.
#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// Run configuration file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Volatility specification (TOML); the built-in demo model if absent.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Initial forward curve (CSV with columns maturity,rate); the built-in demo curve if absent.
    #[arg(long, value_name = "FILE")]
    pub curve: Option<PathBuf>,
    /// Initial volatility state v0.
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Option<f64>,
    /// EULER_MARUYAMA, LT_FWD, LT_BWD, NV or SWSS.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub steps_per_year: Option<usize>,
    /// Number of simulated paths K.
    #[arg(long)]
    pub paths: Option<usize>,
    /// sobol or pseudo.
    #[arg(long)]
    pub points: Option<PointKind>,
    /// bridge or incremental.
    #[arg(long)]
    pub construction: Option<PathConstruction>,
    /// Seed of the pseudo-random generator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Leading Sobol' points to drop (at least 1).
    #[arg(long)]
    pub skip: Option<u64>,
    /// SWSS: choose one ordering per path instead of averaging both.
    #[arg(long)]
    pub randomized_swss: bool,
    /// Richardson extrapolation levels on top of the scheme.
    #[arg(long)]
    pub extrapolation_levels: Option<usize>,
}

/// Fully resolved inputs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: VolSpec,
    pub initial: ModelState,
    /// Simulation settings; the horizon is set per command.
    pub sim: SimConfig,
    pub payoffs: Vec<String>,
    pub surface: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
}

fn resolve(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl RunConfig {
    pub fn load(args: &SimArgs) -> Result<Self> {
        let (file, dir) = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file: RunFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                (file, path.parent().map(Path::to_path_buf))
            }
            None => (RunFile::default(), None),
        };
        let dir = dir.as_deref();
        let model = args.model.clone().or_else(|| file.model.clone().map(|p| resolve(dir, p)));
        let curve = args.curve.clone().or_else(|| file.curve.clone().map(|p| resolve(dir, p)));
        let spec = match model {
            Some(p) => VolSpec::read_file(&p).with_context(|| format!("model file {}", p.display()))?,
            None => demo::vol_spec(),
        };
        let curve = match curve {
            Some(p) => ForwardCurve::read_csv_file(&p).with_context(|| format!("curve file {}", p.display()))?,
            None => demo::initial_curve(DEMO_CURVE_SPACING, DEMO_CURVE_EXTENT)?,
        };
        let initial = ModelState::new(curve, args.v0.or(file.v0).unwrap_or(0.0));
        let mut sim = SimConfig::new(
            1.0,
            args.steps_per_year.or(file.steps_per_year).unwrap_or(12),
            args.scheme.or(file.scheme).unwrap_or(Scheme::Swss),
            args.paths.or(file.paths).unwrap_or(2048),
        )
        .with_points(args.points.or(file.points).unwrap_or(PointKind::Sobol))
        .with_construction(args.construction.or(file.construction).unwrap_or_default())
        .with_seed(args.seed.or(file.seed).unwrap_or(0))
        .with_skip(args.skip.or(file.skip).unwrap_or(1));
        sim.randomized_swss = args.randomized_swss || file.randomized_swss.unwrap_or(false);
        sim.extrapolation_levels = args.extrapolation_levels.or(file.extrapolation_levels).unwrap_or(0);
        if sim.paths == 0 {
            bail!("paths must be positive");
        }
        Ok(Self {
            spec,
            initial,
            sim,
            payoffs: file.payoffs,
            surface: file.surface.map(|p| resolve(dir, p)),
            calibration: file.calibration.map(|p| resolve(dir, p)),
        })
    }

    /// Parses a payoff descriptor; `K=atm` selects the at-the-money strike
    /// on the initial curve.
    pub fn payoff(&self, descriptor: &str) -> Result<Payoff> {
        let atm = descriptor.split(':').any(|f| f.trim().eq_ignore_ascii_case("K=atm"));
        if !atm {
            return Ok(descriptor.parse()?);
        }
        let numeric: Vec<&str> =
            descriptor.split(':').map(|f| if f.trim().eq_ignore_ascii_case("K=atm") { "K=0" } else { f }).collect();
        let mut payoff: Payoff = numeric.join(":").parse()?;
        let curve = &self.initial.curve;
        payoff.kind = match payoff.kind {
            PayoffKind::Caplet { .. } => {
                PayoffKind::Caplet { strike: caplet_forward(curve, payoff.maturity, payoff.tenor)?.0 }
            }
            PayoffKind::PayerSwaption { payments, .. } => PayoffKind::PayerSwaption {
                strike: forward_swap_rate(curve, payoff.maturity, payoff.tenor, payments)?,
                payments,
            },
            _ => bail!("payoff '{descriptor}' has no strike"),
        };
        Ok(payoff)
    }
}
