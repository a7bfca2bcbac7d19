//! Subcommand implementations. Every command writes one CSV table.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use hjm_core::calibration::{
    calibrate as fit, synthetic_surface, CalibTarget, CalibrationSettings, SimSettings, SURFACE_MATURITIES,
    SURFACE_MONEYNESS,
};
use hjm_core::pricing::{
    extrapolated_rows, ladder_rows, martingale_check, price_many, read_surface_file, rows_slope, timed_price,
    write_surface, ConvergenceRow, MartingaleReport,
};
use hjm_core::qmc::plan_budget;
use hjm_core::{Scheme, SimConfig, Simulator};
use serde::Serialize;

use crate::config::{RunConfig, SimArgs};

/// A rejected input that is well-formed but outside the supported domain.
#[derive(Debug)]
pub struct DomainError(pub String);

impl std::fmt::Display for DomainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DomainError {}

fn domain(msg: impl Into<String>) -> anyhow::Error {
    DomainError(msg.into()).into()
}

/// Destination and formatting options shared by all commands.
pub struct Output {
    path: Option<PathBuf>,
    timing: bool,
}

impl Output {
    pub fn new(path: Option<PathBuf>, timing: bool) -> Self {
        Self { path, timing }
    }

    fn seconds(&self, s: f64) -> Option<f64> {
        self.timing.then_some(s)
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn write_rows<T: Serialize>(&self, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.sink()?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn with_horizon(sim: &SimConfig, horizon: f64) -> SimConfig {
    SimConfig { horizon, ..sim.clone() }
}

fn scheme_label(sim: &SimConfig) -> String {
    match sim.extrapolation_levels {
        0 => sim.scheme.to_string(),
        l => format!("{}+RE{l}", sim.scheme),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Simulation horizon in years.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Steps between observations (default: one year).
    #[arg(long)]
    pub every: Option<usize>,
}

#[derive(Serialize)]
struct PathRow {
    path: usize,
    branch: usize,
    weight: f64,
    time: f64,
    v: f64,
    z: f64,
    short_rate: f64,
    yield_1y: f64,
    yield_5y: f64,
    yield_10y: f64,
}

pub fn simulate(args: &SimulateArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    const YIELDS: [f64; 3] = [1.0, 5.0, 10.0];
    let cfg = with_horizon(&rc.sim, args.horizon);
    let sim = Simulator::new(&rc.spec, &cfg, &rc.initial, YIELDS[2])?;
    let steps = sim.steps();
    let every = args.every.unwrap_or(cfg.steps_per_year);
    if every == 0 {
        bail!("--every must be positive");
    }
    let mut observe: Vec<usize> = (every..=steps).step_by(every).collect();
    if observe.last() != Some(&steps) {
        observe.push(steps);
    }
    let dt = sim.dt();
    let sampler = cfg.point_set(sim.dimension()).sampler()?;
    let per_path = sim.map_paths(&sampler, cfg.paths, |u, ws| {
        let mut rows = Vec::new();
        let mut failure = None;
        sim.run_path(u, ws, &observe, |branch, step, state| {
            let mut y = [0.0; 3];
            for (out, x) in y.iter_mut().zip(YIELDS) {
                match state.curve.integrate(0.0, x) {
                    Ok(i) => *out = i / x,
                    Err(e) => failure = Some(e),
                }
            }
            let short_rate = state.curve.evaluate(0.0).unwrap_or(f64::NAN);
            rows.push(PathRow {
                path: 0,
                branch: branch.index,
                weight: branch.weight,
                time: step as f64 * dt,
                v: state.v,
                z: state.z,
                short_rate,
                yield_1y: y[0],
                yield_5y: y[1],
                yield_10y: y[2],
            });
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(rows),
        }
    })?;
    let rows: Vec<PathRow> = per_path
        .into_iter()
        .enumerate()
        .flat_map(|(p, rows)| rows.into_iter().map(move |r| PathRow { path: p, ..r }))
        .collect();
    out.write_rows(&rows)
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Payoff descriptor.
    #[arg(long, default_value = "cylinder:T=1:delta=1")]
    pub payoff: String,
    /// Schemes to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "LT_FWD,LT_BWD,NV,SWSS,EULER_MARUYAMA")]
    pub schemes: Vec<Scheme>,
    /// Step counts to the payoff maturity, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16,32,64")]
    pub ladder: Vec<usize>,
    /// Step count of the reference solution.
    #[arg(long, default_value_t = 256)]
    pub reference_steps: usize,
    #[arg(long, default_value = "SWSS")]
    pub reference_scheme: Scheme,
    /// Also emit Richardson-extrapolated rows for consecutive doublings.
    #[arg(long)]
    pub richardson: bool,
}

#[derive(Serialize)]
struct ConvergeRow {
    scheme: String,
    n: usize,
    paths: usize,
    estimate: f64,
    reference: f64,
    abs_error: f64,
    slope: Option<f64>,
    seconds: Option<f64>,
}

pub fn converge(args: &ConvergeArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    let payoff = rc.payoff(&args.payoff)?;
    if args.ladder.is_empty() {
        bail!("--ladder needs at least one step count");
    }
    let base = with_horizon(&rc.sim, payoff.maturity);
    let (reference, _) = timed_price(&rc.spec, &base, &rc.initial, &payoff, args.reference_scheme, args.reference_steps)?;
    let mut table: Vec<ConvergeRow> = Vec::new();
    let mut push = |rows: &[ConvergenceRow]| {
        let slope = rows_slope(rows);
        table.extend(rows.iter().map(|r| ConvergeRow {
            scheme: r.scheme.clone(),
            n: r.n,
            paths: r.paths,
            estimate: r.estimate,
            reference: r.reference,
            abs_error: r.abs_error,
            slope,
            seconds: out.seconds(r.seconds),
        }));
    };
    for &scheme in &args.schemes {
        let rows = ladder_rows(&rc.spec, &base, &rc.initial, &payoff, scheme, &args.ladder, reference)?;
        push(&rows);
        if args.richardson {
            push(&extrapolated_rows(&rows));
        }
    }
    out.write_rows(&table)
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Payoff descriptor; repeat for several payoffs. `K=atm` picks the
    /// forward rate. Defaults to the `payoffs` list of the config file.
    #[arg(long = "payoff")]
    pub payoffs: Vec<String>,
}

#[derive(Serialize)]
struct PriceRow {
    payoff: String,
    estimate: f64,
    #[serde(rename = "K")]
    paths: usize,
    n: usize,
    scheme: String,
    wall_seconds: Option<f64>,
}

pub fn price(args: &PriceArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    let descriptors = if args.payoffs.is_empty() { &rc.payoffs } else { &args.payoffs };
    if descriptors.is_empty() {
        bail!("no payoffs given (use --payoff or a config file with a payoffs list)");
    }
    let payoffs = descriptors.iter().map(|d| rc.payoff(d)).collect::<Result<Vec<_>>>()?;
    let horizon = payoffs.iter().map(|p| p.maturity).fold(0.0, f64::max);
    let cfg = with_horizon(&rc.sim, horizon);
    let clock = Instant::now();
    let estimates = price_many(&rc.spec, &cfg, &rc.initial, &payoffs)?;
    let wall = clock.elapsed().as_secs_f64();
    let rows: Vec<PriceRow> = payoffs
        .iter()
        .zip(&estimates)
        .map(|(p, e)| PriceRow {
            payoff: p.to_string(),
            estimate: e.value,
            paths: e.paths,
            n: (p.maturity * cfg.steps_per_year as f64).round() as usize,
            scheme: scheme_label(&cfg),
            wall_seconds: out.seconds(wall),
        })
        .collect();
    out.write_rows(&rows)
}

#[derive(Debug, Args)]
pub struct MartingaleArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Observation time T of the bond.
    #[arg(long, default_value_t = 1.0)]
    pub maturity: f64,
    /// Remaining bond maturity δ at T.
    #[arg(long, default_value_t = 0.25)]
    pub tenor: f64,
    /// Run with all volatility switched off (the gap must vanish).
    #[arg(long)]
    pub zero_vol: bool,
    /// Run with the drift sign flipped (the gap must grow).
    #[arg(long)]
    pub reverse_drift: bool,
    /// Emit the model row and both control rows.
    #[arg(long, conflicts_with_all = ["zero_vol", "reverse_drift"])]
    pub controls: bool,
}

#[derive(Serialize)]
struct MartingaleRow {
    case: &'static str,
    maturity: f64,
    tenor: f64,
    lhs: f64,
    rhs: f64,
    rel_gap: f64,
    scheme: String,
    n: usize,
    #[serde(rename = "K")]
    paths: usize,
}

pub fn martingale(args: &MartingaleArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    use hjm_core::model::DriftCondition;
    let mut cases = Vec::new();
    if args.controls || !(args.zero_vol || args.reverse_drift) {
        cases.push(("model", rc.spec.clone()));
    }
    if args.controls || args.zero_vol {
        cases.push(("zero_vol", rc.spec.without_volatility()));
    }
    if args.controls || args.reverse_drift {
        cases.push(("reversed_drift", rc.spec.with_drift(DriftCondition::Reversed)));
    }
    let cfg = with_horizon(&rc.sim, args.maturity);
    let mut rows = Vec::new();
    for (case, spec) in cases {
        let MartingaleReport { lhs, rhs, rel_gap } = martingale_check(&spec, &cfg, &rc.initial, args.maturity, args.tenor)?;
        rows.push(MartingaleRow {
            case,
            maturity: args.maturity,
            tenor: args.tenor,
            lhs,
            rhs,
            rel_gap,
            scheme: scheme_label(&cfg),
            n: cfg.steps()?,
            paths: cfg.paths,
        });
    }
    out.write_rows(&rows)
}

/// Flags that replace the `[simulation]` section of calibration settings.
fn override_simulation(s: &mut SimSettings, a: &SimArgs) {
    if let Some(v) = a.steps_per_year {
        s.steps_per_year = v;
    }
    if let Some(v) = a.paths {
        s.paths = v;
    }
    if let Some(v) = a.scheme {
        s.scheme = v;
    }
    if let Some(v) = a.points {
        s.points = v;
    }
    if let Some(v) = a.construction {
        s.construction = v;
    }
    if let Some(v) = a.skip {
        s.skip = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
}

fn load_settings(path: Option<&PathBuf>, rc: &RunConfig, sim: &SimArgs) -> Result<CalibrationSettings> {
    let mut settings = match path.or(rc.calibration.as_ref()) {
        Some(p) => CalibrationSettings::read_file(p).with_context(|| format!("calibration settings {}", p.display()))?,
        None => CalibrationSettings::default(),
    };
    override_simulation(&mut settings.simulation, sim);
    Ok(settings)
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Market surface (CSV: maturity_years,tenor_years,strike,quote_type,value).
    #[arg(long)]
    pub surface: Option<PathBuf>,
    /// Calibration settings (TOML with [simulation], [ga], [lm], bounds, start).
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Override the number of GA generations (0 = local search only).
    #[arg(long)]
    pub generations: Option<usize>,
    /// Override the GA population size.
    #[arg(long)]
    pub population: Option<usize>,
    /// Write the fitted model (TOML) here.
    #[arg(long)]
    pub fitted: Option<PathBuf>,
}

pub fn calibrate(args: &CalibrateArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    let surface = args.surface.as_ref().or(rc.surface.as_ref()).context("no surface given (--surface or config key)")?;
    let quotes = read_surface_file(surface).with_context(|| format!("surface {}", surface.display()))?;
    let target = CalibTarget::from_surface(&quotes)?;
    let mut settings = load_settings(args.settings.as_ref(), rc, &args.sim)?;
    if let Some(g) = args.generations {
        settings.ga.generations = g;
    }
    if let Some(p) = args.population {
        settings.ga.population = p;
    }
    let (spec, report) = fit(&rc.spec, &rc.initial, &target, &settings)?;
    if let Some(path) = &args.fitted {
        spec.write_file(path).with_context(|| format!("writing {}", path.display()))?;
    }
    report.write_csv(out.sink()?)?;
    eprintln!("{}", report.summary_line(out.timing));
    Ok(())
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Target accuracy ε.
    #[arg(long, default_value_t = 1e-2)]
    pub epsilon: f64,
    /// Weak order s of the scheme.
    #[arg(long, default_value_t = 2.0)]
    pub order: f64,
    /// Discretization error constant.
    #[arg(long, default_value_t = 1.0)]
    pub c_disc: f64,
    /// Integration error constant.
    #[arg(long, default_value_t = 1.0)]
    pub c_int: f64,
}

#[derive(Serialize)]
struct BudgetRow {
    epsilon: f64,
    order: f64,
    c_disc: f64,
    c_int: f64,
    n: u64,
    #[serde(rename = "K")]
    paths: u64,
}

pub fn budget(args: &BudgetArgs, out: &Output) -> Result<()> {
    let ok = |x: f64| x > 0.0 && x.is_finite();
    if !(ok(args.epsilon) && ok(args.c_disc) && ok(args.c_int) && args.order >= 1.0 && args.order.is_finite()) {
        return Err(domain(format!(
            "budget needs positive epsilon and constants and order >= 1 (epsilon={}, order={}, c_disc={}, c_int={})",
            args.epsilon, args.order, args.c_disc, args.c_int
        )));
    }
    let (n, k) = plan_budget(args.epsilon, args.order, args.c_disc, args.c_int);
    out.write_rows(&[BudgetRow { epsilon: args.epsilon, order: args.order, c_disc: args.c_disc, c_int: args.c_int, n, paths: k }])
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Calibration settings whose [simulation] section drives the generator.
    #[arg(long)]
    pub settings: Option<PathBuf>,
    /// Caplet maturities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub maturities: Vec<f64>,
    /// Strikes as multiples of the forward rate, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub moneyness: Vec<f64>,
    /// Caplet tenor δ.
    #[arg(long, default_value_t = 0.25)]
    pub tenor: f64,
}

pub fn surface(args: &SurfaceArgs, rc: &RunConfig, out: &Output) -> Result<()> {
    let settings = load_settings(args.settings.as_ref(), rc, &args.sim)?;
    let maturities = if args.maturities.is_empty() { SURFACE_MATURITIES.to_vec() } else { args.maturities.clone() };
    let moneyness = if args.moneyness.is_empty() { SURFACE_MONEYNESS.to_vec() } else { args.moneyness.clone() };
    let quotes = synthetic_surface(&rc.spec, &rc.initial, &settings.simulation, &maturities, &moneyness, args.tenor)?;
    write_surface(&quotes, out.sink()?)?;
    Ok(())
}
