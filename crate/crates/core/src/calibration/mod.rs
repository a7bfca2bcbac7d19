//! Fitting the volatility parameters to a caplet surface.
//!
//! The free parameters are the loading coefficients `α_{j,i}`, the decay
//! `β` and the amplitudes `c_j`; benchmark maturities, the volatility-state
//! dynamics and `γ` stay at their template values. Model quotes are
//! computed on one fixed point set for every parameter vector (common
//! random numbers), which makes the objective a deterministic, smooth
//! function suitable for finite-difference Jacobians. A genetic search
//! explores the parameter box; Levenberg-Marquardt polishes its best point.

mod ga;
mod lm;

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use ga::{genetic_search, GaResult, GaSettings};
pub use lm::{levenberg_marquardt, LmResult, LmSettings, LmStop};

use crate::curve::ModelState;
use crate::error::{config, Error, Result};
use crate::model::VolSpec;
use crate::pricing::{black_implied_vol, caplet_forward, price_many, simulator_for, Payoff, QuoteType, SurfaceQuote};
use crate::qmc::{PathConstruction, PointKind};
use crate::splitting::{Scheme, SimConfig};

/// Residual assigned (times the cell weight) when a model quote cannot be
/// inverted to an implied volatility.
pub const PENALTY: f64 = 1.0;

/// Box constraints, one interval per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(config("bounds need as many lower as upper limits"));
        }
        for (k, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l <= u) {
                return Err(config(format!("bounds for parameter {k} are not a finite interval: [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.lower.iter().zip(&self.upper)).map(|(v, (l, u))| v.clamp(*l, *u)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| l <= v && v <= u)
    }
}

/// The calibrated coordinates of a [`VolSpec`]: `α_{j,i}` row by row, then
/// `β`, then `c_j` (13 values for three factors of degree two).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn from_spec(spec: &VolSpec) -> Self {
        let mut values: Vec<f64> = spec.loadings.iter().flatten().copied().collect();
        values.push(spec.beta);
        values.extend(&spec.scales);
        Self { values }
    }

    /// Writes the values into a copy of `template`.
    pub fn to_spec(&self, template: &VolSpec) -> Result<VolSpec> {
        let expected = Self::len_for(template);
        if self.values.len() != expected {
            return Err(config(format!("expected {expected} parameters, got {}", self.values.len())));
        }
        let mut spec = template.clone();
        let mut it = self.values.iter().copied();
        for row in spec.loadings.iter_mut() {
            for a in row.iter_mut() {
                *a = it.next().expect("length checked");
            }
        }
        spec.beta = it.next().expect("length checked");
        for c in spec.scales.iter_mut() {
            *c = it.next().expect("length checked");
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn len_for(template: &VolSpec) -> usize {
        template.loadings.iter().map(Vec::len).sum::<usize>() + 1 + template.factors()
    }

    pub fn names(template: &VolSpec) -> Vec<String> {
        let mut names = Vec::new();
        for (j, row) in template.loadings.iter().enumerate() {
            for i in 0..row.len() {
                names.push(format!("alpha_{}_{i}", j + 1));
            }
        }
        names.push("beta".into());
        for j in 0..template.factors() {
            names.push(format!("c_{}", j + 1));
        }
        names
    }
}

/// Default search box: loadings up to 3% (1% for the linear and 0.2% for
/// the quadratic coefficient), `β ∈ [0.02, 1]`, `c_j ∈ [0.5, 100]`.
pub fn default_bounds(template: &VolSpec) -> Bounds {
    let (mut lower, mut upper) = (Vec::new(), Vec::new());
    for row in &template.loadings {
        for i in 0..row.len() {
            let m = [0.03, 0.01, 0.002].get(i).copied().unwrap_or(0.002);
            lower.push(-m);
            upper.push(m);
        }
    }
    lower.push(0.02);
    upper.push(1.0);
    for _ in 0..template.factors() {
        lower.push(0.5);
        upper.push(100.0);
    }
    Bounds { lower, upper }
}

/// One quoted caplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCell {
    pub maturity: f64,
    pub tenor: f64,
    pub strike: f64,
    pub market: f64,
    pub weight: f64,
}

/// Caplet quotes of a single kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibTarget {
    pub quote: QuoteType,
    pub cells: Vec<TargetCell>,
}

impl CalibTarget {
    /// Unit weights; all quotes must share one kind.
    pub fn from_surface(quotes: &[SurfaceQuote]) -> Result<Self> {
        let first = quotes.first().ok_or_else(|| config("calibration target has no cells"))?;
        if quotes.iter().any(|q| q.quote_type != first.quote_type) {
            return Err(config("calibration target mixes price and vol quotes"));
        }
        let cells = quotes
            .iter()
            .map(|q| TargetCell {
                maturity: q.maturity_years,
                tenor: q.tenor_years,
                strike: q.strike,
                market: q.value,
                weight: 1.0,
            })
            .collect();
        let t = Self { quote: first.quote_type, cells };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(config("calibration target has no cells"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if !(c.weight >= 0.0 && c.weight.is_finite() && c.market.is_finite()) {
                return Err(config(format!("target cell {i} has an invalid weight or quote")));
            }
        }
        Ok(())
    }

    pub fn max_maturity(&self) -> f64 {
        self.cells.iter().map(|c| c.maturity).fold(0.0, f64::max)
    }
}

/// Simulation settings of the calibration objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub steps_per_year: usize,
    pub paths: usize,
    pub scheme: Scheme,
    pub points: PointKind,
    pub construction: PathConstruction,
    pub skip: u64,
    pub seed: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            steps_per_year: 12,
            paths: 2048,
            scheme: Scheme::Swss,
            points: PointKind::Sobol,
            construction: PathConstruction::BrownianBridge,
            skip: 1,
            seed: 0,
        }
    }
}

impl SimSettings {
    pub fn config(&self, horizon: f64) -> SimConfig {
        SimConfig::new(horizon, self.steps_per_year, self.scheme, self.paths)
            .with_points(self.points)
            .with_construction(self.construction)
            .with_skip(self.skip)
            .with_seed(self.seed)
    }
}

/// Model quotes and residuals at one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Model quote per cell; NaN where the implied volatility does not exist.
    pub model: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Cells whose residual is the penalty.
    pub flagged: Vec<bool>,
}

/// Residuals `weight · (model − market)` as a function of the parameters.
#[derive(Debug)]
pub struct Objective {
    template: VolSpec,
    initial: ModelState,
    config: SimConfig,
    target: CalibTarget,
    payoffs: Vec<Payoff>,
    /// Black-76 forward and annuity per cell.
    black: Vec<(f64, f64)>,
    evaluations: AtomicUsize,
}

impl Objective {
    pub fn new(template: &VolSpec, initial: &ModelState, settings: &SimSettings, target: &CalibTarget) -> Result<Self> {
        target.validate()?;
        let config = settings.config(target.max_maturity());
        let payoffs = target
            .cells
            .iter()
            .map(|c| Payoff::caplet(c.maturity, c.tenor, c.strike))
            .collect::<Result<Vec<_>>>()?;
        let grid_curve = simulator_for(template, &config, initial, &payoffs)?.initial_state().curve;
        let black = target
            .cells
            .iter()
            .map(|c| caplet_forward(&grid_curve, c.maturity, c.tenor))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            template: template.clone(),
            initial: initial.clone(),
            config,
            target: target.clone(),
            payoffs,
            black,
            evaluations: AtomicUsize::new(0),
        })
    }

    pub fn target(&self) -> &CalibTarget {
        &self.target
    }

    pub fn template(&self) -> &VolSpec {
        &self.template
    }

    /// Number of objective evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn evaluate(&self, params: &[f64]) -> Result<Evaluation> {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let spec = ParamVector { values: params.to_vec() }.to_spec(&self.template)?;
        let prices = price_many(&spec, &self.config, &self.initial, &self.payoffs)?;
        let n = self.target.cells.len();
        let mut out = Evaluation { model: vec![0.0; n], residuals: vec![0.0; n], flagged: vec![false; n] };
        for (i, (cell, est)) in self.target.cells.iter().zip(&prices).enumerate() {
            let quote = match self.target.quote {
                QuoteType::Price => Some(est.value),
                QuoteType::Vol => {
                    let (forward, annuity) = self.black[i];
                    black_implied_vol(est.value, forward, cell.strike, cell.maturity, annuity).ok()
                }
            };
            match quote {
                Some(q) => {
                    out.model[i] = q;
                    out.residuals[i] = cell.weight * (q - cell.market);
                }
                None => {
                    out.model[i] = f64::NAN;
                    out.residuals[i] = cell.weight * PENALTY;
                    out.flagged[i] = true;
                }
            }
        }
        Ok(out)
    }

    pub fn residuals(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(params)?.residuals)
    }
}

/// `‖r‖ / √cells`.
pub fn rmse(residuals: &[f64]) -> f64 {
    (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
}

/// Settings of [`calibrate`]; also the schema of the settings file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub simulation: SimSettings,
    pub ga: GaSettings,
    pub lm: LmSettings,
    /// Search box; [`default_bounds`] when absent.
    pub bounds: Option<Bounds>,
    /// Starting parameters; the template's when absent.
    pub start: Option<Vec<f64>>,
}

impl CalibrationSettings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Per-cell outcome of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitCell {
    pub cell_id: usize,
    pub maturity_years: f64,
    pub strike: f64,
    pub market: f64,
    pub model: f64,
    pub residual: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: Vec<f64>,
    pub cells: Vec<FitCell>,
    pub rmse: f64,
    pub start_rmse: f64,
    pub ga_rmse: f64,
    pub lm_iterations: usize,
    pub lm_stop: LmStop,
    pub evaluations: usize,
    pub wall_seconds: f64,
}

impl FitReport {
    /// Columns `cell_id,maturity_years,strike,market,model,residual,flagged`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }

    /// One line of `key=value` pairs; wall time only if `timing` is set, so
    /// that the line is reproducible by default.
    pub fn summary_line(&self, timing: bool) -> String {
        let mut s = format!(
            "rmse={:e} start_rmse={:e} ga_rmse={:e} lm_iterations={} lm_stop={:?} evaluations={}",
            self.rmse, self.start_rmse, self.ga_rmse, self.lm_iterations, self.lm_stop, self.evaluations
        );
        if timing {
            s.push_str(&format!(" wall_seconds={:.3}", self.wall_seconds));
        }
        s
    }
}

/// Genetic search from `start` (or the template), then Levenberg-Marquardt
/// from the best point found.
pub fn calibrate(
    template: &VolSpec,
    initial: &ModelState,
    target: &CalibTarget,
    settings: &CalibrationSettings,
) -> Result<(VolSpec, FitReport)> {
    let clock = Instant::now();
    let objective = Objective::new(template, initial, &settings.simulation, target)?;
    let bounds = settings.bounds.clone().unwrap_or_else(|| default_bounds(template));
    bounds.validate()?;
    let n = ParamVector::len_for(template);
    if bounds.len() != n {
        return Err(config(format!("bounds cover {} parameters, the model has {n}", bounds.len())));
    }
    let start = bounds.project(&settings.start.clone().unwrap_or_else(|| ParamVector::from_spec(template).values));
    if start.len() != n {
        return Err(config(format!("start has {} parameters, the model has {n}", start.len())));
    }
    let start_rmse = rmse(&objective.residuals(&start)?);
    let cost = |x: &[f64]| objective.residuals(x).map(|r| r.iter().map(|v| v * v).sum()).unwrap_or(f64::INFINITY);
    let ga_best = if settings.ga.generations == 0 {
        start.clone()
    } else {
        genetic_search(cost, &bounds, &start, &settings.ga).best
    };
    let ga_rmse = rmse(&objective.residuals(&ga_best)?);
    let lm = levenberg_marquardt(|x| objective.residuals(x), &ga_best, &bounds, &settings.lm)?;
    let spec = ParamVector { values: lm.params.clone() }.to_spec(template)?;
    let fit = objective.evaluate(&lm.params)?;
    let cells = target
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| FitCell {
            cell_id: i,
            maturity_years: c.maturity,
            strike: c.strike,
            market: c.market,
            model: fit.model[i],
            residual: fit.residuals[i],
            flagged: fit.flagged[i],
        })
        .collect();
    let report = FitReport {
        params: lm.params,
        cells,
        rmse: rmse(&fit.residuals),
        start_rmse,
        ga_rmse,
        lm_iterations: lm.iterations,
        lm_stop: lm.stop,
        evaluations: objective.evaluations(),
        wall_seconds: clock.elapsed().as_secs_f64(),
    };
    Ok((spec, report))
}

/// Maturities of the synthetic surface: ten annual slices.
pub const SURFACE_MATURITIES: [f64; 10] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];

/// Strikes of the synthetic surface as multiples of the forward rate.
pub const SURFACE_MONEYNESS: [f64; 12] = [0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2, 1.25, 1.3, 1.35, 1.4];

/// Caplet implied-volatility surface generated by the model itself at
/// `spec`, on the same point set the objective will use. Strikes are
/// `moneyness × forward` on each maturity slice.
pub fn synthetic_surface(
    spec: &VolSpec,
    initial: &ModelState,
    settings: &SimSettings,
    maturities: &[f64],
    moneyness: &[f64],
    tenor: f64,
) -> Result<Vec<SurfaceQuote>> {
    let horizon = maturities.iter().copied().fold(0.0, f64::max);
    let config = settings.config(horizon);
    let probe = [Payoff::caplet(horizon, tenor, 0.0)?];
    let grid_curve = simulator_for(spec, &config, initial, &probe)?.initial_state().curve;
    let mut cells = Vec::new();
    for &t in maturities {
        let (forward, _) = caplet_forward(&grid_curve, t, tenor)?;
        for &m in moneyness {
            cells.push(TargetCell { maturity: t, tenor, strike: m * forward, market: 0.0, weight: 1.0 });
        }
    }
    let target = CalibTarget { quote: QuoteType::Vol, cells };
    let objective = Objective::new(spec, initial, settings, &target)?;
    let eval = objective.evaluate(&ParamVector::from_spec(spec).values)?;
    if let Some(i) = eval.flagged.iter().position(|&f| f) {
        let c = target.cells[i];
        return Err(crate::error::domain(format!(
            "no implied volatility for the caplet T={} K={} at the generating parameters",
            c.maturity, c.strike
        )));
    }
    Ok(target
        .cells
        .iter()
        .zip(eval.model)
        .map(|(c, v)| SurfaceQuote {
            maturity_years: c.maturity,
            tenor_years: c.tenor,
            strike: c.strike,
            quote_type: QuoteType::Vol,
            value: v,
        })
        .collect())
}
