//! Payoffs, Monte Carlo estimators and implied volatilities.
//!
//! Payoffs are discounted with the bank account `exp(z)`, where the log
//! bank account is passed through the clamp [`clamp_phi`] so discount
//! factors stay bounded by `exp(2K)`.

mod black;
mod converge;
mod surface;

use std::fmt;
use std::str::FromStr;

pub use black::{black76_price, black76_vega, black_implied_vol};
pub use converge::{config_for_steps, extrapolated_rows, fit_slope, ladder_rows, rows_slope, timed_price, ConvergenceRow};
pub use surface::{read_surface, read_surface_file, write_surface, QuoteType, SurfaceQuote};

use crate::curve::{ForwardCurve, ModelState};
use crate::error::{config, domain, Error, Result};
use crate::model::{DriftCondition, VolSpec};
use crate::splitting::{richardson_table, Scheme, SimConfig, Simulator, StateView};
use crate::sum::stable_mean;

/// Default clamp level `K` of the log bank account.
pub const DEFAULT_CLAMP: f64 = 1.0;

/// Identity above `−k`, and `−k − k·tanh((−z−k)/k)` below: continuous with
/// its first derivative, nondecreasing, bounded below by `−2k`.
pub fn clamp_phi(z: f64, k: f64) -> f64 {
    if z >= -k {
        z
    } else {
        -k - k * ((-z - k) / k).tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffKind {
    ZeroCouponBond,
    Caplet { strike: f64 },
    PayerSwaption { strike: f64, payments: usize },
    /// `exp(−∫_0^δ h)·cos(v)`, undiscounted; smooth in the whole state and
    /// used to measure weak convergence.
    SmoothCylinder,
}

/// A claim observed at `maturity` on the simulated curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub maturity: f64,
    pub tenor: f64,
    pub clamp: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind, maturity: f64, tenor: f64) -> Result<Self> {
        let p = Self { kind, maturity, tenor, clamp: DEFAULT_CLAMP };
        p.validate()?;
        Ok(p)
    }

    pub fn zero_coupon_bond(maturity: f64, tenor: f64) -> Result<Self> {
        Self::new(PayoffKind::ZeroCouponBond, maturity, tenor)
    }

    pub fn caplet(maturity: f64, tenor: f64, strike: f64) -> Result<Self> {
        Self::new(PayoffKind::Caplet { strike }, maturity, tenor)
    }

    pub fn payer_swaption(maturity: f64, tenor: f64, strike: f64, payments: usize) -> Result<Self> {
        Self::new(PayoffKind::PayerSwaption { strike, payments }, maturity, tenor)
    }

    pub fn smooth_cylinder(maturity: f64, tenor: f64) -> Result<Self> {
        Self::new(PayoffKind::SmoothCylinder, maturity, tenor)
    }

    pub fn with_clamp(mut self, clamp: f64) -> Result<Self> {
        self.clamp = clamp;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity >= 0.0 && self.maturity.is_finite()) {
            return Err(domain(format!("payoff maturity {} must be finite and nonnegative", self.maturity)));
        }
        if !(self.tenor > 0.0 && self.tenor.is_finite()) {
            return Err(domain(format!("payoff tenor {} must be positive", self.tenor)));
        }
        if !(self.clamp > 0.0 && self.clamp.is_finite()) {
            return Err(domain(format!("clamp level {} must be positive", self.clamp)));
        }
        match self.kind {
            PayoffKind::Caplet { strike } | PayoffKind::PayerSwaption { strike, .. } if !strike.is_finite() => {
                Err(domain(format!("strike {strike} must be finite")))
            }
            PayoffKind::PayerSwaption { payments: 0, .. } => Err(domain("swaption needs at least one payment")),
            _ => Ok(()),
        }
    }

    /// Longest time to maturity read off the terminal curve.
    pub fn curve_extent(&self) -> f64 {
        match self.kind {
            PayoffKind::PayerSwaption { payments, .. } => payments as f64 * self.tenor,
            _ => self.tenor,
        }
    }

    /// Discounted payoff in state `s`.
    pub fn value(&self, s: StateView<'_>) -> Result<f64> {
        let delta = self.tenor;
        let curve = s.curve;
        let discount = || (-clamp_phi(s.z, self.clamp)).exp();
        Ok(match self.kind {
            PayoffKind::ZeroCouponBond => discount() * (-curve.integrate(0.0, delta)?).exp(),
            PayoffKind::Caplet { strike } => {
                let libor = curve.integrate(0.0, delta)?.exp_m1() / delta;
                discount() * (libor - strike).max(0.0)
            }
            PayoffKind::PayerSwaption { strike, payments } => {
                let fixed = 1.0 + delta * strike;
                let (mut cumulative, mut bracket) = (0.0, 0.0);
                for i in 1..=payments {
                    let period = curve.integrate((i - 1) as f64 * delta, i as f64 * delta)?;
                    cumulative += period;
                    bracket += (-cumulative).exp() * (period.exp() - fixed);
                }
                discount() * bracket.max(0.0)
            }
            PayoffKind::SmoothCylinder => (-curve.integrate(0.0, delta)?).exp() * s.v.cos(),
        })
    }
}

/// Descriptor such as `caplet:T=1:delta=0.25:K=0.03`.
impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, extra) = match self.kind {
            PayoffKind::ZeroCouponBond => ("zcb", String::new()),
            PayoffKind::Caplet { strike } => ("caplet", format!(":K={strike}")),
            PayoffKind::PayerSwaption { strike, payments } => ("payer_swaption", format!(":I={payments}:K={strike}")),
            PayoffKind::SmoothCylinder => ("cylinder", String::new()),
        };
        write!(f, "{name}:T={}:delta={}{extra}", self.maturity, self.tenor)?;
        if self.clamp != DEFAULT_CLAMP {
            write!(f, ":clamp={}", self.clamp)?;
        }
        Ok(())
    }
}

impl FromStr for Payoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().trim();
        let (mut maturity, mut tenor, mut strike, mut payments, mut clamp) = (None, None, None, None, DEFAULT_CLAMP);
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| config(format!("payoff field '{part}' is not key=value")))?;
            let num = || value.trim().parse::<f64>().map_err(|_| config(format!("payoff field '{part}': not a number")));
            match key.trim() {
                "T" => maturity = Some(num()?),
                "delta" => tenor = Some(num()?),
                "K" => strike = Some(num()?),
                "I" => {
                    payments = Some(value.trim().parse::<usize>().map_err(|_| config(format!("payoff field '{part}': not a count")))?)
                }
                "clamp" => clamp = num()?,
                other => return Err(config(format!("unknown payoff field '{other}'"))),
            }
        }
        let maturity = maturity.ok_or_else(|| config(format!("payoff '{s}' lacks T=")))?;
        let tenor = tenor.ok_or_else(|| config(format!("payoff '{s}' lacks delta=")))?;
        let need_strike = || strike.ok_or_else(|| config(format!("payoff '{s}' lacks K=")));
        let kind = match name {
            "zcb" => PayoffKind::ZeroCouponBond,
            "caplet" => PayoffKind::Caplet { strike: need_strike()? },
            "payer_swaption" | "swaption" => PayoffKind::PayerSwaption {
                strike: need_strike()?,
                payments: payments.ok_or_else(|| config(format!("payoff '{s}' lacks I=")))?,
            },
            "cylinder" => PayoffKind::SmoothCylinder,
            other => return Err(config(format!("unknown payoff kind '{other}'"))),
        };
        Payoff::new(kind, maturity, tenor)?.with_clamp(clamp)
    }
}

/// [`Payoff::value`] on an owned state.
pub fn payoff_value(p: &Payoff, terminal: &ModelState) -> Result<f64> {
    p.value(StateView { curve: terminal.curve.view(), v: terminal.v, z: terminal.z })
}

/// A Monte Carlo price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub paths: usize,
    pub scheme: Scheme,
    /// Time steps of the base (unextrapolated) mesh.
    pub steps: usize,
}

/// Simulator whose grid covers every payoff in `payoffs`.
pub fn simulator_for(spec: &VolSpec, config: &SimConfig, initial: &ModelState, payoffs: &[Payoff]) -> Result<Simulator> {
    let extent = payoffs.iter().map(Payoff::curve_extent).fold(0.0, f64::max);
    Simulator::new(spec, config, initial, extent)
}

/// Weighted payoff values per path, `[path][payoff]`, in path order.
///
/// Each payoff is observed at its own maturity, which must lie on the time
/// mesh of `sim`; a single simulation serves all of them.
pub fn path_values(sim: &Simulator, config: &SimConfig, payoffs: &[Payoff]) -> Result<Vec<Vec<f64>>> {
    let mut steps = Vec::with_capacity(payoffs.len());
    for p in payoffs {
        p.validate()?;
        let s = sim.step_at(p.maturity).ok_or_else(|| {
            config_error(format!(
                "payoff maturity {} is not a step of the {}-year mesh with {} steps per year",
                p.maturity, config.horizon, config.steps_per_year
            ))
        })?;
        steps.push(s);
    }
    let mut observe: Vec<usize> = steps.clone();
    observe.sort_unstable();
    observe.dedup();
    let sampler = config.point_set(sim.dimension()).sampler()?;
    sim.map_paths(&sampler, config.paths, |u, ws| {
        let mut acc = vec![0.0; payoffs.len()];
        let mut failure = None;
        sim.run_path(u, ws, &observe, |branch, step, state| {
            for ((p, &s), a) in payoffs.iter().zip(&steps).zip(acc.iter_mut()) {
                if s == step {
                    match p.value(state) {
                        Ok(x) => *a += branch.weight * x,
                        Err(e) => failure = Some(e),
                    }
                }
            }
        })?;
        match failure {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    })
}

fn config_error(msg: String) -> Error {
    config(msg)
}

/// Column means of [`path_values`], independent of path order.
pub fn column_means(values: &[Vec<f64>], columns: usize) -> Vec<f64> {
    (0..columns)
        .map(|c| {
            let mut col: Vec<f64> = values.iter().map(|row| row[c]).collect();
            stable_mean(&mut col)
        })
        .collect()
}

fn estimate_once(spec: &VolSpec, config: &SimConfig, initial: &ModelState, payoffs: &[Payoff]) -> Result<Vec<f64>> {
    let sim = simulator_for(spec, config, initial, payoffs)?;
    let values = path_values(&sim, config, payoffs)?;
    Ok(column_means(&values, payoffs.len()))
}

/// Prices several payoffs on one set of simulated paths.
///
/// With `extrapolation_levels = L > 0` the estimates at `n, 2n, …, 2^L n`
/// steps are combined by Richardson extrapolation.
pub fn price_many(spec: &VolSpec, config: &SimConfig, initial: &ModelState, payoffs: &[Payoff]) -> Result<Vec<Estimate>> {
    let steps = config.steps()?;
    for p in payoffs {
        if p.maturity > config.horizon * (1.0 + 1e-12) {
            return Err(config_error(format!("payoff maturity {} beyond horizon {}", p.maturity, config.horizon)));
        }
    }
    let mut ladder = Vec::with_capacity(config.extrapolation_levels + 1);
    for level in 0..=config.extrapolation_levels {
        ladder.push(estimate_once(spec, &config.refined(1 << level), initial, payoffs)?);
    }
    Ok((0..payoffs.len())
        .map(|i| {
            let column: Vec<f64> = ladder.iter().map(|row| row[i]).collect();
            Estimate {
                value: richardson_table(&column).expect("at least one level"),
                paths: config.paths,
                scheme: config.scheme,
                steps,
            }
        })
        .collect())
}

/// Price of one payoff; the simulation horizon must equal its maturity.
pub fn price(spec: &VolSpec, config: &SimConfig, initial: &ModelState, payoff: &Payoff) -> Result<Estimate> {
    if (config.horizon - payoff.maturity).abs() > 1e-12 * config.horizon.max(1.0) {
        return Err(config_error(format!(
            "simulation horizon {} differs from payoff maturity {}",
            config.horizon, payoff.maturity
        )));
    }
    Ok(price_many(spec, config, initial, std::slice::from_ref(payoff))?[0])
}

/// Outcome of the bond martingale test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MartingaleReport {
    /// Simulated price of the bond paying 1 at `T + δ`.
    pub lhs: f64,
    /// `exp(−∫_0^{T+δ} h_0)`.
    pub rhs: f64,
    pub rel_gap: f64,
}

/// Compares the simulated bond price with the one implied by the initial
/// curve. The horizon of `config` is replaced by `maturity`; the initial
/// curve is taken as represented on the simulation grid.
pub fn martingale_check(
    spec: &VolSpec,
    config: &SimConfig,
    initial: &ModelState,
    maturity: f64,
    tenor: f64,
) -> Result<MartingaleReport> {
    let config = SimConfig { horizon: maturity, ..config.clone() };
    let bond = Payoff::zero_coupon_bond(maturity, tenor)?;
    let sim = simulator_for(spec, &config, initial, &[bond])?;
    let lhs = price(spec, &config, initial, &bond)?.value;
    let start = sim.initial_state();
    let rhs = (-start.z - start.curve.integrate(0.0, maturity + tenor)?).exp();
    Ok(MartingaleReport { lhs, rhs, rel_gap: (lhs - rhs).abs() / rhs })
}

/// The same check with the drift sign flipped; a negative control.
pub fn martingale_check_reversed(
    spec: &VolSpec,
    config: &SimConfig,
    initial: &ModelState,
    maturity: f64,
    tenor: f64,
) -> Result<MartingaleReport> {
    martingale_check(&spec.with_drift(DriftCondition::Reversed), config, initial, maturity, tenor)
}

/// Discount factor `P(0, x) = exp(−∫_0^x h)`.
pub fn discount_factor(curve: &ForwardCurve, x: f64) -> Result<f64> {
    Ok((-curve.integrate(0.0, x)?).exp())
}

/// Forward simple rate over `[T, T+δ]` and the Black-76 annuity `P(0, T)`
/// matching the caplet payoff, which pays `(L − K)⁺` at `T`.
pub fn caplet_forward(curve: &ForwardCurve, maturity: f64, tenor: f64) -> Result<(f64, f64)> {
    let p_t = discount_factor(curve, maturity)?;
    let forward = curve.integrate(maturity, maturity + tenor)?.exp_m1() / tenor;
    Ok((forward, p_t))
}

/// Par rate of the swap underlying a `payments`-period payer swaption.
pub fn forward_swap_rate(curve: &ForwardCurve, maturity: f64, tenor: f64, payments: usize) -> Result<f64> {
    if payments == 0 {
        return Err(domain("swap needs at least one payment"));
    }
    let p0 = discount_factor(curve, maturity)?;
    let mut annuity = 0.0;
    let mut last = p0;
    for i in 1..=payments {
        last = discount_factor(curve, maturity + i as f64 * tenor)?;
        annuity += tenor * last;
    }
    Ok((p0 - last) / annuity)
}
