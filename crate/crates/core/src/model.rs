//! Volatility structure and vector fields of the HJM equation.
//!
//! Factor `j` has volatility `σ_j(h, v) = g_j(h, v) λ_j` with
//!
//! - loading `λ_j(x) = Σ_i α_{j,i} xⁱ e^{-βx}` (exponential-polynomial,
//!   shared decay `β`),
//! - amplitude `g_j(h, v) = tanh(c_j e^v ∫_0^{t_j} h)`,
//!
//! and the volatility state follows `dv = -α v dt + Σ_j γ_j dW^j`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::{CurveView, ModelState};
use crate::error::{config, domain, Error, Result};

/// Sign of the no-arbitrage drift. [`DriftCondition::Reversed`] exists only
/// as a negative control for martingale diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DriftCondition {
    #[default]
    NoArbitrage,
    Reversed,
}

impl DriftCondition {
    pub fn sign(self) -> f64 {
        match self {
            Self::NoArbitrage => 1.0,
            Self::Reversed => -1.0,
        }
    }
}

/// Model parameters.
///
/// The TOML schema uses the keys `alpha` (one array of polynomial
/// coefficients per factor), `beta`, `c`, `t`, `ou_alpha` and `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolSpec {
    /// `α_{j,i}`: polynomial coefficients of each loading.
    #[serde(rename = "alpha")]
    pub loadings: Vec<Vec<f64>>,
    /// Shared exponential decay of the loadings, per year.
    pub beta: f64,
    /// `c_j`: amplitude scalings.
    #[serde(rename = "c")]
    pub scales: Vec<f64>,
    /// `t_j`: benchmark maturities in years.
    #[serde(rename = "t")]
    pub benchmarks: Vec<f64>,
    /// Mean reversion of the volatility state, per year.
    pub ou_alpha: f64,
    /// `γ_j`: loadings of the volatility state on each Brownian motion.
    pub gamma: Vec<f64>,
    #[serde(skip)]
    pub drift: DriftCondition,
}

/// Default polynomial degree of the loadings.
pub const DEFAULT_DEGREE: usize = 2;

/// Default benchmark maturities for three factors.
pub const DEFAULT_BENCHMARKS: [f64; 3] = [0.5, 2.0, 10.0];

impl VolSpec {
    pub fn new(
        loadings: Vec<Vec<f64>>,
        beta: f64,
        scales: Vec<f64>,
        benchmarks: Vec<f64>,
        ou_alpha: f64,
        gamma: Vec<f64>,
    ) -> Result<Self> {
        let spec = Self { loadings, beta, scales, benchmarks, ou_alpha, gamma, drift: DriftCondition::NoArbitrage };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.loadings.len();
        if self.scales.len() != d || self.benchmarks.len() != d || self.gamma.len() != d {
            return Err(config(format!(
                "factor count mismatch: {} loadings, {} scales, {} benchmarks, {} gammas",
                d,
                self.scales.len(),
                self.benchmarks.len(),
                self.gamma.len()
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.ou_alpha >= 0.0 && self.ou_alpha.is_finite()) {
            return Err(config(format!("ou_alpha must be non-negative, got {}", self.ou_alpha)));
        }
        for (j, l) in self.loadings.iter().enumerate() {
            if l.is_empty() || l.iter().any(|a| !a.is_finite()) {
                return Err(config(format!("loading {j} must have finite coefficients")));
            }
        }
        if self.scales.iter().chain(&self.gamma).any(|x| !x.is_finite()) {
            return Err(config("scales and gammas must be finite"));
        }
        if self.benchmarks.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config("benchmark maturities must be positive"));
        }
        Ok(())
    }

    pub fn factors(&self) -> usize {
        self.loadings.len()
    }

    pub fn max_benchmark(&self) -> f64 {
        self.benchmarks.iter().copied().fold(0.0, f64::max)
    }

    /// Same parameters with all volatility switched off (`c = 0`, `γ = 0`).
    pub fn without_volatility(&self) -> Self {
        Self {
            scales: vec![0.0; self.factors()],
            gamma: vec![0.0; self.factors()],
            ..self.clone()
        }
    }

    pub fn with_drift(&self, drift: DriftCondition) -> Self {
        Self { drift, ..self.clone() }
    }

    /// `λ_j(x)`.
    pub fn loading(&self, j: usize, x: f64) -> f64 {
        let poly = self.loadings[j].iter().rev().fold(0.0, |acc, &a| acc * x + a);
        poly * (-self.beta * x).exp()
    }

    /// `λ_j` sampled on `nodes` grid points of the given spacing.
    pub fn loading_on_grid(&self, j: usize, spacing: f64, nodes: usize) -> Vec<f64> {
        (0..nodes).map(|k| self.loading(j, k as f64 * spacing)).collect()
    }

    /// `sup_x |λ_j(x)|`, approximated on a fine grid over the decay range.
    pub fn loading_sup(&self, j: usize) -> f64 {
        let horizon = 60.0 / self.beta;
        (0..=60_000).map(|k| self.loading(j, k as f64 * horizon / 60_000.0).abs()).fold(0.0, f64::max)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Value of a vector field on the state space `(h, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldValue {
    /// Curve component at the grid nodes of the state.
    pub curve: Vec<f64>,
    pub v: f64,
}

fn benchmark_yield(spec: &VolSpec, j: usize, curve: CurveView<'_>) -> Result<f64> {
    let t = spec.benchmarks[j];
    if t > curve.x_max() * (1.0 + 1e-12) {
        return Err(domain(format!(
            "benchmark maturity {t} beyond curve range {}",
            curve.x_max()
        )));
    }
    curve.integrate(0.0, t)
}

/// `g_j(h, v) = tanh(c_j e^v ∫_0^{t_j} h)`.
pub fn g_scalar(spec: &VolSpec, j: usize, state: &ModelState) -> Result<f64> {
    let y = benchmark_yield(spec, j, state.curve.view())?;
    Ok((spec.scales[j] * state.v.exp() * y).tanh())
}

/// `σ_j(h, v)` at the nodes of the state's grid.
pub fn sigma(spec: &VolSpec, j: usize, state: &ModelState) -> Result<Vec<f64>> {
    let g = g_scalar(spec, j, state)?;
    let c = &state.curve;
    Ok(spec.loading_on_grid(j, c.spacing(), c.len()).into_iter().map(|l| g * l).collect())
}

/// Running trapezoid integral `∫_0^{x_k} f` of node values.
fn cumulative(values: &[f64], spacing: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * spacing * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// No-arbitrage drift `Σ_j σ_j(x) ∫_0^x σ_j(ξ) dξ` at the nodes.
pub fn hjm_drift(spec: &VolSpec, state: &ModelState) -> Result<Vec<f64>> {
    let n = state.curve.len();
    let mut drift = vec![0.0; n];
    for j in 0..spec.factors() {
        let s = sigma(spec, j, state)?;
        let cum = cumulative(&s, state.curve.spacing());
        for ((d, sk), ck) in drift.iter_mut().zip(&s).zip(&cum) {
            *d += sk * ck;
        }
    }
    Ok(drift)
}

/// `½ Σ_j DV_j(V_j)` restricted to the curve component, computed analytically.
///
/// `Dσ_j(h, v)[(σ_j, γ_j)] = c_j e^v sech²(a_j) (∫_0^{t_j} σ_j + γ_j ∫_0^{t_j} h) λ_j`
/// where `a_j = c_j e^v ∫_0^{t_j} h`.
pub fn stratonovich_correction(spec: &VolSpec, state: &ModelState) -> Result<Vec<f64>> {
    let c = &state.curve;
    let mut out = vec![0.0; c.len()];
    let ev = state.v.exp();
    for j in 0..spec.factors() {
        let y = benchmark_yield(spec, j, c.view())?;
        let arg = spec.scales[j] * ev * y;
        let g = arg.tanh();
        let lambda = spec.loading_on_grid(j, c.spacing(), c.len());
        let sigma_yield = g * CurveView::new(c.spacing(), &lambda).integrate(0.0, spec.benchmarks[j])?;
        let sech2 = 1.0 - g * g;
        let coef = 0.5 * spec.scales[j] * ev * sech2 * (sigma_yield + spec.gamma[j] * y);
        for (o, l) in out.iter_mut().zip(&lambda) {
            *o += coef * l;
        }
    }
    Ok(out)
}

/// Stratonovich drift `V_0 = α_HJM - ½ Σ_j Dσ_j(σ_j)`; the volatility
/// component is zero because `γ_j` is constant and `-αv` belongs to the
/// shift/decay split.
pub fn stratonovich_drift(spec: &VolSpec, state: &ModelState) -> Result<VectorFieldValue> {
    let sign = spec.drift.sign();
    let drift = hjm_drift(spec, state)?;
    let corr = stratonovich_correction(spec, state)?;
    Ok(VectorFieldValue {
        curve: drift.iter().zip(&corr).map(|(a, b)| sign * a - b).collect(),
        v: 0.0,
    })
}

/// Diffusion field `V_j = (σ_j, γ_j)`.
pub fn diffusion_field(spec: &VolSpec, j: usize, state: &ModelState) -> Result<VectorFieldValue> {
    Ok(VectorFieldValue { curve: sigma(spec, j, state)?, v: spec.gamma[j] })
}
