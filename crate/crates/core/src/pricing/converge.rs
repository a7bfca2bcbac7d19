//! Weak-error ladders: one payoff priced at increasing step counts against
//! a fine-mesh reference on the same point set.

use std::time::Instant;

use crate::curve::ModelState;
use crate::error::{config, Result};
use crate::model::VolSpec;
use crate::splitting::{extrapolate, Scheme, SimConfig};

use super::{price, Payoff};

/// One rung of a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    /// Scheme name, suffixed `+RE` for Richardson-extrapolated rows.
    pub scheme: String,
    /// Time steps to the payoff maturity.
    pub n: usize,
    pub paths: usize,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    pub seconds: f64,
}

/// Configuration with `n` steps to `maturity`, other settings from `base`.
pub fn config_for_steps(base: &SimConfig, scheme: Scheme, maturity: f64, n: usize) -> Result<SimConfig> {
    let per_year = n as f64 / maturity;
    let rounded = per_year.round();
    if rounded < 1.0 || (per_year - rounded).abs() > 1e-9 * rounded {
        return Err(config(format!("{n} steps do not divide maturity {maturity} into whole steps per year")));
    }
    Ok(SimConfig { horizon: maturity, steps_per_year: rounded as usize, scheme, extrapolation_levels: 0, ..base.clone() })
}

/// Price with `n` steps, timed.
pub fn timed_price(spec: &VolSpec, base: &SimConfig, initial: &ModelState, payoff: &Payoff, scheme: Scheme, n: usize) -> Result<(f64, f64)> {
    let cfg = config_for_steps(base, scheme, payoff.maturity, n)?;
    let clock = Instant::now();
    let value = price(spec, &cfg, initial, payoff)?.value;
    Ok((value, clock.elapsed().as_secs_f64()))
}

/// Prices `payoff` with `scheme` at each `n` in `ladder`.
pub fn ladder_rows(
    spec: &VolSpec,
    base: &SimConfig,
    initial: &ModelState,
    payoff: &Payoff,
    scheme: Scheme,
    ladder: &[usize],
    reference: f64,
) -> Result<Vec<ConvergenceRow>> {
    ladder
        .iter()
        .map(|&n| {
            let (estimate, seconds) = timed_price(spec, base, initial, payoff, scheme, n)?;
            Ok(ConvergenceRow {
                scheme: scheme.to_string(),
                n,
                paths: base.paths,
                estimate,
                reference,
                abs_error: (estimate - reference).abs(),
                seconds,
            })
        })
        .collect()
}

/// Richardson-combines consecutive rungs `(n, 2n)` of `rows` into a row at `n`.
pub fn extrapolated_rows(rows: &[ConvergenceRow]) -> Vec<ConvergenceRow> {
    rows.windows(2)
        .filter(|w| w[1].n == 2 * w[0].n)
        .map(|w| {
            let estimate = extrapolate(w[0].estimate, w[1].estimate);
            ConvergenceRow {
                scheme: format!("{}+RE", w[0].scheme),
                n: w[0].n,
                paths: w[0].paths,
                estimate,
                reference: w[0].reference,
                abs_error: (estimate - w[0].reference).abs(),
                seconds: w[0].seconds + w[1].seconds,
            }
        })
        .collect()
}

/// Least-squares slope `s` of `log e ≈ c − s log n`; `None` with fewer than
/// two points or a non-positive error.
pub fn fit_slope(ns: &[f64], errors: &[f64]) -> Option<f64> {
    if ns.len() < 2 || ns.len() != errors.len() || errors.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let x: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    Some(-sxy / sxx)
}

/// [`fit_slope`] over the rows of one scheme.
pub fn rows_slope(rows: &[ConvergenceRow]) -> Option<f64> {
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let es: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
    fit_slope(&ns, &es)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    #[test]
    fn slope_of_exact_power_laws() {
        let ns = [4.0, 8.0, 16.0, 32.0];
        for s in [0.5, 1.0, 2.0, 3.0] {
            let e: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-s)).collect();
            assert!((fit_slope(&ns, &e).unwrap() - s).abs() < 1e-12);
        }
        assert_eq!(fit_slope(&ns, &[1.0, 0.0, 1.0, 1.0]), None);
        assert_eq!(fit_slope(&[4.0], &[1.0]), None);
    }

    #[test]
    fn steps_must_fit_the_maturity() {
        let base = SimConfig::new(1.0, 1, Scheme::Swss, 8);
        assert_eq!(config_for_steps(&base, Scheme::Swss, 2.0, 16).unwrap().steps_per_year, 8);
        assert!(config_for_steps(&base, Scheme::Swss, 3.0, 16).is_err());
    }

    #[test]
    fn extrapolated_rows_pair_doubling_rungs() {
        let row = |n, e| ConvergenceRow {
            scheme: "SWSS".into(),
            n,
            paths: 1,
            estimate: e,
            reference: 1.0,
            abs_error: (e - 1.0f64).abs(),
            seconds: 0.5,
        };
        // E_n = 1 + 1/n²: the extrapolation is exact.
        let rows: Vec<_> = [4usize, 8, 16].iter().map(|&n| row(n, 1.0 + 1.0 / (n * n) as f64)).collect();
        let re = extrapolated_rows(&rows);
        assert_eq!(re.len(), 2);
        assert_eq!(re[0].scheme, "SWSS+RE");
        assert!(re.iter().all(|r| r.abs_error < 1e-15 && r.seconds == 1.0));
    }

    #[test]
    fn zero_volatility_ladder_is_exact() {
        let spec = demo::vol_spec().without_volatility();
        // Affine curves are represented exactly on every grid.
        let curve = crate::curve::ForwardCurve::from_fn(1.0 / 64.0, 12.0, |x| 0.02 + 0.004 * x).unwrap();
        let init = ModelState::new(curve, 0.0);
        let payoff = Payoff::zero_coupon_bond(1.0, 1.0).unwrap();
        let base = SimConfig::new(1.0, 1, Scheme::Swss, 16);
        let (reference, _) = timed_price(&spec, &base, &init, &payoff, Scheme::Swss, 64).unwrap();
        for scheme in Scheme::ALL {
            for r in ladder_rows(&spec, &base, &init, &payoff, scheme, &[4, 8, 16], reference).unwrap() {
                assert!(r.abs_error < 1e-13, "{scheme} n={} error {}", r.n, r.abs_error);
            }
        }
    }
}
