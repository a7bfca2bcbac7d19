//! Black-76 caplet prices and implied volatilities.

use statrs::function::erf::erfc;

use crate::error::{domain, Result};

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn d1(forward: f64, strike: f64, total_vol: f64) -> f64 {
    ((forward / strike).ln() + 0.5 * total_vol * total_vol) / total_vol
}

/// `annuity · (F N(d1) − K N(d2))`; the intrinsic value when `vol · √T = 0`.
pub fn black76_price(forward: f64, strike: f64, vol: f64, expiry: f64, annuity: f64) -> f64 {
    let total = vol * expiry.sqrt();
    if total <= 0.0 || strike <= 0.0 {
        return annuity * (forward - strike).max(0.0);
    }
    let d1 = d1(forward, strike, total);
    annuity * (forward * norm_cdf(d1) - strike * norm_cdf(d1 - total))
}

/// Derivative of [`black76_price`] with respect to `vol`.
pub fn black76_vega(forward: f64, strike: f64, vol: f64, expiry: f64, annuity: f64) -> f64 {
    let total = vol * expiry.sqrt();
    if total <= 0.0 || strike <= 0.0 {
        return 0.0;
    }
    annuity * forward * norm_pdf(d1(forward, strike, total)) * expiry.sqrt()
}

/// Volatility reproducing `price` under Black-76.
///
/// Prices between the intrinsic value `annuity·(F−K)⁺` and the upper bound
/// `annuity·F` have a unique solution, found by Newton steps safeguarded by
/// bisection. Anything else is a domain error.
pub fn black_implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, annuity: f64) -> Result<f64> {
    if !(forward > 0.0 && strike > 0.0 && expiry > 0.0 && annuity > 0.0) || !price.is_finite() {
        return Err(domain(format!(
            "implied vol needs positive forward, strike, expiry and annuity (F={forward}, K={strike}, T={expiry}, A={annuity}) and a finite price {price}"
        )));
    }
    let intrinsic = annuity * (forward - strike).max(0.0);
    let upper = annuity * forward;
    let tol = 1e-14 * upper;
    if price < intrinsic - tol || price >= upper {
        return Err(domain(format!(
            "price {price} outside the Black-76 bounds [{intrinsic}, {upper}) for K={strike}, T={expiry}"
        )));
    }
    if price <= intrinsic + tol {
        return Ok(0.0);
    }
    let f = |s: f64| black76_price(forward, strike, s, expiry, annuity) - price;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(domain(format!("implied vol for price {price} exceeds {hi}")));
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fs = f(s);
        if fs == 0.0 {
            return Ok(s);
        }
        if fs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let vega = black76_vega(forward, strike, s, expiry, annuity);
        let newton = s - fs / vega;
        s = if vega > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (s - lo).min(hi - s) <= 0.0 {
            break;
        }
    }
    Ok(s)
}
