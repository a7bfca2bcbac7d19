//! Split flows and scheme steps on full node vectors.
//!
//! These routines follow the definitions directly and serve as the
//! reference for the reduced-space [`Simulator`](super::Simulator).

use crate::curve::{shift_decay_flow, ForwardCurve, ModelState};
use crate::error::{config, Result};
use crate::model::{diffusion_field, hjm_drift, sigma, stratonovich_drift, VectorFieldValue, VolSpec};

use super::{Scheme, SimConfig};

fn displaced(state: &ModelState, field: &VectorFieldValue, scale: f64) -> ModelState {
    let values = state
        .curve
        .values()
        .iter()
        .zip(&field.curve)
        .map(|(h, f)| h + scale * f)
        .collect();
    ModelState {
        curve: ForwardCurve::new(state.curve.spacing(), values).expect("finite displacement"),
        v: state.v + scale * field.v,
        z: state.z,
    }
}

/// One classical Runge-Kutta step of `dy/ds = field(y)` over signed time `ds`.
fn rk4(
    state: &ModelState,
    ds: f64,
    field: impl Fn(&ModelState) -> Result<VectorFieldValue>,
) -> Result<ModelState> {
    if ds == 0.0 {
        return Ok(state.clone());
    }
    let k1 = field(state)?;
    let k2 = field(&displaced(state, &k1, 0.5 * ds))?;
    let k3 = field(&displaced(state, &k2, 0.5 * ds))?;
    let k4 = field(&displaced(state, &k3, ds))?;
    let combined = VectorFieldValue {
        curve: (0..k1.curve.len())
            .map(|k| k1.curve[k] + 2.0 * k2.curve[k] + 2.0 * k3.curve[k] + k4.curve[k])
            .collect(),
        v: k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v,
    };
    Ok(displaced(state, &combined, ds / 6.0))
}

/// Flow of the Stratonovich drift `V_0` over `dt`; `v` and `z` are untouched.
pub fn drift_flow(spec: &VolSpec, state: &ModelState, dt: f64) -> Result<ModelState> {
    rk4(state, dt, |s| stratonovich_drift(spec, s))
}

/// Flow of `V_j` evaluated at the stochastic time `w` (a Brownian increment).
pub fn diffusion_flow(spec: &VolSpec, j: usize, state: &ModelState, w: f64) -> Result<ModelState> {
    rk4(state, w, |s| diffusion_field(spec, j, s))
}

fn forward_sweep(spec: &VolSpec, mut s: ModelState, dt: f64, dw: &[f64]) -> Result<ModelState> {
    s = drift_flow(spec, &s, dt)?;
    for (j, &w) in dw.iter().enumerate() {
        s = diffusion_flow(spec, j, &s, w)?;
    }
    Ok(s)
}

fn backward_sweep(spec: &VolSpec, mut s: ModelState, dt: f64, dw: &[f64]) -> Result<ModelState> {
    for (j, &w) in dw.iter().enumerate().rev() {
        s = diffusion_flow(spec, j, &s, w)?;
    }
    drift_flow(spec, &s, dt)
}

/// One step of `scheme` driven by the Brownian increments `dw` (length `d`).
///
/// `aux` is the uniform selecting the inner ordering of Ninomiya-Victoir
/// (`< 0.5` forward) and must be given exactly for that scheme.
/// [`Scheme::Swss`] is not a single-chain step; use
/// [`Scheme::LieTrotterForward`] and [`Scheme::LieTrotterBackward`].
pub fn step(
    spec: &VolSpec,
    scheme: Scheme,
    dt: f64,
    state: &ModelState,
    dw: &[f64],
    aux: Option<f64>,
) -> Result<ModelState> {
    if dw.len() != spec.factors() {
        return Err(config(format!("expected {} increments, got {}", spec.factors(), dw.len())));
    }
    if aux.is_some() != (scheme == Scheme::NinomiyaVictoir) {
        return Err(config(format!("auxiliary uniform given/missing for scheme {scheme}")));
    }
    let alpha = spec.ou_alpha;
    match scheme {
        Scheme::LieTrotterForward => {
            let s = shift_decay_flow(state, dt, alpha)?;
            forward_sweep(spec, s, dt, dw)
        }
        Scheme::LieTrotterBackward => {
            let s = backward_sweep(spec, state.clone(), dt, dw)?;
            shift_decay_flow(&s, dt, alpha)
        }
        Scheme::NinomiyaVictoir => {
            let s = shift_decay_flow(state, 0.5 * dt, alpha)?;
            let s = if aux.unwrap() < 0.5 {
                forward_sweep(spec, s, dt, dw)?
            } else {
                backward_sweep(spec, s, dt, dw)?
            };
            shift_decay_flow(&s, 0.5 * dt, alpha)
        }
        Scheme::EulerMaruyama => {
            let sign = spec.drift.sign();
            let drift = hjm_drift(spec, state)?;
            let mut values: Vec<f64> = state
                .curve
                .values()
                .iter()
                .zip(&drift)
                .map(|(h, a)| h + sign * a * dt)
                .collect();
            let mut v = state.v;
            for (j, &w) in dw.iter().enumerate() {
                for (x, s) in values.iter_mut().zip(sigma(spec, j, state)?) {
                    *x += s * w;
                }
                v += spec.gamma[j] * w;
            }
            let moved = ModelState { curve: ForwardCurve::new(state.curve.spacing(), values)?, v, z: state.z };
            shift_decay_flow(&moved, dt, alpha)
        }
        Scheme::Swss => Err(config("SWSS is a two-chain scheme; step the Lie-Trotter chains instead")),
    }
}

/// Runs one path and returns the weighted terminal states.
///
/// `initial` must already live on the grid of `config`. For SWSS the two
/// Lie-Trotter chains share the increments and carry weight ½ each.
pub fn simulate_path(
    spec: &VolSpec,
    config: &SimConfig,
    initial: &ModelState,
    uniforms: &[f64],
) -> Result<Vec<(f64, ModelState)>> {
    let budget = config.budget(spec.factors())?;
    if uniforms.len() != budget.dimension {
        return Err(crate::error::config(format!(
            "expected {} uniforms per path, got {}",
            budget.dimension,
            uniforms.len()
        )));
    }
    if (initial.curve.spacing() - config.grid_spacing()).abs() > 1e-12 * config.grid_spacing() {
        return Err(crate::error::config("initial curve is not on the simulation grid"));
    }
    let dt = config.dt();
    let d = spec.factors();
    let mut dw = vec![0.0; budget.gaussian_dims()];
    config
        .increment_builder(d)?
        .build(uniforms, &mut dw, &mut vec![0.0; budget.steps + 1])?;
    let chain = |scheme: Scheme| -> Result<ModelState> {
        let mut state = initial.clone();
        for s in 0..budget.steps {
            let aux = budget.coin_index(s).map(|k| uniforms[k]);
            state = step(spec, scheme, dt, &state, &dw[s * d..(s + 1) * d], aux)?;
        }
        Ok(state)
    };
    match config.scheme {
        Scheme::Swss if config.randomized_swss => {
            let forward = uniforms[budget.ordering_index().expect("randomized SWSS")] < 0.5;
            let scheme = if forward { Scheme::LieTrotterForward } else { Scheme::LieTrotterBackward };
            Ok(vec![(1.0, chain(scheme)?)])
        }
        Scheme::Swss => Ok(vec![
            (0.5, chain(Scheme::LieTrotterForward)?),
            (0.5, chain(Scheme::LieTrotterBackward)?),
        ]),
        scheme => Ok(vec![(1.0, chain(scheme)?)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    fn demo_state(spacing: f64) -> ModelState {
        ModelState::new(demo::initial_curve(spacing, 12.0).unwrap(), 0.2)
    }

    fn max_diff(a: &ModelState, b: &ModelState) -> f64 {
        a.curve
            .values()
            .iter()
            .zip(b.curve.values())
            .map(|(x, y)| (x - y).abs())
            .fold((a.v - b.v).abs().max((a.z - b.z).abs()), f64::max)
    }

    #[test]
    fn zero_time_flows_are_identities() {
        let spec = demo::vol_spec();
        let s = demo_state(0.25);
        assert_eq!(drift_flow(&spec, &s, 0.0).unwrap(), s);
        assert_eq!(diffusion_flow(&spec, 1, &s, 0.0).unwrap(), s);
    }

    #[test]
    fn flows_vanish_on_zero_curve() {
        let mut spec = demo::vol_spec();
        let zero = ModelState::new(ForwardCurve::flat(0.25, 12.0, 0.0).unwrap(), 0.3);
        assert_eq!(drift_flow(&spec, &zero, 0.5).unwrap(), zero);
        spec.gamma[0] = 0.0;
        assert_eq!(diffusion_flow(&spec, 0, &zero, 0.7).unwrap(), zero);
    }

    #[test]
    fn drift_flow_self_convergence() {
        // Local error O(dt⁵): two half steps vs one step shrinks ~32x per halving.
        // The demo drift is nearly constant along its flow, so the
        // nonlinearity is magnified to lift the error above rounding.
        let s = demo_state(0.25);
        let mut strong = demo::vol_spec();
        strong.scales = vec![400.0, 100.0, 20.0];
        strong.loadings = vec![vec![0.06, 0.0, 0.0], vec![0.08, -0.03, 0.0], vec![0.0, 0.04, -0.005]];
        let gap = |dt: f64| {
            let one = drift_flow(&strong, &s, dt).unwrap();
            let half = drift_flow(&strong, &drift_flow(&strong, &s, dt / 2.0).unwrap(), dt / 2.0).unwrap();
            max_diff(&one, &half)
        };
        let (g1, g2, g3) = (gap(2.0), gap(1.0), gap(0.5));
        for ratio in [g1 / g2, g2 / g3] {
            assert!((14.0..40.0).contains(&ratio), "ratio {ratio} ({g1:e}, {g2:e}, {g3:e})");
        }
    }

    #[test]
    fn diffusion_flow_round_trip_error_is_high_order() {
        // Scale chosen so that tanh operates in its curved region.
        let mut spec = demo::vol_spec();
        spec.scales = vec![60.0, 10.0, 2.0];
        spec.loadings = vec![vec![0.06, 0.0, 0.0], vec![0.08, -0.03, 0.0], vec![0.0, 0.04, -0.005]];
        spec.gamma = vec![0.8, 0.8, 0.8];
        let s = demo_state(0.25);
        let err = |w: f64| {
            let there = diffusion_flow(&spec, 0, &s, w).unwrap();
            max_diff(&diffusion_flow(&spec, 0, &there, -w).unwrap(), &s)
        };
        let (e1, e2, e3) = (err(0.2), err(0.1), err(0.05));
        // Forward-then-backward cancels the leading local error terms, so the
        // round trip is at least as accurate as one step: ≥ 16x per halving.
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio >= 16.0, "ratio {ratio} ({e1:e}, {e2:e}, {e3:e})");
        }
    }

    #[test]
    fn noise_free_zero_curve_step_is_pure_shift() {
        let spec = demo::vol_spec();
        let zero = ModelState::new(ForwardCurve::flat(0.25, 12.0, 0.0).unwrap(), 0.5);
        for scheme in [Scheme::LieTrotterForward, Scheme::LieTrotterBackward, Scheme::EulerMaruyama] {
            let out = step(&spec, scheme, 0.25, &zero, &[0.0; 3], None).unwrap();
            assert_eq!(out, shift_decay_flow(&zero, 0.25, spec.ou_alpha).unwrap());
        }
    }

    #[test]
    fn lie_trotter_without_noise_is_shift_then_drift() {
        let mut spec = demo::vol_spec();
        spec.loadings.clear();
        spec.scales.clear();
        spec.benchmarks.clear();
        spec.gamma.clear();
        let s = demo_state(0.25);
        let out = step(&spec, Scheme::LieTrotterForward, 0.25, &s, &[], None).unwrap();
        let expected = drift_flow(&spec, &shift_decay_flow(&s, 0.25, spec.ou_alpha).unwrap(), 0.25).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn steps_are_direct_compositions() {
        let spec = demo::vol_spec();
        let s = demo_state(0.125);
        let dw = [0.1, -0.2, 0.05];
        let dt = 0.25;
        let a = spec.ou_alpha;

        let mut fwd = shift_decay_flow(&s, dt, a).unwrap();
        fwd = drift_flow(&spec, &fwd, dt).unwrap();
        for j in 0..3 {
            fwd = diffusion_flow(&spec, j, &fwd, dw[j]).unwrap();
        }
        assert_eq!(step(&spec, Scheme::LieTrotterForward, dt, &s, &dw, None).unwrap(), fwd);

        let mut bwd = s.clone();
        for j in (0..3).rev() {
            bwd = diffusion_flow(&spec, j, &bwd, dw[j]).unwrap();
        }
        bwd = shift_decay_flow(&drift_flow(&spec, &bwd, dt).unwrap(), dt, a).unwrap();
        assert_eq!(step(&spec, Scheme::LieTrotterBackward, dt, &s, &dw, None).unwrap(), bwd);

        let half = shift_decay_flow(&s, dt / 2.0, a).unwrap();
        let mut inner = drift_flow(&spec, &half, dt).unwrap();
        for j in 0..3 {
            inner = diffusion_flow(&spec, j, &inner, dw[j]).unwrap();
        }
        let nv_fwd = shift_decay_flow(&inner, dt / 2.0, a).unwrap();
        assert_eq!(step(&spec, Scheme::NinomiyaVictoir, dt, &s, &dw, Some(0.2)).unwrap(), nv_fwd);
        let nv_bwd = step(&spec, Scheme::NinomiyaVictoir, dt, &s, &dw, Some(0.7)).unwrap();
        assert_ne!(nv_bwd, nv_fwd);
    }

    #[test]
    fn step_validates_inputs() {
        let spec = demo::vol_spec();
        let s = demo_state(0.25);
        assert!(step(&spec, Scheme::LieTrotterForward, 0.25, &s, &[0.0; 2], None).is_err());
        assert!(step(&spec, Scheme::NinomiyaVictoir, 0.25, &s, &[0.0; 3], None).is_err());
        assert!(step(&spec, Scheme::LieTrotterForward, 0.25, &s, &[0.0; 3], Some(0.3)).is_err());
        assert!(step(&spec, Scheme::LieTrotterForward, 0.3, &s, &[0.0; 3], None).is_err());
    }
}
