//! Path simulator working in the space of benchmark yields.
//!
//! Every vector field is a combination of `2d` fixed node profiles, the
//! loadings `λ_j` and the drift shapes `λ_j ∫_0^x λ_j`, with coefficients
//! that depend on the state only through `v` and the yields
//! `I_i = ∫_0^{t_i} h`. Since `I_i` is linear in the node values, a
//! Runge-Kutta step on the full curve is reproduced exactly by a
//! Runge-Kutta step on `(I, v)` plus one accumulated update of the nodes.
//! Node updates are deferred until the next shift, and the shift itself is
//! an offset into a buffer that is longer than the curve.

use rayon::prelude::*;

use crate::curve::{node_count, CurveView, ForwardCurve, ModelState};
use crate::error::{config, Result};
use crate::model::VolSpec;
use crate::qmc::{DimensionBudget, IncrementBuilder, Sampler};

use super::{Scheme, SimConfig};

const CHUNK: usize = 64;

/// Identifies one chain of a path and its weight in the expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub index: usize,
    pub weight: f64,
}

/// Borrowed state handed to path observers.
#[derive(Debug, Clone, Copy)]
pub struct StateView<'a> {
    pub curve: CurveView<'a>,
    pub v: f64,
    pub z: f64,
}

impl StateView<'_> {
    pub fn to_state(&self) -> ModelState {
        ModelState {
            curve: ForwardCurve::new(self.curve.spacing(), self.curve.values().to_vec())
                .expect("simulated curve is finite"),
            v: self.v,
            z: self.z,
        }
    }
}

/// Scratch memory for one path; reuse it across paths on the same thread.
#[derive(Debug, Clone)]
pub struct PathWorkspace {
    buf: Vec<f64>,
    offset: usize,
    v: f64,
    z: f64,
    yields: Vec<f64>,
    pending: Vec<f64>,
    increments: Vec<f64>,
    bridge: Vec<f64>,
    stage: Vec<f64>,
    base: Vec<f64>,
    total: Vec<f64>,
    coef: [Vec<f64>; 4],
}

/// Simulator for one model, time mesh, scheme and initial state.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: VolSpec,
    scheme: Scheme,
    randomized_swss: bool,
    budget: DimensionBudget,
    increments: IncrementBuilder,
    dt: f64,
    spacing: f64,
    decay: f64,
    nodes: usize,
    initial: Vec<f64>,
    initial_yields: Vec<f64>,
    v0: f64,
    z0: f64,
    /// `2d` profiles of `nodes` values: loadings first, then drift shapes.
    profiles: Vec<f64>,
    /// `moments[i * 2d + p] = ∫_0^{t_i} profile_p`.
    moments: Vec<f64>,
}

impl Simulator {
    /// Prepares a simulator whose curve grid covers
    /// `max(horizon + max_maturity, max_j t_j)`.
    ///
    /// `max_maturity` is the longest maturity any observer will read off
    /// the simulated curves. The initial curve is resampled onto the grid.
    pub fn new(spec: &VolSpec, config: &SimConfig, initial: &ModelState, max_maturity: f64) -> Result<Self> {
        spec.validate()?;
        let steps = config.steps()?;
        if config.randomized_swss && config.scheme != Scheme::Swss {
            return Err(config_err("randomized ordering only applies to SWSS"));
        }
        let d = spec.factors();
        let spacing = config.grid_spacing();
        let x_max = (config.horizon + max_maturity).max(spec.max_benchmark());
        let nodes = node_count(spacing, x_max);
        let curve = initial.curve.resample(spacing, (nodes - 1) as f64 * spacing)?;

        let mut profiles = vec![0.0; 2 * d * nodes];
        for j in 0..d {
            let lam = spec.loading_on_grid(j, spacing, nodes);
            let mut cum = 0.0;
            for k in 0..nodes {
                if k > 0 {
                    cum += 0.5 * spacing * (lam[k - 1] + lam[k]);
                }
                profiles[(d + j) * nodes + k] = lam[k] * cum;
            }
            profiles[j * nodes..(j + 1) * nodes].copy_from_slice(&lam);
        }
        let mut moments = vec![0.0; d * 2 * d];
        for i in 0..d {
            for p in 0..2 * d {
                let view = CurveView::new(spacing, &profiles[p * nodes..(p + 1) * nodes]);
                moments[i * 2 * d + p] = view.integrate(0.0, spec.benchmarks[i])?;
            }
        }
        let view = curve.view();
        let initial_yields = spec
            .benchmarks
            .iter()
            .map(|&t| view.integrate(0.0, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            scheme: config.scheme,
            randomized_swss: config.randomized_swss,
            budget: DimensionBudget::new(config.scheme, steps, d, config.randomized_swss),
            increments: config.increment_builder(d)?,
            dt: config.dt(),
            spacing,
            decay: (-spec.ou_alpha * spacing).exp(),
            nodes,
            initial: curve.values().to_vec(),
            initial_yields,
            v0: initial.v,
            z0: initial.z,
            profiles,
            moments,
        })
    }

    pub fn spec(&self) -> &VolSpec {
        &self.spec
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn steps(&self) -> usize {
        self.budget.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn budget(&self) -> DimensionBudget {
        self.budget
    }

    /// Uniforms consumed per path.
    pub fn dimension(&self) -> usize {
        self.budget.dimension
    }

    pub fn grid_spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Initial state on the simulation grid.
    pub fn initial_state(&self) -> ModelState {
        ModelState {
            curve: ForwardCurve::new(self.spacing, self.initial.clone()).expect("validated curve"),
            v: self.v0,
            z: self.z0,
        }
    }

    /// Step index at which time `t` is reached, if `t` lies on the mesh.
    pub fn step_at(&self, t: f64) -> Option<usize> {
        crate::curve::aligned_cells(t, self.dt).filter(|&s| s <= self.steps())
    }

    pub fn workspace(&self) -> PathWorkspace {
        let d = self.spec.factors();
        let cells = self.steps() * self.scheme.cells_per_step();
        PathWorkspace {
            buf: vec![0.0; self.nodes + cells],
            offset: 0,
            v: 0.0,
            z: 0.0,
            yields: vec![0.0; d],
            pending: vec![0.0; 2 * d],
            increments: vec![0.0; self.budget.gaussian_dims()],
            bridge: vec![0.0; self.steps() + 1],
            stage: vec![0.0; d],
            base: vec![0.0; d],
            total: vec![0.0; 2 * d],
            coef: std::array::from_fn(|_| vec![0.0; 2 * d]),
        }
    }

    fn reset(&self, ws: &mut PathWorkspace) {
        ws.buf[..self.nodes].copy_from_slice(&self.initial);
        ws.offset = 0;
        ws.v = self.v0;
        ws.z = self.z0;
        ws.yields.copy_from_slice(&self.initial_yields);
        ws.pending.fill(0.0);
    }

    fn view<'a>(&self, ws: &'a PathWorkspace) -> StateView<'a> {
        StateView {
            curve: CurveView::new(self.spacing, &ws.buf[ws.offset..ws.offset + self.nodes]),
            v: ws.v,
            z: ws.z,
        }
    }

    /// Applies the deferred profile combination to the node values.
    fn flush(&self, ws: &mut PathWorkspace) {
        let n = self.nodes;
        let window = &mut ws.buf[ws.offset..ws.offset + n];
        let pending = &mut ws.pending;
        // Profiles are applied two at a time to halve the passes over the curve.
        let mut p = 0;
        while p < pending.len() {
            let (a, b) = (pending[p], pending.get(p + 1).copied().unwrap_or(0.0));
            if a != 0.0 || b != 0.0 {
                let qa = &self.profiles[p * n..(p + 1) * n];
                if b != 0.0 {
                    let qb = &self.profiles[(p + 1) * n..(p + 2) * n];
                    for ((h, x), y) in window.iter_mut().zip(qa).zip(qb) {
                        *h += a * x + b * y;
                    }
                } else {
                    for (h, x) in window.iter_mut().zip(qa) {
                        *h += a * x;
                    }
                }
            }
            p += 2;
        }
        pending.fill(0.0);
    }

    /// Exact shift/decay flow over one grid cell.
    fn shift(&self, ws: &mut PathWorkspace) {
        self.flush(ws);
        let n = self.nodes;
        let h = self.spacing;
        let last = ws.buf[ws.offset + n - 1];
        ws.buf[ws.offset + n] = last;
        let ext = CurveView::new(h, &ws.buf[ws.offset..ws.offset + n + 1]);
        let dz = ext.integrate_unchecked(0.0, h);
        for (y, &t) in ws.yields.iter_mut().zip(&self.spec.benchmarks) {
            *y += ext.integrate_unchecked(t, t + h) - dz;
        }
        ws.z += dz;
        ws.v *= self.decay;
        ws.offset += 1;
    }

    /// Drift coefficients per profile at yields `y` (volatility state `v`).
    fn drift_coefficients(&self, y: &[f64], v: f64, out: &mut [f64]) {
        let d = self.spec.factors();
        let sign = self.spec.drift.sign();
        let ev = v.exp();
        for j in 0..d {
            let c = self.spec.scales[j];
            let g = (c * ev * y[j]).tanh();
            let sigma_yield = g * self.moments[j * 2 * d + j];
            out[j] = -0.5 * c * ev * (1.0 - g * g) * (sigma_yield + self.spec.gamma[j] * y[j]);
            out[d + j] = sign * g * g;
        }
    }

    fn apply_moments(&self, base: &[f64], coef: &[f64], scale: f64, out: &mut [f64]) {
        let m = coef.len();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.moments[i * m..(i + 1) * m];
            *o = base[i] + scale * row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn drift_flow(&self, ws: &mut PathWorkspace, dt: f64) {
        let PathWorkspace { yields, stage, coef, pending, v, base, total, .. } = ws;
        let v = *v;
        self.drift_coefficients(yields, v, &mut coef[0]);
        self.apply_moments(yields, &coef[0], 0.5 * dt, stage);
        self.drift_coefficients(stage, v, &mut coef[1]);
        self.apply_moments(yields, &coef[1], 0.5 * dt, stage);
        self.drift_coefficients(stage, v, &mut coef[2]);
        self.apply_moments(yields, &coef[2], dt, stage);
        self.drift_coefficients(stage, v, &mut coef[3]);
        for p in 0..pending.len() {
            total[p] = dt / 6.0 * (coef[0][p] + 2.0 * coef[1][p] + 2.0 * coef[2][p] + coef[3][p]);
            pending[p] += total[p];
        }
        base.copy_from_slice(yields);
        self.apply_moments(base, total, 1.0, yields);
    }

    fn diffusion_flow(&self, ws: &mut PathWorkspace, j: usize, w: f64) {
        if w == 0.0 {
            return;
        }
        let d = self.spec.factors();
        let c = self.spec.scales[j];
        let gamma = self.spec.gamma[j];
        let col = |i: usize| self.moments[i * 2 * d + j];
        let g = |y: f64, v: f64| (c * v.exp() * y).tanh();
        let (y, v) = (ws.yields[j], ws.v);
        let m = col(j);
        let k1 = g(y, v);
        let k2 = g(y + 0.5 * w * k1 * m, v + 0.5 * w * gamma);
        let k3 = g(y + 0.5 * w * k2 * m, v + 0.5 * w * gamma);
        let k4 = g(y + w * k3 * m, v + w * gamma);
        let total = w / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        ws.pending[j] += total;
        for (i, yi) in ws.yields.iter_mut().enumerate() {
            *yi += total * col(i);
        }
        ws.v += w / 6.0 * (gamma + 2.0 * gamma + 2.0 * gamma + gamma);
    }

    fn euler(&self, ws: &mut PathWorkspace, s: usize) {
        let d = self.spec.factors();
        let sign = self.spec.drift.sign();
        let ev = ws.v.exp();
        let PathWorkspace { yields, pending, base, total, increments, v, .. } = ws;
        let dw = &increments[s * d..(s + 1) * d];
        for j in 0..d {
            let g = (self.spec.scales[j] * ev * yields[j]).tanh();
            total[d + j] = sign * g * g * self.dt;
            total[j] = g * dw[j];
        }
        for (p, t) in total.iter().enumerate() {
            pending[p] += t;
        }
        base.copy_from_slice(yields);
        self.apply_moments(base, total, 1.0, yields);
        for j in 0..d {
            *v += self.spec.gamma[j] * dw[j];
        }
    }

    fn forward_sweep(&self, ws: &mut PathWorkspace, s: usize) {
        let d = self.spec.factors();
        self.drift_flow(ws, self.dt);
        for j in 0..d {
            let w = ws.increments[s * d + j];
            self.diffusion_flow(ws, j, w);
        }
    }

    fn backward_sweep(&self, ws: &mut PathWorkspace, s: usize) {
        let d = self.spec.factors();
        for j in (0..d).rev() {
            let w = ws.increments[s * d + j];
            self.diffusion_flow(ws, j, w);
        }
        self.drift_flow(ws, self.dt);
    }

    fn step(&self, ws: &mut PathWorkspace, scheme: Scheme, s: usize, uniforms: &[f64]) {
        match scheme {
            Scheme::LieTrotterForward => {
                self.shift(ws);
                self.forward_sweep(ws, s);
            }
            Scheme::LieTrotterBackward => {
                self.backward_sweep(ws, s);
                self.shift(ws);
            }
            Scheme::NinomiyaVictoir => {
                self.shift(ws);
                if uniforms[self.budget.coin_index(s).expect("NV coin")] < 0.5 {
                    self.forward_sweep(ws, s);
                } else {
                    self.backward_sweep(ws, s);
                }
                self.shift(ws);
            }
            Scheme::EulerMaruyama => {
                self.euler(ws, s);
                self.shift(ws);
            }
            Scheme::Swss => unreachable!("SWSS runs two Lie-Trotter chains"),
        }
    }

    /// Chains making up one path of the configured scheme.
    fn chains(&self, uniforms: &[f64]) -> Vec<(Scheme, Branch)> {
        match self.scheme {
            Scheme::Swss if self.randomized_swss => {
                let forward = uniforms[self.budget.ordering_index().expect("randomized SWSS")] < 0.5;
                let s = if forward { Scheme::LieTrotterForward } else { Scheme::LieTrotterBackward };
                vec![(s, Branch { index: 0, weight: 1.0 })]
            }
            Scheme::Swss => vec![
                (Scheme::LieTrotterForward, Branch { index: 0, weight: 0.5 }),
                (Scheme::LieTrotterBackward, Branch { index: 1, weight: 0.5 }),
            ],
            s => vec![(s, Branch { index: 0, weight: 1.0 })],
        }
    }

    /// Simulates one path and calls `observe(branch, step, state)` after
    /// each step listed in `observe_at` (ascending; step 0 is the initial
    /// state). SWSS paths report both chains with weight ½ each.
    pub fn run_path<F>(&self, uniforms: &[f64], ws: &mut PathWorkspace, observe_at: &[usize], mut observe: F) -> Result<()>
    where
        F: FnMut(Branch, usize, StateView<'_>),
    {
        if uniforms.len() != self.dimension() {
            return Err(config_err(format!(
                "expected {} uniforms per path, got {}",
                self.dimension(),
                uniforms.len()
            )));
        }
        {
            let PathWorkspace { increments, bridge, .. } = ws;
            self.increments.build(uniforms, increments, bridge)?;
        }
        for (scheme, branch) in self.chains(uniforms) {
            self.reset(ws);
            let mut next = observe_at.iter().peekable();
            while next.peek() == Some(&&0) {
                observe(branch, 0, self.view(ws));
                next.next();
            }
            for s in 0..self.steps() {
                self.step(ws, scheme, s, uniforms);
                while next.peek() == Some(&&(s + 1)) {
                    self.flush(ws);
                    observe(branch, s + 1, self.view(ws));
                    next.next();
                }
            }
        }
        Ok(())
    }

    /// Weighted terminal states of one path.
    pub fn simulate_path(&self, uniforms: &[f64]) -> Result<Vec<(f64, ModelState)>> {
        let mut ws = self.workspace();
        let mut out = Vec::new();
        self.run_path(uniforms, &mut ws, &[self.steps()], |b, _, view| out.push((b.weight, view.to_state())))?;
        Ok(out)
    }

    /// Evaluates `per_path` on rows `0 .. paths` of `sampler`, in parallel,
    /// returning results in path order.
    pub fn map_paths<T, F>(&self, sampler: &Sampler, paths: usize, per_path: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64], &mut PathWorkspace) -> Result<T> + Sync,
    {
        let dim = self.dimension();
        if sampler.dim() != dim {
            return Err(config_err(format!("point set has dimension {}, scheme needs {dim}", sampler.dim())));
        }
        let chunks = paths.div_ceil(CHUNK);
        let nested = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let first = c * CHUNK;
                let count = CHUNK.min(paths - first);
                let mut rows = vec![0.0; count * dim];
                sampler.fill_rows(first, count, &mut rows);
                let mut ws = self.workspace();
                if dim == 0 {
                    return (0..count).map(|_| per_path(&[], &mut ws)).collect::<Result<Vec<T>>>();
                }
                rows.chunks_exact(dim).map(|u| per_path(u, &mut ws)).collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        Ok(nested.into_iter().flatten().collect())
    }
}

fn config_err(msg: impl Into<String>) -> crate::Error {
    config(msg)
}
