//! Forward curves on a uniform maturity grid and the model state.
//!
//! A curve is the continuous piecewise affine interpolant of its node
//! values. Integrals are exact for that interpolant, which makes every
//! functional used by the model (benchmark yields, bond prices, the money
//! market increment) a fixed linear combination of node values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Relative tolerance used to snap maturities onto grid nodes.
const SNAP_TOL: f64 = 1e-9;

/// Number of nodes needed for a grid of spacing `spacing` covering `[0, x_max]`.
pub fn node_count(spacing: f64, x_max: f64) -> usize {
    let cells = x_max / spacing;
    let rounded = cells.round();
    let cells = if (cells - rounded).abs() <= SNAP_TOL * rounded.max(1.0) {
        rounded
    } else {
        cells.ceil()
    };
    (cells as usize).max(1) + 1
}

/// Number of grid cells spanned by `dt`, or `None` if `dt` is not a multiple
/// of `spacing`.
pub fn aligned_cells(dt: f64, spacing: f64) -> Option<usize> {
    let cells = dt / spacing;
    let rounded = cells.round();
    if rounded >= 0.0 && (cells - rounded).abs() <= SNAP_TOL * rounded.max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}

/// Borrowed view of node values on a uniform grid starting at maturity 0.
#[derive(Debug, Clone, Copy)]
pub struct CurveView<'a> {
    spacing: f64,
    values: &'a [f64],
}

impl<'a> CurveView<'a> {
    /// `values` must hold at least two nodes.
    pub fn new(spacing: f64, values: &'a [f64]) -> Self {
        debug_assert!(values.len() >= 2);
        Self { spacing, values }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &'a [f64] {
        self.values
    }

    pub fn x_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.spacing
    }

    fn check(&self, x: f64) -> Result<f64> {
        let x_max = self.x_max();
        let tol = SNAP_TOL * x_max.max(1.0);
        if !(x >= -tol && x <= x_max + tol) {
            return Err(domain(format!("maturity {x} outside curve range [0, {x_max}]")));
        }
        Ok(x.clamp(0.0, x_max))
    }

    /// Cell index and fractional position of `x`, snapping to nodes.
    fn locate(&self, x: f64) -> (usize, f64) {
        let last_cell = self.values.len() - 2;
        let pos = x / self.spacing;
        let node = pos.round();
        let pos = if (pos - node).abs() <= SNAP_TOL * node.max(1.0) {
            node
        } else {
            pos
        };
        let cell = (pos.floor() as usize).min(last_cell);
        (cell, pos - cell as f64)
    }

    fn at(&self, cell: usize, frac: f64) -> f64 {
        if frac == 0.0 {
            self.values[cell]
        } else if frac == 1.0 {
            self.values[cell + 1]
        } else {
            self.values[cell] + frac * (self.values[cell + 1] - self.values[cell])
        }
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let x = self.check(x)?;
        let (cell, frac) = self.locate(x);
        Ok(self.at(cell, frac))
    }

    /// Exact integral of the interpolant over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(domain(format!("reversed integration bounds [{a}, {b}]")));
        }
        let a = self.check(a)?;
        let b = self.check(b)?;
        Ok(self.integrate_unchecked(a, b))
    }

    pub(crate) fn integrate_unchecked(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (ca, fa) = self.locate(a);
        let (cb, fb) = self.locate(b);
        let v = self.values;
        let h = self.spacing;
        let ya = self.at(ca, fa);
        let yb = self.at(cb, fb);
        if ca == cb {
            return 0.5 * (fb - fa) * h * (ya + yb);
        }
        let mut total = 0.5 * (1.0 - fa) * h * (ya + v[ca + 1]);
        for k in ca + 1..cb {
            total += 0.5 * h * (v[k] + v[k + 1]);
        }
        total + 0.5 * fb * h * (v[cb] + yb)
    }
}

/// Forward rates (per year) at maturities `0, Δx, 2Δx, …, X_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurve {
    spacing: f64,
    values: Vec<f64>,
}

impl ForwardCurve {
    pub fn new(spacing: f64, values: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(domain(format!("grid spacing must be positive, got {spacing}")));
        }
        if values.len() < 2 {
            return Err(domain("a forward curve needs at least two nodes"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("non-finite rate at node {k}")));
        }
        Ok(Self { spacing, values })
    }

    /// Constant curve covering at least `[0, x_max]`.
    pub fn flat(spacing: f64, x_max: f64, rate: f64) -> Result<Self> {
        Self::new(spacing, vec![rate; node_count(spacing, x_max)])
    }

    /// Samples `f` at the nodes of a grid covering at least `[0, x_max]`.
    pub fn from_fn(spacing: f64, x_max: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = node_count(spacing, x_max);
        Self::new(spacing, (0..n).map(|k| f(k as f64 * spacing)).collect())
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x_max(&self) -> f64 {
        self.view().x_max()
    }

    pub fn view(&self) -> CurveView<'_> {
        CurveView::new(self.spacing, &self.values)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        self.view().evaluate(x)
    }

    pub fn integrate(&self, a: f64, b: f64) -> Result<f64> {
        self.view().integrate(a, b)
    }

    /// Re-grids the interpolant with a new spacing on `[0, x_max]`.
    ///
    /// When the spacing is unchanged the node values are copied verbatim.
    pub fn resample(&self, spacing: f64, x_max: f64) -> Result<Self> {
        let n = node_count(spacing, x_max);
        let needed = (n - 1) as f64 * spacing;
        if needed > self.x_max() * (1.0 + SNAP_TOL) + SNAP_TOL {
            return Err(domain(format!(
                "curve covers [0, {}] but [0, {needed}] is required",
                self.x_max()
            )));
        }
        if (spacing - self.spacing).abs() <= SNAP_TOL * self.spacing {
            return Self::new(self.spacing, self.values[..n].to_vec());
        }
        let view = self.view();
        let values = (0..n)
            .map(|k| view.evaluate((k as f64 * spacing).min(view.x_max())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spacing, values)
    }

    /// Reads a two-column CSV `maturity_years,rate` with a header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            maturity_years: f64,
            rate: f64,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let rows = rdr.deserialize::<Row>().collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.len() < 2 {
            return Err(Error::Parse("curve file needs at least two rows".into()));
        }
        if rows[0].maturity_years.abs() > SNAP_TOL {
            return Err(Error::Parse("curve must start at maturity 0".into()));
        }
        let spacing = rows[1].maturity_years - rows[0].maturity_years;
        for (k, row) in rows.iter().enumerate() {
            let expected = k as f64 * spacing;
            if (row.maturity_years - expected).abs() > 1e-6 * spacing.max(1.0) {
                return Err(Error::Parse(format!(
                    "non-uniform grid: row {} has maturity {} (expected {expected})",
                    k + 1,
                    row.maturity_years
                )));
            }
        }
        Self::new(spacing, rows.into_iter().map(|r| r.rate).collect())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            maturity_years: f64,
            rate: f64,
        }
        let mut w = csv::Writer::from_writer(writer);
        for (k, &rate) in self.values.iter().enumerate() {
            w.serialize(Row { maturity_years: k as f64 * self.spacing, rate })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Full SPDE state: forward curve, volatility factor and log bank account.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub curve: ForwardCurve,
    /// Ornstein-Uhlenbeck volatility state.
    pub v: f64,
    /// Log of the money market account.
    pub z: f64,
}

impl ModelState {
    /// State at time zero (`z = 0`).
    pub fn new(curve: ForwardCurve, v: f64) -> Self {
        Self { curve, v, z: 0.0 }
    }

    pub fn short_rate(&self) -> f64 {
        self.curve.values[0]
    }
}

/// Exact flow of `(h, v, z) ↦ (h', -αv, h(0))` over `dt`.
///
/// The curve is shifted left by `dt / Δx` nodes with the last node value
/// replicated at the long end, `v` decays exponentially and `z` gains the
/// integral of the short rate along the shift.
pub fn shift_decay_flow(state: &ModelState, dt: f64, ou_alpha: f64) -> Result<ModelState> {
    let spacing = state.curve.spacing;
    let cells = aligned_cells(dt, spacing).ok_or_else(|| {
        config(format!("step {dt} is not a multiple of the grid spacing {spacing}"))
    })?;
    if cells == 0 {
        return Ok(state.clone());
    }
    let old = &state.curve.values;
    let n = old.len();
    if cells >= n {
        return Err(domain(format!("shift of {dt} exceeds curve length {}", state.curve.x_max())));
    }
    let dz = state.curve.view().integrate_unchecked(0.0, cells as f64 * spacing);
    let values = (0..n).map(|k| old[(k + cells).min(n - 1)]).collect();
    Ok(ModelState {
        curve: ForwardCurve { spacing, values },
        v: state.v * (-ou_alpha * dt).exp(),
        z: state.z + dz,
    })
}

/// Weight `ψ(x) = cosh(β‖x‖)` built on the `H_i` norm of the state.
///
/// `‖(h, v)‖² = h(0)² + Σ_{m=1..i} ∫ (h^(m))² e^{α_i x} dx + v²`, with the
/// derivatives replaced by repeated forward differences of node values and
/// the integrals by the trapezoidal rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorm {
    pub order: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl WeightedNorm {
    pub fn new(order: usize, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(domain("weighted norm needs alpha > 0 and beta > 0"));
        }
        Ok(Self { order, alpha, beta })
    }

    pub fn norm_squared(&self, state: &ModelState) -> Result<f64> {
        let curve = &state.curve;
        if curve.len() < self.order + 2 {
            return Err(domain(format!(
                "order {} needs at least {} nodes, curve has {}",
                self.order,
                self.order + 2,
                curve.len()
            )));
        }
        let h = curve.spacing;
        let mut total = curve.values[0].powi(2) + state.v.powi(2);
        let mut diff = curve.values.clone();
        for _ in 0..self.order {
            diff = diff.windows(2).map(|w| (w[1] - w[0]) / h).collect();
            let weighted: Vec<f64> = diff
                .iter()
                .enumerate()
                .map(|(k, d)| d * d * (self.alpha * k as f64 * h).exp())
                .collect();
            total += weighted.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum::<f64>();
        }
        Ok(total)
    }

    pub fn norm(&self, state: &ModelState) -> Result<f64> {
        Ok(self.norm_squared(state)?.sqrt())
    }

    /// `cosh(β‖state‖)`, always at least one.
    pub fn weight(&self, state: &ModelState) -> Result<f64> {
        Ok((self.beta * self.norm(state)?).cosh())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_node(a: f64, b: f64) -> ForwardCurve {
        ForwardCurve::new(1.0, vec![a, b]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        let flat = ForwardCurve::flat(0.25, 3.0, 0.05).unwrap();
        assert_eq!(flat.evaluate(1.3).unwrap(), 0.05);
        let c = two_node(0.02, 0.04);
        assert_relative_eq!(c.evaluate(0.5).unwrap(), 0.03, epsilon = 1e-15);
        assert_eq!(c.evaluate(1.0).unwrap(), 0.04);
        assert!(matches!(c.evaluate(1.5), Err(Error::Domain(_))));
        assert!(matches!(c.evaluate(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn integrate_examples() {
        let flat = ForwardCurve::flat(0.5, 4.0, 0.05).unwrap();
        assert_relative_eq!(flat.integrate(0.0, 2.0).unwrap(), 0.1, epsilon = 1e-15);
        assert_eq!(flat.integrate(1.3, 1.3).unwrap(), 0.0);
        assert_relative_eq!(two_node(0.0, 1.0).integrate(0.0, 1.0).unwrap(), 0.5);
        assert!(matches!(flat.integrate(2.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(flat.integrate(0.0, 4.5), Err(Error::Domain(_))));
    }

    #[test]
    fn integrate_partial_cells_matches_quadratic_formula() {
        // h(x) = x on [0, 3]; ∫_a^b x dx = (b² - a²) / 2
        let c = ForwardCurve::from_fn(0.5, 3.0, |x| x).unwrap();
        for &(a, b) in &[(0.1, 0.2), (0.1, 2.7), (0.5, 2.5), (0.0, 3.0), (1.25, 1.75)] {
            assert_relative_eq!(c.integrate(a, b).unwrap(), 0.5 * (b * b - a * a), epsilon = 1e-14);
        }
    }

    #[test]
    fn shift_examples() {
        let s = ModelState::new(ForwardCurve::flat(0.5, 5.0, 0.05).unwrap(), 1.0);
        assert_eq!(shift_decay_flow(&s, 0.0, 0.5).unwrap(), s);

        let flat = ModelState::new(ForwardCurve::flat(1.0, 5.0, 0.05).unwrap(), 0.0);
        let out = shift_decay_flow(&flat, 1.0, 0.5).unwrap();
        assert_eq!(out.curve, flat.curve);
        assert_relative_eq!(out.z, 0.05, epsilon = 1e-15);

        let decay = ModelState::new(ForwardCurve::flat(1.0, 5.0, 0.0).unwrap(), 1.0);
        let out = shift_decay_flow(&decay, 2.0, 0.5).unwrap();
        assert_relative_eq!(out.v, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn shift_moves_nodes_and_extends_flat() {
        let c = ForwardCurve::new(0.5, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = shift_decay_flow(&ModelState::new(c, 0.0), 1.0, 0.0).unwrap();
        assert_eq!(out.curve.values(), &[3.0, 4.0, 4.0, 4.0]);
        assert_relative_eq!(out.z, 0.5 * 0.5 * (1.0 + 2.0) + 0.5 * 0.5 * (2.0 + 3.0));
    }

    #[test]
    fn shift_rejects_misaligned_step() {
        let s = ModelState::new(ForwardCurve::flat(0.5, 5.0, 0.05).unwrap(), 0.0);
        assert!(matches!(shift_decay_flow(&s, 0.3, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn weighted_norm_examples() {
        let zero = ModelState::new(ForwardCurve::flat(0.25, 2.0, 0.0).unwrap(), 0.0);
        let w0 = WeightedNorm::new(0, 0.1, 1.0).unwrap();
        assert_eq!(w0.weight(&zero).unwrap(), 1.0);

        let v_only = ModelState { v: 1.0, ..zero.clone() };
        assert_relative_eq!(w0.weight(&v_only).unwrap(), 1.0f64.cosh(), epsilon = 1e-15);

        let flat = ModelState::new(ForwardCurve::flat(0.25, 2.0, 0.3).unwrap(), 0.4);
        let w1 = WeightedNorm::new(1, 0.1, 1.0).unwrap();
        assert_relative_eq!(w1.norm_squared(&flat).unwrap(), 0.09 + 0.16, epsilon = 1e-15);
    }

    #[test]
    fn weighted_norm_derivative_term() {
        // h(x) = x on [0, 1]: first difference is 1 everywhere, so the
        // order-1 term is the trapezoid rule for ∫_0^{1-Δx} e^{αx} dx.
        let c = ForwardCurve::from_fn(0.01, 1.0, |x| x).unwrap();
        let state = ModelState::new(c, 0.0);
        let w = WeightedNorm::new(1, 0.5, 1.0).unwrap();
        let exact = ((0.5f64 * 0.99).exp() - 1.0) / 0.5;
        assert_relative_eq!(w.norm_squared(&state).unwrap(), exact, max_relative = 1e-4);
        let too_short = ModelState::new(two_node(0.0, 1.0), 0.0);
        assert!(WeightedNorm::new(1, 0.5, 1.0).unwrap().norm_squared(&too_short).is_err());
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let c = ForwardCurve::from_fn(0.25, 2.0, |x| 0.02 + 0.01 * x).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("maturity_years,rate\n"));
        assert_eq!(ForwardCurve::read_csv(&buf[..]).unwrap(), c);

        let bad = "maturity_years,rate\n0,0.01\n0.5,0.02\n1.2,0.03\n";
        assert!(matches!(ForwardCurve::read_csv(bad.as_bytes()), Err(Error::Parse(_))));
        let no_header = "0,0.01\n0.5,0.02\n1.0,0.03\n";
        assert!(ForwardCurve::read_csv(no_header.as_bytes()).is_err());
    }

    #[test]
    fn resample_preserves_interpolant() {
        let c = ForwardCurve::from_fn(0.5, 4.0, |x| (x - 1.0).powi(2)).unwrap();
        let fine = c.resample(0.125, 4.0).unwrap();
        for k in 0..fine.len() {
            let x = k as f64 * 0.125;
            assert_relative_eq!(fine.values()[k], c.evaluate(x).unwrap(), epsilon = 1e-14);
        }
        assert_eq!(c.resample(0.5, 3.0).unwrap().values(), &c.values()[..7]);
        assert!(c.resample(0.5, 5.0).is_err());
    }

    fn arb_curve() -> impl Strategy<Value = ForwardCurve> {
        prop::collection::vec(-0.1f64..0.2, 9..40)
            .prop_map(|v| ForwardCurve::new(0.25, v).unwrap())
    }

    proptest! {
        #[test]
        fn integrate_is_additive(c in arb_curve(), p in 0.0f64..1.0, q in 0.0f64..1.0, r in 0.0f64..1.0) {
            let mut xs = [p * c.x_max(), q * c.x_max(), r * c.x_max()];
            xs.sort_by(f64::total_cmp);
            let [a, b, d] = xs;
            let lhs = c.integrate(a, b).unwrap() + c.integrate(b, d).unwrap();
            let rhs = c.integrate(a, d).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-15 * (1.0 + rhs.abs()) * 8.0);
        }

        #[test]
        fn shift_is_a_semigroup(c in arb_curve(), m1 in 0usize..4, m2 in 0usize..4, v in -1.0f64..1.0) {
            let s = ModelState::new(c, v);
            let (dt1, dt2) = (m1 as f64 * 0.25, m2 as f64 * 0.25);
            let once = shift_decay_flow(&s, dt1 + dt2, 0.7).unwrap();
            let twice = shift_decay_flow(&shift_decay_flow(&s, dt1, 0.7).unwrap(), dt2, 0.7).unwrap();
            prop_assert_eq!(once.curve.values(), twice.curve.values());
            prop_assert!((once.v - twice.v).abs() <= 4.0 * f64::EPSILON);
            prop_assert!((once.z - twice.z).abs() <= 1e-15 * (1.0 + once.z.abs()) * 8.0);
        }

        #[test]
        fn shift_preserves_flat_curves(r in -0.05f64..0.1, m in 0usize..6) {
            let s = ModelState::new(ForwardCurve::flat(0.5, 5.0, r).unwrap(), 0.0);
            let out = shift_decay_flow(&s, m as f64 * 0.5, 1.0).unwrap();
            prop_assert_eq!(out.curve, s.curve);
        }

        #[test]
        fn weight_is_at_least_one_and_monotone_in_beta(c in arb_curve(), v in -2.0f64..2.0, b1 in 0.01f64..2.0, db in 0.0f64..2.0) {
            let s = ModelState::new(c, v);
            let lo = WeightedNorm::new(2, 0.3, b1).unwrap().weight(&s).unwrap();
            let hi = WeightedNorm::new(2, 0.3, b1 + db).unwrap().weight(&s).unwrap();
            prop_assert!(lo >= 1.0);
            prop_assert!(hi >= lo);
        }
    }
}
