//! Richardson extrapolation for estimators with an `n^{-2}` expansion.

/// Combines estimates at `n` and `2n` steps: `(4 E_{2n} − E_n) / 3`,
/// evaluated as a correction to `E_{2n}` so equal inputs are a fixed point.
pub fn extrapolate(e_n: f64, e_2n: f64) -> f64 {
    e_2n + (e_2n - e_n) / 3.0
}

/// Repeated extrapolation of estimates at `n, 2n, 4n, …`.
///
/// Level `l` removes the `n^{-2l}` term, assuming the expansion proceeds
/// in even powers of `1/n`. Uses every supplied value; one value is
/// returned unchanged.
pub fn richardson_table(values: &[f64]) -> Option<f64> {
    let mut row = values.to_vec();
    let mut factor = 4.0;
    while row.len() > 1 {
        row = row.windows(2).map(|w| w[1] + (w[1] - w[0]) / (factor - 1.0)).collect();
        factor *= 4.0;
    }
    row.pop()
}
