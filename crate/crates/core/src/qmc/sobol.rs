//! Sobol' sequences from Joe-Kuo direction numbers.
//!
//! Points are produced in Gray-code order with 32-bit precision. The
//! direction-number file format is the one published by Joe and Kuo: a
//! header line followed by one line per dimension `d s a m_1 … m_s`, where
//! `s` is the degree of the primitive polynomial, `a` encodes its interior
//! coefficients and `m_i` are the initial direction integers. Dimension 1
//! (the van der Corput sequence) is implicit and never listed.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{config, Error, Result};

const BITS: usize = 32;
const EMBEDDED: &str = include_str!("../../data/new-joe-kuo-6.4096");

/// Environment variable naming a replacement direction-number file.
pub const DIRECTIONS_ENV: &str = "HJM_SOBOL_DIRECTIONS";

/// Direction integers `v_1 … v_32` for each dimension, left-aligned in a `u32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionNumbers {
    table: Vec<[u32; BITS]>,
}

impl DirectionNumbers {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = vec![van_der_corput()];
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let nums: std::result::Result<Vec<u64>, _> = fields.iter().map(|f| f.parse::<u64>()).collect();
            let nums = match nums {
                Ok(n) => n,
                // header line
                Err(_) if lineno == 0 => continue,
                Err(e) => return Err(Error::Parse(format!("direction numbers line {}: {e}", lineno + 1))),
            };
            if nums.len() < 3 {
                return Err(Error::Parse(format!("direction numbers line {}: too few fields", lineno + 1)));
            }
            let (dim, s, a) = (nums[0] as usize, nums[1] as usize, nums[2] as u32);
            if dim != table.len() + 1 {
                return Err(Error::Parse(format!(
                    "direction numbers line {}: expected dimension {}, found {dim}",
                    lineno + 1,
                    table.len() + 1
                )));
            }
            if s == 0 || s > BITS || nums.len() != 3 + s {
                return Err(Error::Parse(format!(
                    "direction numbers line {}: degree {s} does not match {} initial values",
                    lineno + 1,
                    nums.len() - 3
                )));
            }
            let m = &nums[3..];
            for (i, &mi) in m.iter().enumerate() {
                if mi % 2 == 0 || mi >= 1u64 << (i + 1) {
                    return Err(Error::Parse(format!(
                        "direction numbers line {}: m_{} = {mi} must be odd and below 2^{}",
                        lineno + 1,
                        i + 1,
                        i + 1
                    )));
                }
            }
            table.push(directions(s, a, m));
        }
        Ok(Self { table })
    }

    /// The bundled Joe-Kuo `new-joe-kuo-6` table (4096 dimensions).
    pub fn embedded() -> Arc<Self> {
        static TABLE: OnceLock<Arc<DirectionNumbers>> = OnceLock::new();
        TABLE
            .get_or_init(|| Arc::new(Self::parse(EMBEDDED).expect("embedded direction numbers are valid")))
            .clone()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Table named by [`DIRECTIONS_ENV`] if set, else the embedded one.
    pub fn from_env_or_embedded() -> Result<Arc<Self>> {
        match std::env::var_os(DIRECTIONS_ENV) {
            Some(path) => Ok(Arc::new(Self::from_file(path)?)),
            None => Ok(Self::embedded()),
        }
    }

    pub fn max_dimension(&self) -> usize {
        self.table.len()
    }
}

fn van_der_corput() -> [u32; BITS] {
    std::array::from_fn(|i| 1u32 << (BITS - 1 - i))
}

fn directions(s: usize, a: u32, m: &[u64]) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    for i in 0..s.min(BITS) {
        v[i] = (m[i] as u32) << (BITS - 1 - i);
    }
    for i in s..BITS {
        let mut x = v[i - s] ^ (v[i - s] >> s);
        for k in 1..s {
            if (a >> (s - 1 - k)) & 1 == 1 {
                x ^= v[i - k];
            }
        }
        v[i] = x;
    }
    v
}

/// A `dim`-dimensional Sobol' sequence. Point `index` is available directly,
/// so rows can be produced independently and in any order.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Arc<DirectionNumbers>,
    dim: usize,
}

impl Sobol {
    pub fn new(directions: Arc<DirectionNumbers>, dim: usize) -> Result<Self> {
        if dim > directions.max_dimension() {
            return Err(config(format!(
                "dimension {dim} exceeds the {} dimensions of the direction-number table",
                directions.max_dimension()
            )));
        }
        Ok(Self { directions, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Integer coordinates of point `index` (Gray-code order).
    pub fn point_raw(&self, index: u64, out: &mut [u32]) {
        assert!(index < 1u64 << BITS, "Sobol index beyond 2^32");
        let gray = index ^ (index >> 1);
        out[..self.dim].fill(0);
        let mut bits = gray;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            for (x, dir) in out[..self.dim].iter_mut().zip(&self.directions.table) {
                *x ^= dir[b];
            }
            bits &= bits - 1;
        }
    }

    /// Fills `out` (row-major, `count × dim`) with points `start, start+1, …`.
    pub fn fill(&self, start: u64, count: usize, out: &mut [f64]) {
        const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;
        let dim = self.dim;
        assert_eq!(out.len(), count * dim);
        if count == 0 || dim == 0 {
            return;
        }
        let mut x = vec![0u32; dim];
        self.point_raw(start, &mut x);
        for (row, chunk) in out.chunks_exact_mut(dim).enumerate() {
            if row > 0 {
                // Gray code: point i differs from i-1 by the direction at the
                // lowest zero bit of i-1.
                let prev = start + row as u64 - 1;
                let b = (!prev).trailing_zeros() as usize;
                for (xi, dir) in x.iter_mut().zip(&self.directions.table) {
                    *xi ^= dir[b];
                }
            }
            for (o, &xi) in chunk.iter_mut().zip(&x) {
                *o = xi as f64 * SCALE;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sobol(dim: usize) -> Sobol {
        Sobol::new(DirectionNumbers::embedded(), dim).unwrap()
    }

    fn points(dim: usize, start: u64, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim * count];
        sobol(dim).fill(start, count, &mut out);
        out
    }

    /// Radical inverse in base 2 of the Gray code of `i`, an independent
    /// construction of the first coordinate.
    fn gray_radical_inverse(i: u64) -> f64 {
        let mut g = i ^ (i >> 1);
        let (mut x, mut scale) = (0.0, 0.5);
        while g != 0 {
            if g & 1 == 1 {
                x += scale;
            }
            g >>= 1;
            scale *= 0.5;
        }
        x
    }

    #[test]
    fn first_dimension_is_gray_coded_van_der_corput() {
        assert_eq!(points(1, 1, 3), vec![0.5, 0.75, 0.25]);
        let p = points(1, 1, 4096);
        for (k, &x) in p.iter().enumerate() {
            assert_eq!(x, gray_radical_inverse(k as u64 + 1));
        }
    }

    #[test]
    fn point_one_is_all_halves() {
        assert!(points(4096, 1, 1).iter().all(|&x| x == 0.5));
    }

    // Reference values from an independent Sobol' implementation
    // (scipy.stats.qmc.Sobol, unscrambled, 32 bits).
    #[test]
    fn matches_reference_implementation() {
        let dims = [0usize, 1, 2, 9, 99, 500, 1110];
        let cases: [(u64, [f64; 7]); 5] = [
            (4, [0.375, 0.375, 0.625, 0.625, 0.875, 0.375, 0.875]),
            (5, [0.875, 0.875, 0.125, 0.125, 0.375, 0.875, 0.375]),
            (100, [0.4140625, 0.2578125, 0.7734375, 0.6953125, 0.8828125, 0.1796875, 0.4609375]),
            (1023, [0.0009765625, 0.7529296875, 0.6123046875, 0.8505859375, 0.5302734375, 0.3818359375, 0.5888671875]),
            (2048, [0.000732421875, 0.313720703125, 0.734130859375, 0.301513671875, 0.164306640625, 0.574462890625, 0.393798828125]),
        ];
        for (index, expected) in cases {
            let p = points(1111, index, 1);
            for (d, e) in dims.iter().zip(expected) {
                assert_eq!(p[*d], e, "point {index} dim {d}");
            }
        }
        let p = points(4096, 12345, 1);
        assert_eq!(
            [p[1500], p[2999], p[3998], p[4095]],
            [0.63128662109375, 0.37408447265625, 0.54998779296875, 0.62750244140625]
        );
    }

    #[test]
    fn sequential_fill_matches_direct_points() {
        let s = sobol(37);
        let seq = points(37, 1000, 300);
        let mut raw = vec![0u32; 37];
        for r in 0..300 {
            s.point_raw(1000 + r as u64, &mut raw);
            for d in 0..37 {
                assert_eq!(seq[r * 37 + d], raw[d] as f64 / 4294967296.0);
            }
        }
    }

    #[test]
    fn lower_dimensions_are_leading_columns() {
        let wide = points(50, 1, 64);
        let narrow = points(7, 1, 64);
        for r in 0..64 {
            assert_eq!(&wide[r * 50..r * 50 + 7], &narrow[r * 7..r * 7 + 7]);
        }
    }

    #[test]
    fn two_dimensional_blocks_are_nets() {
        // Every block of 2^m consecutive indices of a (0,2)-sequence is a
        // (0,m,2)-net: each elementary box of volume 2^-m holds one point.
        let m = 10u32;
        let n = 1usize << m;
        let p = points(2, n as u64, n);
        for k in 0..=m {
            let (cols, rows) = (1usize << k, 1usize << (m - k));
            let mut seen = vec![0u8; n];
            for pt in p.chunks_exact(2) {
                let i = (pt[0] * cols as f64) as usize;
                let j = (pt[1] * rows as f64) as usize;
                seen[i * rows + j] += 1;
            }
            assert!(seen.iter().all(|&c| c == 1), "box shape 2^-{k} x 2^-{}", m - k);
        }
    }

    #[test]
    fn rejects_too_many_dimensions() {
        assert!(matches!(Sobol::new(DirectionNumbers::embedded(), 4097), Err(Error::Config(_))));
    }

    #[test]
    fn parse_validates_lines() {
        let good = "d s a m_i\n2 1 0 1\n3 2 1 1 3\n";
        let t = DirectionNumbers::parse(good).unwrap();
        assert_eq!(t.max_dimension(), 3);
        assert_eq!(t.table[1], DirectionNumbers::embedded().table[1]);
        assert!(DirectionNumbers::parse("d s a m_i\n2 1 0 2\n").is_err());
        assert!(DirectionNumbers::parse("d s a m_i\n3 1 0 1\n").is_err());
        assert!(DirectionNumbers::parse("d s a m_i\n2 2 0 1\n").is_err());
    }
}
