//! Piecewise-linear bounded-variation drivers with time adjoined as letter 0.
//!
//! Signatures are computed segment by segment: the signature of a straight
//! line is the truncated tensor exponential of its level-1 increment tensor,
//! and segments are stitched together with the concatenation product (Chen).
//! This is exact up to floating point for piecewise-linear paths. A separate
//! composite-midpoint quadrature oracle evaluates single iterated integrals
//! through an independent code path.

use crate::algebra::{MultiIndex, TruncatedTensor, WordBasis};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("breakpoints must be strictly increasing with at least one segment")]
    InvalidBreakpoints,
    #[error("value rows ({values}) must match breakpoints ({breakpoints})")]
    ValueCount { values: usize, breakpoints: usize },
    #[error("interval mismatch: first path ends at {left_end}, second starts at {right_start}")]
    IntervalMismatch { left_end: f64, right_start: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// A continuous piecewise-linear path on `[s, t]` with values in `ℝ^d`.
///
/// Only spatial coordinates are stored; coordinate 0 is implicitly the time
/// coordinate `W⁰_r = r`. Values are stored row-major: `values[k*d + i]` is
/// coordinate `i` at breakpoint `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearPath {
    d: usize,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearPath {
    pub fn new(d: usize, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PathError::InvalidBreakpoints);
        }
        if values.len() != breakpoints.len() * d {
            return Err(PathError::ValueCount {
                values: values.len() / d.max(1),
                breakpoints: breakpoints.len(),
            });
        }
        Ok(PiecewiseLinearPath {
            d,
            breakpoints,
            values,
        })
    }

    /// Scalar path from breakpoint values.
    pub fn scalar(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, PathError> {
        Self::new(1, breakpoints, values)
    }

    /// The constant-zero path on `[s, t]` (only time moves).
    pub fn zero(d: usize, s: f64, t: f64) -> Self {
        Self::new(d, vec![s, t], vec![0.0; 2 * d]).expect("valid interval")
    }

    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Coordinate `i` of the value at breakpoint `k`.
    pub fn value(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.d + i]
    }

    /// Path value at time `r` (linear interpolation; clamped to the interval).
    pub fn eval(&self, r: f64, i: usize) -> f64 {
        let k = match self
            .breakpoints
            .binary_search_by(|b| b.partial_cmp(&r).unwrap())
        {
            Ok(k) => return self.value(k.min(self.segment_count()), i),
            Err(0) => 0,
            Err(k) => (k - 1).min(self.segment_count() - 1),
        };
        let (r0, r1) = (self.breakpoints[k], self.breakpoints[k + 1]);
        let theta = ((r - r0) / (r1 - r0)).clamp(0.0, 1.0);
        self.value(k, i) + theta * (self.value(k + 1, i) - self.value(k, i))
    }

    /// Slope of coordinate `i` on segment `k`.
    pub fn slope(&self, k: usize, i: usize) -> f64 {
        (self.value(k + 1, i) - self.value(k, i)) / (self.breakpoints[k + 1] - self.breakpoints[k])
    }

    /// Maximum over segments and spatial coordinates of `|slope|`.
    pub fn max_slope(&self) -> f64 {
        let mut best = 0.0f64;
        for k in 0..self.segment_count() {
            for i in 0..self.d {
                best = best.max(self.slope(k, i).abs());
            }
        }
        best
    }

    /// Multiply all spatial values by `lambda`.
    pub fn scale_values(&self, lambda: f64) -> Self {
        PiecewiseLinearPath {
            d: self.d,
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| lambda * v).collect(),
        }
    }

    /// Truncated signature `S^m` with time adjoined as letter 0: the product
    /// over segments of the tensor exponential of the level-1 increment.
    pub fn signature(&self, m: usize) -> TruncatedTensor {
        let basis = WordBasis::get(self.d, m);
        let mut sig = TruncatedTensor::unit(self.d, m);
        let mut increments = vec![0.0; self.d + 1];
        for k in 0..self.segment_count() {
            increments[0] = self.breakpoints[k + 1] - self.breakpoints[k];
            for i in 0..self.d {
                increments[i + 1] = self.value(k + 1, i) - self.value(k, i);
            }
            let seg = segment_exponential(&basis, &increments);
            sig = sig.concat_product(&seg).expect("matching shapes");
        }
        sig
    }

    /// CSV with header `r,w1,…,wd` and one row per breakpoint.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        write!(out, "r")?;
        for i in 1..=self.d {
            write!(out, ",w{i}")?;
        }
        out.write_all(b"\n")?;
        for k in 0..self.breakpoints.len() {
            write!(out, "{}", self.breakpoints[k])?;
            for i in 0..self.d {
                write!(out, ",{}", self.value(k, i))?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `exp(Δ)` for the level-1 tensor with time increment in slot 0: the
/// coefficient at a word is the product of the per-letter increments divided
/// by the word length factorial.
fn segment_exponential(basis: &WordBasis, increments: &[f64]) -> TruncatedTensor {
    let mut t = TruncatedTensor::zeros(basis.dimension(), basis.order());
    let coeffs = t.coeffs_mut();
    for (idx, word) in basis.words().iter().enumerate() {
        let mut c = 1.0;
        for &letter in word.letters() {
            c *= increments[letter as usize];
        }
        let mut fact = 1.0;
        for j in 2..=word.len() {
            fact *= j as f64;
        }
        coeffs[idx] = c / fact;
    }
    t
}

/// Concatenate two paths: `q` is translated so its start value matches `p`'s
/// end value; the result lives on `[p.s, q.t]`.
pub fn concat_paths(
    p: &PiecewiseLinearPath,
    q: &PiecewiseLinearPath,
) -> Result<PiecewiseLinearPath, PathError> {
    if p.d != q.d {
        return Err(PathError::DimensionMismatch { left: p.d, right: q.d });
    }
    let (_, p_end) = p.interval();
    let (q_start, _) = q.interval();
    if (p_end - q_start).abs() > 1e-12 * p_end.abs().max(1.0) {
        return Err(PathError::IntervalMismatch {
            left_end: p_end,
            right_start: q_start,
        });
    }
    let mut breakpoints = p.breakpoints.clone();
    let mut values = p.values.clone();
    let offset: Vec<f64> = (0..p.d)
        .map(|i| p.value(p.breakpoints.len() - 1, i) - q.value(0, i))
        .collect();
    for k in 1..q.breakpoints.len() {
        breakpoints.push(q.breakpoints[k]);
        for (i, off) in offset.iter().enumerate() {
            values.push(q.value(k, i) + off);
        }
    }
    PiecewiseLinearPath::new(p.d, breakpoints, values)
}

/// Brute-force evaluation of the iterated integral `I^α_{s,t}[p]` by
/// composite-midpoint quadrature with `n_quad` cells per path segment and per
/// nesting level; converges to the corresponding signature coefficient as
/// `n_quad → ∞`. Kept independent of the tensor-exponential route.
pub fn iterated_integral_oracle(p: &PiecewiseLinearPath, alpha: &MultiIndex, n_quad: usize) -> f64 {
    assert!(n_quad >= 64, "oracle needs n_quad >= 64");
    if alpha.is_empty() {
        return 1.0;
    }
    // grid: every path segment subdivided into n_quad cells so integrand
    // kinks always sit on grid nodes
    let mut grid = Vec::with_capacity(p.segment_count() * n_quad + 1);
    for k in 0..p.segment_count() {
        let (a, b) = (p.breakpoints[k], p.breakpoints[k + 1]);
        for j in 0..n_quad {
            grid.push(a + (b - a) * (j as f64) / (n_quad as f64));
        }
    }
    grid.push(p.breakpoints[p.segment_count()]);

    // coordinate increment of letter `l` over a grid cell
    let coord_increment = |l: u8, a: f64, b: f64| -> f64 {
        if l == 0 {
            b - a
        } else {
            p.eval(b, l as usize - 1) - p.eval(a, l as usize - 1)
        }
    };

    // level_values[j] = I^{(α_1..α_level)}_{s, grid[j]}
    let mut level_values = vec![1.0; grid.len()];
    for &letter in alpha.letters() {
        let mut next = vec![0.0; grid.len()];
        let mut acc = crate::numerics::CompensatedSum::new();
        for j in 1..grid.len() {
            let (a, b) = (grid[j - 1], grid[j]);
            let mid = 0.5 * (level_values[j - 1] + level_values[j]);
            acc.add(mid * coord_increment(letter, a, b));
            next[j] = acc.value();
        }
        level_values = next;
    }
    *level_values.last().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::enumerate_words;
    use crate::numerics::counter_uniform;

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|j| j as f64).product()
    }

    fn random_scalar_path(seed: u64, segments: usize, s: f64, t: f64) -> PiecewiseLinearPath {
        let mut breakpoints = vec![s];
        for k in 1..segments {
            breakpoints.push(s + (t - s) * k as f64 / segments as f64);
        }
        breakpoints.push(t);
        let values = (0..=segments)
            .map(|k| 2.0 * counter_uniform(seed, k as u64, 1) - 1.0)
            .collect();
        PiecewiseLinearPath::scalar(breakpoints, values).unwrap()
    }

    #[test]
    fn constant_path_signature_only_time_moves() {
        let p = PiecewiseLinearPath::scalar(vec![0.0, 0.4, 1.0], vec![0.7, 0.7, 0.7]).unwrap();
        let sig = p.signature(3);
        for w in enumerate_words(1, 3) {
            let c = sig.get(&w).unwrap();
            if w.letters().iter().all(|&l| l == 0) {
                let k = w.len();
                assert!((c - 1.0 / factorial(k)).abs() <= 1e-15, "word {w}: {c}");
            } else {
                assert_eq!(c, 0.0, "word {w} should vanish");
            }
        }
    }

    #[test]
    fn straight_line_signature_closed_form() {
        let c = -1.3;
        let p = PiecewiseLinearPath::scalar(vec![0.0, 1.0], vec![0.0, c]).unwrap();
        let sig = p.signature(4);
        for k in 1..=4 {
            let w = MultiIndex(vec![1; k]);
            assert!(
                (sig.get(&w).unwrap() - c.powi(k as i32) / factorial(k)).abs() <= 1e-15,
                "all-ones word of length {k}"
            );
        }
        assert!((sig.get(&MultiIndex(vec![0, 1])).unwrap() - c / 2.0).abs() <= 1e-15);
        assert!((sig.get(&MultiIndex(vec![1, 0])).unwrap() - c / 2.0).abs() <= 1e-15);
    }

    #[test]
    fn time_consistency_all_zero_words() {
        let p = random_scalar_path(17, 4, 0.3, 1.7);
        let sig = p.signature(5);
        let tau = 1.7 - 0.3;
        assert!((sig.get(&MultiIndex(vec![0])).unwrap() - tau).abs() <= 1e-12);
        assert!((sig.get(&MultiIndex(vec![0, 0])).unwrap() - tau * tau / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn chen_identity_200_random_pairs() {
        for case in 0..200u64 {
            let p = random_scalar_path(2 * case, 1 + (case % 4) as usize, 0.0, 0.6);
            let q = random_scalar_path(2 * case + 1, 1 + (case % 3) as usize, 0.6, 1.4);
            let joined = concat_paths(&p, &q).unwrap();
            let lhs = joined.signature(4);
            let rhs = p.signature(4).concat_product(&q.signature(4)).unwrap();
            assert!(
                lhs.distance(&rhs).unwrap() <= 1e-10,
                "Chen identity failed at case {case}"
            );
        }
    }

    #[test]
    fn concat_flat_extension_and_segment_count() {
        let p = random_scalar_path(5, 3, 0.0, 1.0);
        let flat = PiecewiseLinearPath::scalar(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        let joined = concat_paths(&p, &flat).unwrap();
        assert_eq!(joined.segment_count(), p.segment_count() + 1);
        let end = p.value(p.breakpoints().len() - 1, 0);
        assert_eq!(joined.value(joined.breakpoints().len() - 1, 0), end);
        let mismatched = PiecewiseLinearPath::scalar(vec![1.5, 2.0], vec![0.0, 0.0]).unwrap();
        assert!(concat_paths(&p, &mismatched).is_err());
    }

    #[test]
    fn oracle_trivial_cases() {
        let p = random_scalar_path(23, 3, 0.0, 1.0);
        assert_eq!(iterated_integral_oracle(&p, &MultiIndex::empty(), 64), 1.0);
        let v = iterated_integral_oracle(&p, &MultiIndex(vec![0, 0]), 256);
        assert!((v - 0.5).abs() <= 1e-6, "I^(0,0) on [0,1]: {v}");
    }

    #[test]
    fn oracle_agrees_with_signature_to_degree_4() {
        let p = random_scalar_path(31, 3, 0.0, 1.0);
        let sig = p.signature(4);
        for w in enumerate_words(1, 4) {
            let oracle = iterated_integral_oracle(&p, &w, 4096);
            let exact = sig.get(&w).unwrap();
            assert!(
                (oracle - exact).abs() <= 1e-6,
                "word {w}: oracle {oracle} vs signature {exact}"
            );
        }
    }

    #[test]
    fn scaling_multiplies_by_lambda_pow_nonzero_letters() {
        let p = random_scalar_path(41, 3, 0.0, 1.0);
        let lambda = 1.7;
        let scaled = p.scale_values(lambda);
        let sig = p.signature(4);
        let sig_scaled = scaled.signature(4);
        for w in enumerate_words(1, 4) {
            let expect = sig.get(&w).unwrap() * lambda.powi(w.count_nonzero() as i32);
            assert!(
                (sig_scaled.get(&w).unwrap() - expect).abs() <= 1e-12,
                "word {w}"
            );
        }
    }

    #[test]
    fn max_slope_examples() {
        let flat = PiecewiseLinearPath::scalar(vec![0.0, 1.0], vec![0.3, 0.3]).unwrap();
        assert_eq!(flat.max_slope(), 0.0);
        let line = PiecewiseLinearPath::scalar(vec![0.0, 1.0], vec![0.0, -2.5]).unwrap();
        assert_eq!(line.max_slope(), 2.5);
    }

    #[test]
    fn csv_export_format() {
        let p = PiecewiseLinearPath::scalar(vec![0.0, 0.5, 1.0], vec![0.0, 1.5, -0.25]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "r,w1\n0,0\n0.5,1.5\n1,-0.25\n");
    }
}
