//! Chebyshev expansion of `exp(-i t H) v` for Hermitian `H`.
//!
//! The simulated device only ever needs `exp(-i t H) |v>`, never the full
//! propagator, so it goes through here instead of a dense eigendecomposition.
//! Dense propagators in `control` are computed independently via
//! [`crate::qcore::expm_hermitian`], which keeps the two routes checkable
//! against each other.
//!
//! With the spectrum of `H` inside `[c - r, c + r]` and `y = (H - c) / r`,
//! `exp(-i t H) = e^{-itc} (J_0(tr) + 2 Σ_k (-i)^k J_k(tr) T_k(y))`.

use num_complex::Complex64;

use crate::qcore::{ComplexMatrix, ComplexVector};

/// Terms whose Bessel weight falls below this (relative to `|v|`) are dropped.
const TAIL: f64 = 1e-17;

/// `exp(-i t h) v` for Hermitian `h`.
pub fn expv(h: &ComplexMatrix, t: f64, v: &ComplexVector) -> ComplexVector {
    if t == 0.0 || v.norm() == 0.0 {
        return v.clone();
    }
    let sparse = RowSparse::new(h);
    let (lo, hi) = sparse.gershgorin_bounds();
    let center = 0.5 * (lo + hi);
    let radius = 0.5 * (hi - lo);
    let phase = Complex64::from_polar(1.0, -t * center);
    let x = t * radius;
    if radius <= f64::EPSILON * lo.abs().max(hi.abs()) || x == 0.0 {
        return v * phase;
    }

    // J_k(-x) = (-1)^k J_k(x), so a negative time flips (-i)^k to i^k.
    let bessel = bessel_sequence(x.abs());
    let unit = if x > 0.0 { -Complex64::i() } else { Complex64::i() };
    let one = Complex64::new(1.0, 0.0);

    let mut out = v * Complex64::new(bessel[0], 0.0);
    let mut prev = v.clone();
    // T_1(y) v with y = (h - center) / radius.
    let mut cur = ComplexVector::zeros(v.len());
    sparse.chebyshev_step(&mut cur, v, None, center, radius);
    let mut weight = unit * 2.0;
    out.axpy(weight * bessel[1], &cur, one);
    let mut next = ComplexVector::zeros(v.len());
    for &j in &bessel[2..] {
        sparse.chebyshev_step(&mut next, &cur, Some(&prev), center, radius);
        weight *= unit;
        out.axpy(weight * j, &next, one);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out * phase
}

/// Nonzero entries of a matrix, row by row.
struct RowSparse {
    diagonal: Vec<f64>,
    starts: Vec<usize>,
    entries: Vec<(usize, Complex64)>,
}

impl RowSparse {
    fn new(h: &ComplexMatrix) -> Self {
        let dim = h.nrows();
        let mut starts = Vec::with_capacity(dim + 1);
        let mut entries = Vec::new();
        starts.push(0);
        for i in 0..dim {
            for j in 0..dim {
                let z = h[(i, j)];
                if i != j && (z.re != 0.0 || z.im != 0.0) {
                    entries.push((j, z));
                }
            }
            starts.push(entries.len());
        }
        RowSparse {
            diagonal: (0..dim).map(|i| h[(i, i)].re).collect(),
            starts,
            entries,
        }
    }

    /// Interval containing every eigenvalue of the Hermitian matrix.
    fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &d) in self.diagonal.iter().enumerate() {
            let radius: f64 = self.entries[self.starts[i]..self.starts[i + 1]].iter().map(|(_, z)| z.norm()).sum();
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        (lo, hi)
    }

    /// `out = y x` when `prev` is `None`, else `out = 2 y x - prev`, with
    /// `y = (h - center) / radius`.
    fn chebyshev_step(&self, out: &mut ComplexVector, x: &ComplexVector, prev: Option<&ComplexVector>, center: f64, radius: f64) {
        let scale = if prev.is_some() { 2.0 / radius } else { 1.0 / radius };
        for i in 0..self.diagonal.len() {
            let mut acc = x[i] * (self.diagonal[i] - center);
            for &(j, z) in &self.entries[self.starts[i]..self.starts[i + 1]] {
                acc += z * x[j];
            }
            out[i] = acc * scale - prev.map_or(Complex64::new(0.0, 0.0), |p| p[i]);
        }
    }
}

/// `J_0(x), J_1(x), ...` for `x >= 0`, up to the last order whose value
/// still exceeds [`TAIL`]. Miller's backward recurrence, normalized by
/// `J_0 + 2 Σ J_{2k} = 1`.
fn bessel_sequence(x: f64) -> Vec<f64> {
    // Beyond order x, J_k decays like exp(-c (k - x)^{3/2} / sqrt(x)); this
    // start is well inside the negligible tail.
    let start = (x + 20.0 * x.cbrt() + 40.0).ceil() as usize;
    let mut j = vec![0.0f64; start + 2];
    j[start] = 1e-300;
    for k in (1..=start).rev() {
        j[k - 1] = 2.0 * k as f64 / x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in &mut j[k - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let norm = j[0] + 2.0 * j.iter().skip(2).step_by(2).sum::<f64>();
    for v in &mut j {
        *v /= norm;
    }
    let order = x.ceil() as usize;
    let last = (order..j.len())
        .find(|&k| j[k].abs() < TAIL && j[k + 1..].iter().all(|v| v.abs() < TAIL))
        .unwrap_or(j.len() - 1);
    j.truncate(last.max(2));
    j
}
