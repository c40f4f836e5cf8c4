//! Dense complex linear algebra and the quantum primitives everything else
//! is built from.
//!
//! Conventions used throughout the crate:
//!
//! * qubit 0 is the leftmost tensor factor, so in a basis index `b` of a
//!   `2^n` vector qubit 0 is the most significant bit;
//! * `|0> = (1, 0)^T`;
//! * Pauli labels are `0 = I`, `1 = X`, `2 = Y`, `3 = Z`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Hermiticity slack accepted on caller-supplied operators, relative to the
/// largest entry (and absolute below unit scale).
pub const HERMITIAN_INPUT_TOL: f64 = 1e-8;

/// Tolerance used when validating states.
pub const STATE_TOL: f64 = 1e-10;

/// Most negative eigenvalue tolerated in a density matrix.
pub const PSD_TOL: f64 = 1e-9;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// The 2x2 Pauli matrix for `label` (0 = I, 1 = X, 2 = Y, 3 = Z).
pub fn pauli(label: u8) -> Result<ComplexMatrix> {
    let m = match label {
        0 => [ONE, ZERO, ZERO, ONE],
        1 => [ZERO, ONE, ONE, ZERO],
        2 => [ZERO, -I, I, ZERO],
        3 => [ONE, ZERO, ZERO, -ONE],
        other => return Err(Error::InvalidPauliLabel(other)),
    };
    Ok(ComplexMatrix::from_row_slice(2, 2, &m))
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// `σ_{l_0} ⊗ σ_{l_1} ⊗ ... ⊗ σ_{l_{n-1}}`.
pub fn pauli_string(n: usize, labels: &[u8]) -> Result<ComplexMatrix> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let mut out = ComplexMatrix::identity(1, 1);
    for &l in labels {
        out = kron(&out, &pauli(l)?);
    }
    Ok(out)
}

/// Embed a single-qubit operator acting on `site` of an `n`-qubit register.
pub fn embed(n: usize, site: usize, op: &ComplexMatrix) -> Result<ComplexMatrix> {
    if site >= n {
        return Err(Error::IndexOutOfRange {
            what: "qubit",
            index: site,
            limit: n,
        });
    }
    let left = ComplexMatrix::identity(1 << site, 1 << site);
    let right_dim = 1 << (n - site - 1);
    let right = ComplexMatrix::identity(right_dim, right_dim);
    Ok(kron(&kron(&left, op), &right))
}

/// Number of qubits for a dimension, if it is a power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two()).then(|| dim.trailing_zeros() as usize)
}

/// Largest `|m_ij - conj(m_ji)|`.
pub fn hermitian_deviation(m: &ComplexMatrix) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(m: &ComplexMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Checks squareness and Hermiticity within [`HERMITIAN_INPUT_TOL`].
pub fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let dev = hermitian_deviation(m);
    if dev > HERMITIAN_INPUT_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// `max |(U†U - I)_ij|`.
pub fn unitarity_deviation(u: &ComplexMatrix) -> f64 {
    let p = u.adjoint() * u;
    max_abs(&(p - ComplexMatrix::identity(u.nrows(), u.ncols())))
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns. Only the lower triangle of
/// `h` is read.
pub fn hermitian_eigen(h: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = h.nrows();
    let m = faer::Mat::<faer::c64>::from_fn(n, n, |i, j| h[(i, j)]);
    let eig = m
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("Hermitian eigensolver did not converge");
    let values = (0..n).map(|j| eig.S()[j].re).collect();
    let u = eig.U();
    (values, ComplexMatrix::from_fn(n, n, |i, j| u[(i, j)]))
}

/// `exp(-i * scale * h)` for Hermitian `h`, through the eigendecomposition
/// `h = V diag(λ) V†`.
pub fn expm_hermitian(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    check_hermitian(h)?;
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let (values, v) = hermitian_eigen(&sym);
    let mut scaled = v.clone();
    for (j, lambda) in values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -scale * lambda);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= phase;
        }
    }
    Ok(scaled * v.adjoint())
}

/// Apply a 2x2 gate to qubit `site` of a state vector in place.
pub fn apply_local(state: &mut ComplexVector, n: usize, site: usize, gate: &ComplexMatrix) {
    let stride = 1usize << (n - 1 - site);
    let dim = state.len();
    let (g00, g01, g10, g11) = (gate[(0, 0)], gate[(0, 1)], gate[(1, 0)], gate[(1, 1)]);
    let mut base = 0;
    while base < dim {
        for i in base..base + stride {
            let a = state[i];
            let b = state[i + stride];
            state[i] = g00 * a + g01 * b;
            state[i + stride] = g10 * a + g11 * b;
        }
        base += 2 * stride;
    }
}

/// A normalized pure state of `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    qubits: usize,
    amplitudes: ComplexVector,
}

impl PureState {
    pub fn new(amplitudes: ComplexVector) -> Result<Self> {
        let qubits = qubits_for_dim(amplitudes.len())
            .ok_or_else(|| Error::InvalidState(format!("length {} is not 2^n", amplitudes.len())))?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("norm {norm} differs from 1")));
        }
        Ok(Self { qubits, amplitudes })
    }

    /// Normalizes `amplitudes` before wrapping them.
    pub fn normalized(amplitudes: ComplexVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite vector".into()));
        }
        Self::new(amplitudes / Complex64::new(norm, 0.0))
    }

    pub(crate) fn from_vector_unchecked(qubits: usize, amplitudes: ComplexVector) -> Self {
        Self { qubits, amplitudes }
    }

    /// `|0...0>`.
    pub fn ground(qubits: usize) -> Self {
        let mut v = ComplexVector::zeros(1 << qubits);
        v[0] = ONE;
        Self {
            qubits,
            amplitudes: v,
        }
    }

    /// The computational basis state with index `index`.
    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        if index >= 1 << qubits {
            return Err(Error::IndexOutOfRange {
                what: "basis",
                index,
                limit: 1 << qubits,
            });
        }
        let mut v = ComplexVector::zeros(1 << qubits);
        v[index] = ONE;
        Ok(Self {
            qubits,
            amplitudes: v,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &ComplexVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> ComplexVector {
        self.amplitudes
    }

    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix {
            qubits: self.qubits,
            matrix: m,
        }
    }
}

/// A density matrix: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let qubits = qubits_for_dim(matrix.nrows())
            .ok_or_else(|| Error::InvalidState(format!("dimension {} is not 2^n", matrix.nrows())))?;
        let dev = hermitian_deviation(&matrix);
        if dev > STATE_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {dev:e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigen(&(&matrix + matrix.adjoint()).scale(0.5))
            .0
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { qubits, matrix })
    }

    pub(crate) fn from_matrix_unchecked(qubits: usize, matrix: ComplexMatrix) -> Self {
        Self { qubits, matrix }
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(qubits: usize) -> Self {
        let d = 1 << qubits;
        Self {
            qubits,
            matrix: ComplexMatrix::identity(d, d) / Complex64::new(d as f64, 0.0),
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ.
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Spectral decomposition `(p_k, |ψ_k>)` keeping weights above `floor`.
    pub fn spectrum(&self, floor: f64) -> Vec<(f64, ComplexVector)> {
        let sym = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        let (values, vectors) = hermitian_eigen(&sym);
        let mut out: Vec<(f64, ComplexVector)> = values
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > floor)
            .map(|(k, &p)| (p, vectors.column(k).into_owned()))
            .collect();
        out.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    /// Reduced state on the qubits in `keep` (in increasing order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let n = self.qubits;
        let mut keep: Vec<usize> = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&q| q >= n) {
            return Err(Error::IndexOutOfRange {
                what: "qubit",
                index: bad,
                limit: n,
            });
        }
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let k = keep.len();
        let bit = |q: usize| 1usize << (n - 1 - q);
        let compose = |kept_idx: usize, traced_idx: usize| {
            let mut b = 0;
            for (pos, &q) in keep.iter().enumerate() {
                if kept_idx >> (k - 1 - pos) & 1 == 1 {
                    b |= bit(q);
                }
            }
            for (pos, &q) in traced.iter().enumerate() {
                if traced_idx >> (traced.len() - 1 - pos) & 1 == 1 {
                    b |= bit(q);
                }
            }
            b
        };
        let dk = 1 << k;
        let dt = 1 << traced.len();
        let mut out = ComplexMatrix::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = ZERO;
                for t in 0..dt {
                    acc += self.matrix[(compose(i, t), compose(j, t))];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix {
            qubits: k,
            matrix: out,
        })
    }
}

/// `F(ρ, σ) = Tr(ρσ) / sqrt(Tr(ρ²) Tr(σ²))`.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let (pr, ps) = (rho.purity(), sigma.purity());
    if pr <= 0.0 || ps <= 0.0 {
        return Err(Error::InvalidState("zero purity".into()));
    }
    Ok(trace_product(rho.matrix(), sigma.matrix()).re / (pr.sqrt() * ps.sqrt()))
}

/// `Tr(obs · ρ)` with the imaginary part dropped.
pub fn expectation(rho: &DensityMatrix, obs: &ComplexMatrix) -> Result<f64> {
    if obs.nrows() != rho.dim() || obs.ncols() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: obs.nrows(),
        });
    }
    Ok(trace_product(obs, rho.matrix()).re)
}

/// `Tr(a · b)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
