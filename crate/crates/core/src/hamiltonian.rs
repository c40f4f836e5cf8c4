//! Drift Hamiltonians and control operators.
//!
//! Every matrix produced here is in angular-frequency units (rad/s). NMR
//! parameters are given in Hz and converted on the way in; the Ising chain is
//! dimensionless and read directly as rad/s.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qcore::{embed, pauli, ComplexMatrix, ONE};

/// A frequency given either in Hz or directly in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Frequency {
    Hz { hz: f64 },
    RadPerSecond { rad_s: f64 },
}

impl Frequency {
    pub fn hz(hz: f64) -> Self {
        Frequency::Hz { hz }
    }

    pub fn rad_s(rad_s: f64) -> Self {
        Frequency::RadPerSecond { rad_s }
    }

    pub fn to_rad_s(self) -> f64 {
        match self {
            Frequency::Hz { hz } => 2.0 * PI * hz,
            Frequency::RadPerSecond { rad_s } => rad_s,
        }
    }
}

/// One term `c · σ_a^{s_0} σ_b^{s_1}` of a custom two-body Hamiltonian. A
/// label of 0 on either factor gives a single-site term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoBodyTerm {
    pub paulis: [u8; 2],
    pub sites: [usize; 2],
    pub coefficient: Frequency,
}

/// Declarative drift Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// Open transverse-field chain `-Σ Z_i Z_{i+1} + Σ X_i`.
    Ising { qubits: usize },
    /// `Σ_j π ν_j Z_j + Σ_{j<k} (π/2) J_jk Z_j Z_k`, with `ν` and `J` in Hz.
    Nmr {
        shifts_hz: Vec<f64>,
        couplings_hz: Vec<Vec<f64>>,
    },
    TwoBody {
        qubits: usize,
        terms: Vec<TwoBodyTerm>,
    },
}

impl HamiltonianSpec {
    pub fn qubits(&self) -> usize {
        match self {
            HamiltonianSpec::Ising { qubits } | HamiltonianSpec::TwoBody { qubits, .. } => *qubits,
            HamiltonianSpec::Nmr { shifts_hz, .. } => shifts_hz.len(),
        }
    }

    pub fn build(&self) -> Result<ComplexMatrix> {
        match self {
            HamiltonianSpec::Ising { qubits } => build_ising(*qubits),
            HamiltonianSpec::Nmr {
                shifts_hz,
                couplings_hz,
            } => build_nmr(shifts_hz, couplings_hz),
            HamiltonianSpec::TwoBody { qubits, terms } => build_two_body(*qubits, terms),
        }
    }

    /// A four-spin system shaped like crotonic acid.
    ///
    /// Only `J_23 = 72.36 Hz` (sites 1 and 2 here, counting from zero) is a
    /// measured value. The chemical shifts and the other couplings are
    /// illustrative placeholders of a realistic magnitude.
    pub fn crotonic_illustrative() -> Self {
        let shifts_hz = vec![1250.0, -870.0, 460.0, -1530.0];
        let mut j = vec![vec![0.0; 4]; 4];
        let mut set = |a: usize, b: usize, v: f64| {
            j[a][b] = v;
            j[b][a] = v;
        };
        set(0, 1, 41.6);
        set(0, 2, 1.4);
        set(0, 3, 7.1);
        set(1, 2, CROTONIC_J23_HZ);
        set(1, 3, 1.2);
        set(2, 3, 34.7);
        HamiltonianSpec::Nmr {
            shifts_hz,
            couplings_hz: j,
        }
    }
}

/// The largest coupling of the crotonic-acid register, in Hz.
pub const CROTONIC_J23_HZ: f64 = 72.36;

pub fn build_ising(n: usize) -> Result<ComplexMatrix> {
    if n < 2 {
        return Err(invalid(format!("Ising chain needs at least 2 sites, got {n}")));
    }
    let dim = 1usize << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut zz = 0.0;
        for i in 0..n - 1 {
            let zi = z_sign(b, n, i);
            let zj = z_sign(b, n, i + 1);
            zz -= zi * zj;
        }
        h[(b, b)] = Complex64::new(zz, 0.0);
        for i in 0..n {
            h[(b ^ bit(n, i), b)] += ONE;
        }
    }
    Ok(h)
}

pub fn build_nmr(shifts_hz: &[f64], couplings_hz: &[Vec<f64>]) -> Result<ComplexMatrix> {
    let n = shifts_hz.len();
    if n == 0 {
        return Err(invalid("NMR system needs at least one spin"));
    }
    if couplings_hz.len() != n || couplings_hz.iter().any(|row| row.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: couplings_hz.len(),
        });
    }
    for a in 0..n {
        for b in 0..a {
            let (x, y) = (couplings_hz[a][b], couplings_hz[b][a]);
            if (x - y).abs() > 1e-12 * x.abs().max(y.abs()).max(1.0) {
                return Err(invalid(format!("coupling matrix is not symmetric at ({a}, {b})")));
            }
        }
    }
    let dim = 1usize << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut e = 0.0;
        for j in 0..n {
            e += PI * shifts_hz[j] * z_sign(b, n, j);
            for k in j + 1..n {
                e += 0.5 * PI * couplings_hz[j][k] * z_sign(b, n, j) * z_sign(b, n, k);
            }
        }
        h[(b, b)] = Complex64::new(e, 0.0);
    }
    Ok(h)
}

pub fn build_two_body(n: usize, terms: &[TwoBodyTerm]) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(invalid("two-body Hamiltonian needs at least one qubit"));
    }
    let dim = 1usize << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for term in terms {
        let [s0, s1] = term.sites;
        if term.paulis[0] != 0 && term.paulis[1] != 0 && s0 == s1 {
            return Err(invalid(format!("two-body term acts twice on site {s0}")));
        }
        let a = embed(n, s0, &pauli(term.paulis[0])?)?;
        let b = embed(n, s1, &pauli(term.paulis[1])?)?;
        h += (a * b) * Complex64::new(term.coefficient.to_rad_s(), 0.0);
    }
    Ok(h)
}

/// How control amplitudes couple to the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Two channels driving `Σ_i X_i` and `Σ_i Y_i`.
    Global,
    /// `2n` channels, ordered `x_0 .. x_{n-1}, y_0 .. y_{n-1}`.
    PerSite,
}

impl ControlMode {
    pub fn channels(self, qubits: usize) -> usize {
        match self {
            ControlMode::Global => 2,
            ControlMode::PerSite => 2 * qubits,
        }
    }

    /// Pauli axis (1 = X, 2 = Y) and the sites driven by `channel`.
    pub fn channel_target(self, qubits: usize, channel: usize) -> (u8, Vec<usize>) {
        match self {
            ControlMode::Global => (1 + channel as u8, (0..qubits).collect()),
            ControlMode::PerSite => {
                let axis = if channel < qubits { 1 } else { 2 };
                (axis, vec![channel % qubits])
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ControlMode::Global => "global",
            ControlMode::PerSite => "per_site",
        }
    }
}

impl std::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ControlMode::Global),
            "per_site" => Ok(ControlMode::PerSite),
            other => Err(invalid(format!("unknown control mode `{other}`"))),
        }
    }
}

/// The Hermitian operators multiplying each control channel.
#[derive(Debug, Clone)]
pub struct ControlOperators {
    mode: ControlMode,
    qubits: usize,
    operators: Vec<ComplexMatrix>,
}

impl ControlOperators {
    pub fn new(mode: ControlMode, qubits: usize) -> Result<Self> {
        if qubits == 0 {
            return Err(invalid("control operators need at least one qubit"));
        }
        let dim = 1usize << qubits;
        let mut operators = Vec::with_capacity(mode.channels(qubits));
        for channel in 0..mode.channels(qubits) {
            let (axis, sites) = mode.channel_target(qubits, channel);
            let p = pauli(axis)?;
            let mut op = ComplexMatrix::zeros(dim, dim);
            for site in sites {
                op += embed(qubits, site, &p)?;
            }
            operators.push(op);
        }
        Ok(Self {
            mode,
            qubits,
            operators,
        })
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    /// `Σ_k amplitudes[k] · O_k`.
    pub fn control_matrix(&self, amplitudes: &[f64]) -> Result<ComplexMatrix> {
        let mut h = ComplexMatrix::zeros(self.dim(), self.dim());
        self.add_control(&mut h, amplitudes)?;
        Ok(h)
    }

    /// Adds `Σ_k amplitudes[k] · O_k` to `h` in place.
    pub fn add_control(&self, h: &mut ComplexMatrix, amplitudes: &[f64]) -> Result<()> {
        if amplitudes.len() != self.operators.len() {
            return Err(Error::DimensionMismatch {
                expected: self.operators.len(),
                found: amplitudes.len(),
            });
        }
        for (op, &a) in self.operators.iter().zip(amplitudes) {
            if a != 0.0 {
                h.zip_apply(op, |x, y| *x += y * a);
            }
        }
        Ok(())
    }
}

/// `+1` if qubit `site` of basis index `b` is 0, else `-1`.
fn z_sign(b: usize, n: usize, site: usize) -> f64 {
    if b & bit(n, site) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn bit(n: usize, site: usize) -> usize {
    1 << (n - 1 - site)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{hermitian_deviation, kron, max_abs, pauli_string};
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn ising_by_terms(n: usize) -> ComplexMatrix {
        let dim = 1 << n;
        let mut h = ComplexMatrix::zeros(dim, dim);
        for i in 0..n - 1 {
            let mut labels = vec![0u8; n];
            labels[i] = 3;
            labels[i + 1] = 3;
            h -= pauli_string(n, &labels).unwrap();
        }
        for i in 0..n {
            let mut labels = vec![0u8; n];
            labels[i] = 1;
            h += pauli_string(n, &labels).unwrap();
        }
        h
    }

    #[test]
    fn ising_two_sites() {
        let h = build_ising(2).unwrap();
        assert_eq!(h[(0, 0)], c(-1.0));
        assert_eq!(h[(0, 1)], c(1.0));
        assert_eq!(h[(0, 2)], c(1.0));
        let x = pauli(1).unwrap();
        let z = pauli(3).unwrap();
        let i2 = ComplexMatrix::identity(2, 2);
        let expected = -kron(&z, &z) + kron(&x, &i2) + kron(&i2, &x);
        assert_eq!(h, expected);
    }

    #[test]
    fn ising_matches_term_sum() {
        for n in 2..=5 {
            assert_eq!(build_ising(n).unwrap(), ising_by_terms(n));
        }
        assert!(build_ising(1).is_err());
    }

    #[test]
    fn ising_subchain_consistency() {
        // The (n+1)-chain is the n-chain on the first n sites plus one more
        // bond and one more field term.
        for n in 2..=4 {
            let big = build_ising(n + 1).unwrap();
            let small = kron(&build_ising(n).unwrap(), &ComplexMatrix::identity(2, 2));
            let mut zz = vec![0u8; n + 1];
            zz[n - 1] = 3;
            zz[n] = 3;
            let mut x = vec![0u8; n + 1];
            x[n] = 1;
            let extra = pauli_string(n + 1, &x).unwrap() - pauli_string(n + 1, &zz).unwrap();
            assert_eq!(big, small + extra);
        }
    }

    #[test]
    fn nmr_ground_entry_and_pure_coupling() {
        let spec = HamiltonianSpec::crotonic_illustrative();
        let HamiltonianSpec::Nmr {
            shifts_hz,
            couplings_hz,
        } = &spec
        else {
            unreachable!()
        };
        assert_eq!(couplings_hz[1][2], 72.36);
        let h = spec.build().unwrap();
        let mut expected = PI * shifts_hz.iter().sum::<f64>();
        for j in 0..4 {
            for k in j + 1..4 {
                expected += 0.5 * PI * couplings_hz[j][k];
            }
        }
        assert!((h[(0, 0)].re - expected).abs() < 1e-9);

        let h = build_nmr(&[0.0, 0.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| h[(i, i)].re).collect();
        assert_eq!(diag, vec![PI / 2.0, -PI / 2.0, -PI / 2.0, PI / 2.0]);
        assert_eq!(max_abs(&(h.clone() - ComplexMatrix::from_diagonal(&h.diagonal()))), 0.0);
    }

    #[test]
    fn nmr_rejects_asymmetric_couplings() {
        let err = build_nmr(&[0.0, 0.0], &[vec![0.0, 1.0], vec![2.0, 0.0]]);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn nmr_commutes_with_every_z() {
        let h = HamiltonianSpec::crotonic_illustrative().build().unwrap();
        for j in 0..4 {
            let z = embed(4, j, &pauli(3).unwrap()).unwrap();
            assert!(max_abs(&(&h * &z - &z * &h)) < 1e-12);
        }
    }

    #[test]
    fn two_body_matches_pauli_strings() {
        let terms = vec![
            TwoBodyTerm {
                paulis: [1, 2],
                sites: [0, 2],
                coefficient: Frequency::rad_s(0.7),
            },
            TwoBodyTerm {
                paulis: [3, 0],
                sites: [1, 1],
                coefficient: Frequency::hz(1.0),
            },
        ];
        let h = build_two_body(3, &terms).unwrap();
        let expected = pauli_string(3, &[1, 0, 2]).unwrap() * c(0.7)
            + pauli_string(3, &[0, 3, 0]).unwrap() * c(2.0 * PI);
        assert!(max_abs(&(h - expected)) < 1e-14);
        let bad = TwoBodyTerm {
            paulis: [1, 1],
            sites: [0, 0],
            coefficient: Frequency::rad_s(1.0),
        };
        assert!(build_two_body(2, &[bad]).is_err());
    }

    #[test]
    fn control_matrix_examples() {
        let ops = ControlOperators::new(ControlMode::Global, 1).unwrap();
        assert!(max_abs(&ops.control_matrix(&[0.0, 0.0]).unwrap()) == 0.0);
        assert_eq!(ops.control_matrix(&[1.0, 0.0]).unwrap(), pauli(1).unwrap());

        let ops = ControlOperators::new(ControlMode::PerSite, 2).unwrap();
        assert_eq!(ops.operators().len(), 4);
        let m = ops.control_matrix(&[0.0, 0.5, 0.0, -2.0]).unwrap();
        let i2 = ComplexMatrix::identity(2, 2);
        let expected = kron(&i2, &pauli(1).unwrap()) * c(0.5) - kron(&i2, &pauli(2).unwrap()) * c(2.0);
        assert_eq!(m, expected);
        assert!(matches!(
            ops.control_matrix(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, found: 2 })
        ));
    }

    #[test]
    fn spec_round_trips_through_serde_values() {
        let spec = HamiltonianSpec::crotonic_illustrative();
        assert_eq!(spec.qubits(), 4);
        assert_eq!(HamiltonianSpec::Ising { qubits: 3 }.qubits(), 3);
        assert_eq!("per_site".parse::<ControlMode>().unwrap(), ControlMode::PerSite);
        assert!("diagonal".parse::<ControlMode>().is_err());
    }

    proptest! {
        #[test]
        fn built_hamiltonians_are_hermitian(
            n in 2usize..=4,
            shifts in proptest::collection::vec(-2000.0f64..2000.0, 4),
            couplings in proptest::collection::vec(-100.0f64..100.0, 16),
            amps in proptest::collection::vec(-1e4f64..1e4, 8),
        ) {
            prop_assert!(hermitian_deviation(&build_ising(n).unwrap()) < 1e-12);
            let mut j = vec![vec![0.0; n]; n];
            for a in 0..n {
                for b in a + 1..n {
                    j[a][b] = couplings[a * 4 + b];
                    j[b][a] = couplings[a * 4 + b];
                }
            }
            let h = build_nmr(&shifts[..n], &j).unwrap();
            prop_assert!(hermitian_deviation(&h) < 1e-12);
            for mode in [ControlMode::Global, ControlMode::PerSite] {
                let ops = ControlOperators::new(mode, n).unwrap();
                let k = mode.channels(n);
                let m = ops.control_matrix(&amps[..k]).unwrap();
                prop_assert!(hermitian_deviation(&m) < 1e-12);
            }
        }
    }
}
