//! Reconstruction from a learned pulse, plus the conventional Pauli-basis
//! tomography used as a reference.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::control::{ControlSequence, ControlSystem};
use crate::error::{invalid, parse_error, Error, Result};
use crate::qcore::{ComplexMatrix, ComplexVector, DensityMatrix, PureState, ONE, ZERO};

/// `C† |0...0>` for the pulse's total propagator `C`.
pub fn reconstruct_state(system: &ControlSystem, seq: &ControlSequence) -> Result<PureState> {
    let u = system.total_propagator(seq)?;
    let psi: ComplexVector = u.row(0).adjoint();
    PureState::normalized(psi)
}

/// `C† |0...0><0...0| C`.
pub fn reconstruct(system: &ControlSystem, seq: &ControlSequence) -> Result<DensityMatrix> {
    Ok(reconstruct_state(system, seq)?.to_density())
}

const LABELS: [char; 4] = ['I', 'X', 'Y', 'Z'];

/// Coefficients `γ_l = Tr(ρ P_l) / 2^n` of `ρ = Σ_l γ_l P_l` over all `4^n`
/// Pauli strings. Label index `l` reads qubit 0 as the most significant
/// base-4 digit.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliCoefficients {
    qubits: usize,
    gamma: Vec<f64>,
}

impl PauliCoefficients {
    pub fn new(qubits: usize, gamma: Vec<f64>) -> Result<Self> {
        if gamma.len() != 1 << (2 * qubits) {
            return Err(Error::DimensionMismatch {
                expected: 1 << (2 * qubits),
                found: gamma.len(),
            });
        }
        Ok(Self { qubits, gamma })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    /// Coefficient of the string with per-qubit labels `labels`.
    pub fn get(&self, labels: &[u8]) -> Result<f64> {
        Ok(self.gamma[label_index(self.qubits, labels)?])
    }

    /// `"IXZ"`-style name of label index `l`.
    pub fn label_name(&self, l: usize) -> String {
        (0..self.qubits)
            .map(|q| LABELS[(l >> (2 * (self.qubits - 1 - q))) & 3])
            .collect()
    }

    /// Labeled table, one `NAME value` line per string.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, g) in self.gamma.iter().enumerate() {
            writeln!(out, "{} {:?}", self.label_name(l), g).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, value) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| parse_error(i + 1, "expected `LABEL value`"))?;
            let labels = name
                .chars()
                .map(|c| LABELS.iter().position(|&l| l == c).map(|p| p as u8))
                .collect::<Option<Vec<u8>>>()
                .ok_or_else(|| parse_error(i + 1, format!("invalid Pauli label `{name}`")))?;
            let value = value
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_error(i + 1, format!("invalid coefficient `{}`", value.trim())))?;
            entries.push((i + 1, labels, value));
        }
        let qubits = entries.first().map(|e| e.1.len()).ok_or_else(|| parse_error(0, "empty table"))?;
        let mut gamma = vec![f64::NAN; 1 << (2 * qubits)];
        for (line, labels, value) in entries {
            if labels.len() != qubits {
                return Err(parse_error(line, "label length differs from the first line"));
            }
            let l = label_index(qubits, &labels)?;
            if !gamma[l].is_nan() {
                return Err(parse_error(line, "duplicate label"));
            }
            gamma[l] = value;
        }
        if gamma.iter().any(|g| g.is_nan()) {
            return Err(parse_error(0, format!("table does not list all {} labels", gamma.len())));
        }
        Self::new(qubits, gamma)
    }
}

fn label_index(qubits: usize, labels: &[u8]) -> Result<usize> {
    if labels.len() != qubits {
        return Err(Error::DimensionMismatch {
            expected: qubits,
            found: labels.len(),
        });
    }
    labels.iter().try_fold(0usize, |acc, &l| {
        if l > 3 {
            Err(Error::InvalidPauliLabel(l))
        } else {
            Ok(acc * 4 + l as usize)
        }
    })
}

/// Nonzero column structure of a Pauli string: `P |b> = phase(b) |b ^ flip>`.
fn pauli_action(qubits: usize, l: usize, b: usize) -> (usize, Complex64) {
    let mut target = b;
    let mut phase = ONE;
    for q in 0..qubits {
        let label = (l >> (2 * (qubits - 1 - q))) & 3;
        let bit = 1usize << (qubits - 1 - q);
        let set = b & bit != 0;
        match label {
            1 => target ^= bit,
            2 => {
                target ^= bit;
                // Y|0> = i|1>, Y|1> = -i|0>.
                phase *= if set { -Complex64::i() } else { Complex64::i() };
            }
            3 => {
                if set {
                    phase = -phase;
                }
            }
            _ => {}
        }
    }
    (target, phase)
}

/// Exact Pauli decomposition `γ_l = Tr(ρ P_l) / 2^n`.
pub fn full_qst(state: &DensityMatrix) -> PauliCoefficients {
    let n = state.qubits();
    let dim = state.dim();
    let rho = state.matrix();
    let gamma = (0..1usize << (2 * n))
        .map(|l| {
            // Tr(ρP) = Σ_b ρ[b, P(b)] · phase(b).
            let mut acc = ZERO;
            for b in 0..dim {
                let (t, phase) = pauli_action(n, l, b);
                acc += rho[(b, t)] * phase;
            }
            acc.re / dim as f64
        })
        .collect();
    PauliCoefficients { qubits: n, gamma }
}

/// `Σ_l γ_l P_l`. The identity coefficient must equal `1/2^n`.
pub fn pauli_reassemble(coeffs: &PauliCoefficients) -> Result<DensityMatrix> {
    let n = coeffs.qubits;
    let dim = 1usize << n;
    let expected = 1.0 / dim as f64;
    if (coeffs.gamma[0] - expected).abs() > 1e-12 {
        return Err(invalid(format!(
            "identity coefficient is {}, expected {expected}",
            coeffs.gamma[0]
        )));
    }
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (l, &g) in coeffs.gamma.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for b in 0..dim {
            let (t, phase) = pauli_action(n, l, b);
            m[(t, b)] += phase * g;
        }
    }
    DensityMatrix::new(m)
}

/// `ε = sqrt(Σ_i (sim_i − ideal_i)² / (K − 1))`.
pub fn deviation_statistic(sim: &[f64], ideal: &[f64]) -> Result<f64> {
    if sim.len() != ideal.len() {
        return Err(Error::DimensionMismatch {
            expected: ideal.len(),
            found: sim.len(),
        });
    }
    if sim.len() < 2 {
        return Err(invalid("deviation statistic needs at least two points"));
    }
    let ss: f64 = sim.iter().zip(ideal).map(|(s, t)| (s - t).powi(2)).sum();
    Ok((ss / (sim.len() - 1) as f64).sqrt())
}

/// Text form of a complex matrix: a `rows cols` header, then one line per
/// row of `re im` pairs.
pub fn matrix_to_text(m: &ComplexMatrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:?} {:?}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_from_text(text: &str) -> Result<ComplexMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let (hi, header) = lines.next().ok_or_else(|| parse_error(0, "empty matrix file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_error(hi + 1, "expected `rows cols`"))?;
    let [rows, cols] = dims[..] else {
        return Err(parse_error(hi + 1, "expected `rows cols`"));
    };
    let mut m = ComplexMatrix::zeros(rows, cols);
    let mut r = 0;
    for (i, line) in lines {
        if r == rows {
            return Err(parse_error(i + 1, "more rows than declared"));
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_error(i + 1, "invalid number"))?;
        if values.len() != 2 * cols {
            return Err(parse_error(i + 1, format!("expected {} numbers", 2 * cols)));
        }
        for j in 0..cols {
            m[(r, j)] = Complex64::new(values[2 * j], values[2 * j + 1]);
        }
        r += 1;
    }
    if r != rows {
        return Err(parse_error(0, format!("declared {rows} rows, found {r}")));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{Evolve, ControlSequence};
    use crate::device::{Device, MeasurementModel};
    use crate::hamiltonian::{build_ising, ControlMode, ControlOperators};
    use crate::qcore::{fidelity, max_abs, pauli_string};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_density(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << n;
        let a = ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = &a * a.adjoint();
        let t = m.trace();
        DensityMatrix::new(m / t).unwrap()
    }

    fn free_system(n: usize) -> ControlSystem {
        let d = 1 << n;
        ControlSystem::new(ComplexMatrix::zeros(d, d), ControlOperators::new(ControlMode::Global, n).unwrap()).unwrap()
    }

    #[test]
    fn reconstruct_examples() {
        let seq = ControlSequence::zeros(2, ControlMode::Global, 2, 1e-3).unwrap();
        let rho = reconstruct(&free_system(2), &seq).unwrap();
        assert_eq!(rho, PureState::ground(2).to_density());

        // τ b_x = π/2 is a σx flip up to phase.
        let tau = 1e-3;
        let seq = ControlSequence::new(1, ControlMode::Global, tau, vec![PI / 2.0 / tau, 0.0]).unwrap();
        let rho = reconstruct(&free_system(1), &seq).unwrap();
        assert!(max_abs(&(rho.matrix() - PureState::basis(1, 1).unwrap().to_density().matrix())) < 1e-10);
    }

    #[test]
    fn reconstruction_overlap_is_the_fitness() {
        let system = ControlSystem::new(build_ising(3).unwrap(), ControlOperators::new(ControlMode::PerSite, 3).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let amps = (0..5 * 6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let seq = ControlSequence::new(3, ControlMode::PerSite, 0.2, amps).unwrap();
        let target = random_density(3, 5);
        let dev = Device::new(system.clone(), &target, MeasurementModel::Exact).unwrap();
        let rec = reconstruct(&system, &seq).unwrap();
        let overlap = crate::qcore::trace_product(rec.matrix(), target.matrix()).re;
        assert!((overlap - dev.measure_fitness(&seq).unwrap()).abs() < 1e-10);
        assert!((rec.purity() - 1.0).abs() < 1e-9);
        assert!((rec.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_qst_examples() {
        let mixed = full_qst(&DensityMatrix::maximally_mixed(2));
        assert_eq!(mixed.values()[0], 0.25);
        assert!(mixed.values()[1..].iter().all(|&g| g == 0.0));

        let zero = full_qst(&PureState::ground(1).to_density());
        assert_eq!(zero.values(), &[0.5, 0.0, 0.0, 0.5]);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = ComplexVector::zeros(4);
        v[0] = Complex64::new(s, 0.0);
        v[3] = Complex64::new(s, 0.0);
        let bell = full_qst(&PureState::new(v).unwrap().to_density());
        for (l, &g) in bell.values().iter().enumerate() {
            let expected = match bell.label_name(l).as_str() {
                "II" | "XX" | "ZZ" => 0.25,
                "YY" => -0.25,
                _ => 0.0,
            };
            assert!((g - expected).abs() < 1e-15, "{}", bell.label_name(l));
        }
    }

    #[test]
    fn full_qst_matches_trace_definition() {
        let rho = random_density(3, 8);
        let coeffs = full_qst(&rho);
        for l in [0usize, 5, 17, 42, 63] {
            let labels: Vec<u8> = (0..3).map(|q| ((l >> (2 * (2 - q))) & 3) as u8).collect();
            let p = pauli_string(3, &labels).unwrap();
            let direct = crate::qcore::trace_product(rho.matrix(), &p).re / 8.0;
            assert!((coeffs.get(&labels).unwrap() - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn reassemble_examples() {
        let coeffs = PauliCoefficients::new(1, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        let plus = pauli_reassemble(&coeffs).unwrap();
        assert!(max_abs(&(plus.matrix() - ComplexMatrix::from_element(2, 2, Complex64::new(0.5, 0.0)))) < 1e-15);
        let mut id = vec![0.0; 16];
        id[0] = 0.25;
        let mixed = pauli_reassemble(&PauliCoefficients::new(2, id).unwrap()).unwrap();
        assert_eq!(mixed, DensityMatrix::maximally_mixed(2));
        let missing = PauliCoefficients::new(1, vec![0.0, 0.5, 0.0, 0.0]).unwrap();
        assert!(pauli_reassemble(&missing).is_err());
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(deviation_statistic(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(deviation_statistic(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        let sim = [0.0245; 6];
        let eps = deviation_statistic(&sim, &[0.0; 6]).unwrap();
        assert!((eps - 0.0245 * (6.0f64 / 5.0).sqrt()).abs() < 1e-15);
        assert!(deviation_statistic(&[1.0], &[1.0]).is_err());
        assert!(deviation_statistic(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn text_formats_round_trip_bit_exactly() {
        let rho = random_density(2, 12);
        let back = matrix_from_text(&matrix_to_text(rho.matrix())).unwrap();
        assert_eq!(&back, rho.matrix());
        let coeffs = full_qst(&rho);
        let back = PauliCoefficients::from_text(&coeffs.to_text()).unwrap();
        assert_eq!(back, coeffs);
        assert!(matrix_from_text("2 2\n1 0 0 0\n").is_err());
        assert!(PauliCoefficients::from_text("I 0.5\nX 0.5\n").is_err());
        assert!(PauliCoefficients::from_text("I 0.5\nQ 0.5\nY 0\nZ 0\n").is_err());
    }

    #[test]
    fn reconstruction_matches_fidelity_on_pure_targets() {
        let system = ControlSystem::new(build_ising(2).unwrap(), ControlOperators::new(ControlMode::Global, 2).unwrap())
            .unwrap();
        let target = random_density(2, 1).spectrum(0.0)[0].1.clone();
        let target = PureState::normalized(target).unwrap();
        let seq = ControlSequence::new(2, ControlMode::Global, 0.3, vec![1.0, -0.5, 0.2, 0.9]).unwrap();
        let dev = Device::with_pure_target(system.clone(), &target, MeasurementModel::Exact).unwrap();
        let f = dev.measure_fitness(&seq).unwrap();
        let rec = reconstruct(&system, &seq).unwrap();
        assert!((fidelity(&rec, &target.to_density()).unwrap() - f).abs() < 1e-9);
        let u = system.total_propagator(&seq).unwrap();
        let back = rec.evolve(&u).unwrap();
        assert!((back.matrix()[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn qst_round_trips(seed in any::<u64>(), n in 1usize..=4) {
            let rho = random_density(n, seed);
            let coeffs = full_qst(&rho);
            let back = pauli_reassemble(&coeffs).unwrap();
            prop_assert!(max_abs(&(back.matrix() - rho.matrix())) < 1e-12);
            let again = full_qst(&back);
            let err = again.values().iter().zip(coeffs.values()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            prop_assert!(err < 1e-12);
        }
    }
}
