//! Piecewise-constant control sequences and their propagators.
//!
//! Slices are indexed from 0 and slice 0 acts first, so the total propagator
//! is `C_{M-1} ... C_1 C_0`. A rotation "at position `p`" is applied after the
//! first `p` slices; `p = 0` is before everything and `p = M` after.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, parse_error, Error, Result};
use crate::hamiltonian::{ControlMode, ControlOperators};
use crate::qcore::{
    check_hermitian, embed, expm_hermitian, pauli, ComplexMatrix, DensityMatrix, PureState,
};

/// Default amplitude bound, `2π · 10 kHz` in rad/s.
pub const DEFAULT_AMPLITUDE_CAP: f64 = 2.0 * PI * 1.0e4;

/// `M` slices of duration `tau` with one amplitude (rad/s) per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    qubits: usize,
    mode: ControlMode,
    tau: f64,
    cap: f64,
    slices: usize,
    /// Row-major, `slices × channels`.
    amplitudes: Vec<f64>,
}

impl ControlSequence {
    /// Builds a sequence from row-major amplitudes with the default cap.
    pub fn new(qubits: usize, mode: ControlMode, tau: f64, amplitudes: Vec<f64>) -> Result<Self> {
        Self::with_cap(qubits, mode, tau, DEFAULT_AMPLITUDE_CAP, amplitudes)
    }

    pub fn with_cap(
        qubits: usize,
        mode: ControlMode,
        tau: f64,
        cap: f64,
        amplitudes: Vec<f64>,
    ) -> Result<Self> {
        if qubits == 0 {
            return Err(invalid("a control sequence needs at least one qubit"));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid(format!("slice duration must be positive, got {tau}")));
        }
        if !(cap > 0.0) {
            return Err(invalid(format!("amplitude cap must be positive, got {cap}")));
        }
        let channels = mode.channels(qubits);
        if amplitudes.is_empty() || !amplitudes.len().is_multiple_of(channels) {
            return Err(invalid(format!(
                "{} amplitudes do not form whole slices of {channels} channels",
                amplitudes.len()
            )));
        }
        if let Some(a) = amplitudes.iter().find(|a| !a.is_finite() || a.abs() > cap) {
            return Err(invalid(format!("amplitude {a} exceeds the cap {cap}")));
        }
        Ok(Self {
            qubits,
            mode,
            tau,
            cap,
            slices: amplitudes.len() / channels,
            amplitudes,
        })
    }

    pub fn zeros(qubits: usize, mode: ControlMode, slices: usize, tau: f64) -> Result<Self> {
        Self::new(qubits, mode, tau, vec![0.0; slices * mode.channels(qubits)])
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn channels(&self) -> usize {
        self.mode.channels(self.qubits)
    }

    /// Total pulse length `M · tau`.
    pub fn duration(&self) -> f64 {
        self.slices as f64 * self.tau
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        let k = self.channels();
        &self.amplitudes[m * k..(m + 1) * k]
    }

    pub fn amplitude(&self, m: usize, channel: usize) -> f64 {
        self.amplitudes[m * self.channels() + channel]
    }

    /// Same layout and cap, new amplitudes clipped into `[-cap, cap]`.
    pub fn with_amplitudes_clipped(&self, amplitudes: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != self.amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.amplitudes.len(),
                found: amplitudes.len(),
            });
        }
        let cap = self.cap;
        let amplitudes = amplitudes.into_iter().map(|a| a.clamp(-cap, cap)).collect();
        Self::with_cap(self.qubits, self.mode, self.tau, cap, amplitudes)
    }

    /// Serializes to the two-section text format: `key = value` header lines,
    /// a `---` separator, then one whitespace-separated row per slice.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "qubits = {}", self.qubits).unwrap();
        writeln!(out, "mode = {}", self.mode.name()).unwrap();
        writeln!(out, "slices = {}", self.slices).unwrap();
        writeln!(out, "tau = {:?}", self.tau).unwrap();
        writeln!(out, "cap = {:?}", self.cap).unwrap();
        out.push_str("---\n");
        for m in 0..self.slices {
            let row: Vec<String> = self.slice(m).iter().map(|a| format!("{a:?}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut qubits = None;
        let mut mode = None;
        let mut slices = None;
        let mut tau = None;
        let mut cap = DEFAULT_AMPLITUDE_CAP;
        let mut saw_separator = false;
        for (i, line) in lines.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "---" {
                saw_separator = true;
                break;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_error(i + 1, "expected `key = value`"))?;
            let value = value.trim();
            let bad = |what: &str| parse_error(i + 1, format!("invalid {what} `{value}`"));
            match key.trim() {
                "qubits" => qubits = Some(value.parse::<usize>().map_err(|_| bad("qubit count"))?),
                "mode" => mode = Some(value.parse::<ControlMode>().map_err(|_| bad("mode"))?),
                "slices" => slices = Some(value.parse::<usize>().map_err(|_| bad("slice count"))?),
                "tau" => tau = Some(value.parse::<f64>().map_err(|_| bad("tau"))?),
                "cap" => cap = value.parse::<f64>().map_err(|_| bad("cap"))?,
                other => return Err(parse_error(i + 1, format!("unknown key `{other}`"))),
            }
        }
        if !saw_separator {
            return Err(parse_error(text.lines().count(), "missing `---` separator"));
        }
        let missing = |k: &str| parse_error(0, format!("missing header key `{k}`"));
        let qubits = qubits.ok_or_else(|| missing("qubits"))?;
        let mode = mode.ok_or_else(|| missing("mode"))?;
        let slices = slices.ok_or_else(|| missing("slices"))?;
        let tau = tau.ok_or_else(|| missing("tau"))?;
        let channels = mode.channels(qubits);

        let mut amplitudes = Vec::with_capacity(slices * channels);
        let mut rows = 0;
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let before = amplitudes.len();
            for field in line.split_whitespace() {
                let a = field
                    .parse::<f64>()
                    .map_err(|_| parse_error(i + 1, format!("invalid amplitude `{field}`")))?;
                amplitudes.push(a);
            }
            if amplitudes.len() - before != channels {
                return Err(parse_error(
                    i + 1,
                    format!("expected {channels} amplitudes, found {}", amplitudes.len() - before),
                ));
            }
            rows += 1;
        }
        if rows != slices {
            return Err(parse_error(0, format!("header says {slices} slices, found {rows}")));
        }
        Self::with_cap(qubits, mode, tau, cap, amplitudes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn pauli_label(self) -> u8 {
        match self {
            Axis::X => 1,
            Axis::Y => 2,
        }
    }
}

/// An ideal local rotation `exp(-i θ σ_α / 2)` with `θ = ±π/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rotation {
    pub site: usize,
    pub axis: Axis,
    pub positive: bool,
}

impl Rotation {
    pub fn plus(site: usize, axis: Axis) -> Self {
        Self {
            site,
            axis,
            positive: true,
        }
    }

    pub fn minus(site: usize, axis: Axis) -> Self {
        Self {
            site,
            axis,
            positive: false,
        }
    }

    pub fn angle(&self) -> f64 {
        if self.positive {
            PI / 2.0
        } else {
            -PI / 2.0
        }
    }

    pub fn inverse(&self) -> Self {
        Self {
            positive: !self.positive,
            ..*self
        }
    }

    /// The 2x2 gate `(I ∓ iσ)/√2`.
    pub fn gate(&self) -> ComplexMatrix {
        let s = if self.positive { -1.0 } else { 1.0 };
        let sigma = pauli(self.axis.pauli_label()).expect("axis label is valid");
        (ComplexMatrix::identity(2, 2) + sigma * Complex64::new(0.0, s)) * Complex64::new(FRAC_1_SQRT_2, 0.0)
    }

    /// The rotation embedded in an `n`-qubit register.
    pub fn matrix(&self, n: usize) -> Result<ComplexMatrix> {
        embed(n, self.site, &self.gate())
    }
}

/// A drift Hamiltonian together with the operators the pulse drives.
#[derive(Debug, Clone)]
pub struct ControlSystem {
    drift: ComplexMatrix,
    controls: ControlOperators,
}

impl ControlSystem {
    pub fn new(drift: ComplexMatrix, controls: ControlOperators) -> Result<Self> {
        check_hermitian(&drift)?;
        if drift.nrows() != controls.dim() {
            return Err(Error::DimensionMismatch {
                expected: controls.dim(),
                found: drift.nrows(),
            });
        }
        Ok(Self { drift, controls })
    }

    pub fn drift(&self) -> &ComplexMatrix {
        &self.drift
    }

    pub fn controls(&self) -> &ControlOperators {
        &self.controls
    }

    pub fn qubits(&self) -> usize {
        self.controls.qubits()
    }

    pub fn dim(&self) -> usize {
        self.controls.dim()
    }

    /// Fails unless `seq` was laid out for this system.
    pub fn check(&self, seq: &ControlSequence) -> Result<()> {
        if seq.qubits() != self.qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.qubits(),
                found: seq.qubits(),
            });
        }
        if seq.mode() != self.controls.mode() {
            return Err(invalid(format!(
                "sequence is {} but the system is driven {}",
                seq.mode().name(),
                self.controls.mode().name()
            )));
        }
        Ok(())
    }

    fn check_slice(&self, seq: &ControlSequence, m: usize) -> Result<()> {
        self.check(seq)?;
        if m >= seq.slices() {
            return Err(Error::IndexOutOfRange {
                what: "slice",
                index: m,
                limit: seq.slices(),
            });
        }
        Ok(())
    }

    /// `H_0 + Σ_k b_k[m] O_k`.
    pub fn slice_hamiltonian(&self, seq: &ControlSequence, m: usize) -> Result<ComplexMatrix> {
        self.check_slice(seq, m)?;
        let mut h = self.drift.clone();
        self.controls.add_control(&mut h, seq.slice(m))?;
        Ok(h)
    }

    /// `exp(-i tau (H_0 + Σ_k b_k[m] O_k))`.
    pub fn slice_propagator(&self, seq: &ControlSequence, m: usize) -> Result<ComplexMatrix> {
        expm_hermitian(&self.slice_hamiltonian(seq, m)?, seq.tau())
    }

    /// `C_{M-1} ... C_0`.
    pub fn total_propagator(&self, seq: &ControlSequence) -> Result<ComplexMatrix> {
        self.partial_propagator(seq, 0, seq.slices())
    }

    /// `C_{end-1} ... C_start`, the identity when the range is empty.
    pub fn partial_propagator(
        &self,
        seq: &ControlSequence,
        start: usize,
        end: usize,
    ) -> Result<ComplexMatrix> {
        self.check(seq)?;
        let mut u = ComplexMatrix::identity(self.dim(), self.dim());
        for m in start..end {
            u = self.slice_propagator(seq, m)? * u;
        }
        Ok(u)
    }

    /// `C_{M-1} ... C_p R C_{p-1} ... C_0` for `position = p ∈ 0..=M`.
    pub fn propagator_with_rotation(
        &self,
        seq: &ControlSequence,
        position: usize,
        rotation: Rotation,
    ) -> Result<ComplexMatrix> {
        self.check(seq)?;
        if position > seq.slices() {
            return Err(Error::IndexOutOfRange {
                what: "insertion position",
                index: position,
                limit: seq.slices() + 1,
            });
        }
        let r = rotation.matrix(self.qubits())?;
        let before = self.partial_propagator(seq, 0, position)?;
        let after = self.partial_propagator(seq, position, seq.slices())?;
        Ok(after * r * before)
    }
}

/// Unitary evolution of a state.
pub trait Evolve: Sized {
    /// `U|ψ>` for pure states and `UρU†` for density matrices.
    fn evolve(&self, u: &ComplexMatrix) -> Result<Self>;
}

impl Evolve for PureState {
    fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.nrows(),
            });
        }
        Ok(PureState::from_vector_unchecked(
            self.qubits(),
            u * self.amplitudes(),
        ))
    }
}

impl Evolve for DensityMatrix {
    fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.nrows(),
            });
        }
        Ok(DensityMatrix::from_matrix_unchecked(
            self.qubits(),
            u * self.matrix() * u.adjoint(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::build_ising;
    use crate::qcore::{max_abs, unitarity_deviation};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let a = ComplexMatrix::from_fn(dim, dim, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    fn random_instance(n: usize, mode: ControlMode, slices: usize, seed: u64) -> (ControlSystem, ControlSequence) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drift = random_hermitian(1 << n, &mut rng);
        let system = ControlSystem::new(drift, ControlOperators::new(mode, n).unwrap()).unwrap();
        let amps = (0..slices * mode.channels(n)).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let seq = ControlSequence::new(n, mode, 0.2, amps).unwrap();
        (system, seq)
    }

    fn zero_system(n: usize, mode: ControlMode) -> ControlSystem {
        let d = 1 << n;
        ControlSystem::new(ComplexMatrix::zeros(d, d), ControlOperators::new(mode, n).unwrap()).unwrap()
    }

    #[test]
    fn sequence_validation() {
        let g = ControlMode::Global;
        assert!(ControlSequence::new(1, g, 1e-3, vec![]).is_err());
        assert!(ControlSequence::new(1, g, 0.0, vec![0.0, 0.0]).is_err());
        assert!(ControlSequence::new(1, g, 1e-3, vec![0.0, 0.0, 1.0]).is_err());
        assert!(ControlSequence::new(1, g, 1e-3, vec![0.0, 1e6]).is_err());
        let seq = ControlSequence::new(2, ControlMode::PerSite, 1e-3, vec![1.0; 8]).unwrap();
        assert_eq!((seq.slices(), seq.channels()), (2, 4));
        let clipped = seq.with_amplitudes_clipped(vec![1e9; 8]).unwrap();
        assert!(clipped.amplitudes().iter().all(|&a| a == DEFAULT_AMPLITUDE_CAP));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let amps: Vec<f64> = (0..30).map(|_| rng.gen_range(-6e4..6e4)).collect();
        let seq = ControlSequence::new(3, ControlMode::PerSite, 6.0e-5, amps).unwrap();
        let text = seq.to_text();
        let back = ControlSequence::from_text(&text).unwrap();
        assert_eq!(back, seq);
        for (a, b) in back.amplitudes().iter().zip(seq.amplitudes()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.tau().to_bits(), seq.tau().to_bits());
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        let text = "qubits = 1\nmode = global\nslices = 1\ntau = 0.1\n---\n0.5 nope\n";
        match ControlSequence::from_text(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
        let short = "qubits = 1\nmode = global\nslices = 2\ntau = 0.1\n---\n0.5 0.5\n";
        assert!(ControlSequence::from_text(short).is_err());
    }

    #[test]
    fn slice_propagator_examples() {
        let system = zero_system(2, ControlMode::Global);
        let seq = ControlSequence::zeros(2, ControlMode::Global, 3, 0.1).unwrap();
        let u = system.slice_propagator(&seq, 1).unwrap();
        assert!(max_abs(&(u - ComplexMatrix::identity(4, 4))) < 1e-15);
        assert!(matches!(
            system.slice_propagator(&seq, 3),
            Err(Error::IndexOutOfRange { .. })
        ));

        // tau · b_x = π/4 gives exp(-i π/4 σx).
        let system = zero_system(1, ControlMode::Global);
        let tau = 0.01;
        let seq = ControlSequence::new(1, ControlMode::Global, tau, vec![PI / 4.0 / tau, 0.0]).unwrap();
        let u = system.slice_propagator(&seq, 0).unwrap();
        let expected = (ComplexMatrix::identity(2, 2) - pauli(1).unwrap() * Complex64::new(0.0, 1.0))
            * Complex64::new(FRAC_1_SQRT_2, 0.0);
        assert!(max_abs(&(u - expected)) < 1e-14);
    }

    #[test]
    fn slice_propagator_is_compositional() {
        for mode in [ControlMode::Global, ControlMode::PerSite] {
            let (system, seq) = random_instance(3, mode, 4, 5);
            for m in 0..4 {
                let h = system.drift() + system.controls().control_matrix(seq.slice(m)).unwrap();
                let oracle = expm_hermitian(&h, seq.tau()).unwrap();
                assert_eq!(system.slice_propagator(&seq, m).unwrap(), oracle);
            }
        }
    }

    #[test]
    fn total_propagator_examples() {
        let (system, seq) = random_instance(2, ControlMode::Global, 1, 11);
        assert_eq!(
            system.total_propagator(&seq).unwrap(),
            system.slice_propagator(&seq, 0).unwrap()
        );

        // Two identical slices are one slice of twice the length.
        let amps = seq.amplitudes().repeat(2);
        let doubled = ControlSequence::new(2, ControlMode::Global, seq.tau(), amps).unwrap();
        let long = ControlSequence::new(2, ControlMode::Global, 2.0 * seq.tau(), seq.amplitudes().to_vec()).unwrap();
        let diff = system.total_propagator(&doubled).unwrap() - system.total_propagator(&long).unwrap();
        assert!(max_abs(&diff) < 1e-12);

        let (system, seq) = random_instance(2, ControlMode::PerSite, 5, 12);
        let mut oracle = ComplexMatrix::identity(4, 4);
        for m in 0..5 {
            let h = system.slice_hamiltonian(&seq, m).unwrap();
            oracle = expm_hermitian(&h, seq.tau()).unwrap() * oracle;
        }
        let total = system.total_propagator(&seq).unwrap();
        assert!(max_abs(&(total.clone() - oracle)) < 1e-12);
        assert!(unitarity_deviation(&total) < 1e-9);
    }

    #[test]
    fn rotation_insertion_examples() {
        let system = zero_system(1, ControlMode::Global);
        let seq = ControlSequence::zeros(1, ControlMode::Global, 1, 1e-3).unwrap();
        let u = system.propagator_with_rotation(&seq, 1, Rotation::plus(0, Axis::X)).unwrap();
        let expected = (ComplexMatrix::identity(2, 2) - pauli(1).unwrap() * Complex64::new(0.0, 1.0))
            * Complex64::new(FRAC_1_SQRT_2, 0.0);
        assert!(max_abs(&(u - expected)) < 1e-15);
        assert!(system.propagator_with_rotation(&seq, 2, Rotation::plus(0, Axis::X)).is_err());
        assert!(system.propagator_with_rotation(&seq, 0, Rotation::plus(1, Axis::X)).is_err());

        let (system, seq) = random_instance(3, ControlMode::Global, 5, 21);
        for position in 0..=5 {
            for r in [Rotation::plus(2, Axis::Y), Rotation::minus(0, Axis::X)] {
                let with = system.propagator_with_rotation(&seq, position, r).unwrap();
                let before = system.partial_propagator(&seq, 0, position).unwrap();
                let after = system.partial_propagator(&seq, position, 5).unwrap();
                let oracle = &after * r.matrix(3).unwrap() * &before;
                assert!(max_abs(&(&with - oracle)) < 1e-12);

                // Inserting R and then R⁻¹ at the same position cancels.
                let pair = &after * r.inverse().matrix(3).unwrap() * r.matrix(3).unwrap() * &before;
                let total = system.total_propagator(&seq).unwrap();
                assert!(max_abs(&(pair - total)) < 1e-12);
            }
        }
    }

    #[test]
    fn evolve_examples() {
        let psi = PureState::ground(1);
        let flipped = psi.evolve(&pauli(1).unwrap()).unwrap();
        assert_eq!(flipped, PureState::basis(1, 1).unwrap());
        assert_eq!(psi.evolve(&ComplexMatrix::identity(2, 2)).unwrap(), psi);
        assert!(psi.evolve(&ComplexMatrix::identity(4, 4)).is_err());

        let (system, seq) = random_instance(2, ControlMode::Global, 3, 31);
        let u = system.total_propagator(&seq).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let v = crate::qcore::ComplexVector::from_fn(4, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let psi = PureState::normalized(v).unwrap();
        let via_pure = psi.evolve(&u).unwrap().to_density();
        let via_rho = psi.to_density().evolve(&u).unwrap();
        assert!(max_abs(&(via_pure.matrix() - via_rho.matrix())) < 1e-12);
    }

    #[test]
    fn ising_drift_sequence_is_unitary() {
        let system = ControlSystem::new(
            build_ising(3).unwrap(),
            ControlOperators::new(ControlMode::PerSite, 3).unwrap(),
        )
        .unwrap();
        let seq = ControlSequence::new(3, ControlMode::PerSite, 0.3, vec![0.7; 6 * 4]).unwrap();
        assert!(unitarity_deviation(&system.total_propagator(&seq).unwrap()) < 1e-9);
        let wrong = ControlSequence::zeros(3, ControlMode::Global, 4, 0.3).unwrap();
        assert!(system.total_propagator(&wrong).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn time_reversal(seed in any::<u64>(), n in 1usize..=3, slices in 1usize..=5, per_site in any::<bool>()) {
            let mode = if per_site { ControlMode::PerSite } else { ControlMode::Global };
            let (system, seq) = random_instance(n, mode, slices, seed);
            let mut reversed = Vec::with_capacity(seq.amplitudes().len());
            for m in (0..slices).rev() {
                reversed.extend(seq.slice(m).iter().map(|a| -a));
            }
            let back_seq = ControlSequence::new(n, mode, seq.tau(), reversed).unwrap();
            let back_system = ControlSystem::new(-system.drift().clone(), system.controls().clone()).unwrap();
            let forward = system.total_propagator(&seq).unwrap();
            let backward = back_system.total_propagator(&back_seq).unwrap();
            prop_assert!(max_abs(&(backward - forward.adjoint())) < 1e-9);
        }

        #[test]
        fn evolution_preserves_trace_and_purity(seed in any::<u64>(), n in 1usize..=3) {
            let (system, seq) = random_instance(n, ControlMode::Global, 3, seed);
            let u = system.total_propagator(&seq).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let v = crate::qcore::ComplexVector::from_fn(1 << n, |_, _| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let psi = PureState::normalized(v).unwrap();
            let out = psi.evolve(&u).unwrap();
            prop_assert!((out.amplitudes().norm() - 1.0).abs() < 1e-10);
            let rho = psi.to_density().evolve(&u).unwrap();
            prop_assert!((rho.trace().re - 1.0).abs() < 1e-10);
            prop_assert!((rho.purity() - 1.0).abs() < 1e-10);
        }
    }
}
