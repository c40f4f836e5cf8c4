//! Factories for the hidden target states.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hamiltonian::HamiltonianSpec;
use crate::qcore::{
    apply_local, check_hermitian, embed, expm_hermitian, identity, pauli, pauli_string, qubits_for_dim, ComplexMatrix,
    ComplexVector, PureState, ONE, ZERO,
};

/// `e^{-iht} |0...0>`.
pub fn dynamical_state(h: &ComplexMatrix, t: f64, n: usize) -> Result<PureState> {
    check_hermitian(h)?;
    if qubits_for_dim(h.nrows()) != Some(n) {
        return Err(Error::DimensionMismatch {
            expected: 1 << n,
            found: h.nrows(),
        });
    }
    let u = expm_hermitian(h, t)?;
    PureState::normalized(u.column(0).into_owned())
}

fn check_pair(n: usize, a: usize, b: usize) -> Result<()> {
    for site in [a, b] {
        if site >= n {
            return Err(Error::IndexOutOfRange {
                what: "site",
                index: site,
                limit: n,
            });
        }
    }
    if a == b {
        return Err(invalid(format!("control and target are both site {a}")));
    }
    Ok(())
}

/// Hadamard on `control`, then CNOT onto `target`, starting from `|0...0>`.
pub fn bell_state(n: usize, control: usize, target: usize) -> Result<PureState> {
    check_pair(n, control, target)?;
    let mut v = ComplexVector::zeros(1 << n);
    let both = (1usize << (n - 1 - control)) | (1usize << (n - 1 - target));
    v[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    v[both] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    PureState::new(v)
}

/// Permutation matrix of CNOT with the given control and target.
pub fn cnot_matrix(n: usize, control: usize, target: usize) -> Result<ComplexMatrix> {
    check_pair(n, control, target)?;
    let dim = 1usize << n;
    let (cbit, tbit) = (1usize << (n - 1 - control), 1usize << (n - 1 - target));
    let mut m = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        let out = if b & cbit != 0 { b ^ tbit } else { b };
        m[(out, b)] = ONE;
    }
    Ok(m)
}

/// How the `e^{-iπ/4 Z_c Z_t}` block of the CNOT decomposition is realized.
#[derive(Debug, Clone, Copy)]
pub enum CnotVariant<'a> {
    /// Free evolution for `1/2J` under the bare coupling `(π/2) J Z_c Z_t`.
    Ideal,
    /// Four free evolutions of `1/8J` under `drift`, interleaved with π pulses
    /// that cancel single-spin z evolution and spectator couplings.
    Refocused { drift: &'a ComplexMatrix },
}

/// `exp(-iθσ/2)` on `site`.
fn rotation(n: usize, site: usize, axis: u8, theta: f64) -> Result<ComplexMatrix> {
    let sigma = pauli(axis)?;
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let local = identity(2) * Complex64::new(c, 0.0) - sigma * Complex64::new(0.0, s);
    embed(n, site, &local)
}

/// `R_z(θ) = R_x(π/2) R_y(θ) R_x(-π/2)`, built from x and y pulses only.
fn z_rotation(n: usize, site: usize, theta: f64) -> Result<ComplexMatrix> {
    Ok(rotation(n, site, 1, FRAC_PI_2)? * rotation(n, site, 2, theta)? * rotation(n, site, 1, -FRAC_PI_2)?)
}

/// x rotations by the given angles applied together.
fn pulse(n: usize, angles: &[(usize, f64)]) -> Result<ComplexMatrix> {
    angles
        .iter()
        .try_fold(identity(1 << n), |acc, &(site, theta)| Ok(rotation(n, site, 1, theta)? * acc))
}

fn coupling_block(n: usize, control: usize, target: usize, j_hz: f64, variant: CnotVariant<'_>) -> Result<ComplexMatrix> {
    match variant {
        CnotVariant::Ideal => {
            let mut labels = vec![0u8; n];
            labels[control] = 3;
            labels[target] = 3;
            let zz = pauli_string(n, &labels)? * Complex64::new(FRAC_PI_2 * j_hz, 0.0);
            expm_hermitian(&zz, 1.0 / (2.0 * j_hz))
        }
        CnotVariant::Refocused { drift } => {
            if drift.nrows() != 1 << n {
                return Err(Error::DimensionMismatch {
                    expected: 1 << n,
                    found: drift.nrows(),
                });
            }
            let free = expm_hermitian(drift, 1.0 / (8.0 * j_hz))?;
            // The coupled pair flips together; spectators alternate between
            // two groups so every other coupling changes sign an even number
            // of times.
            let pair = [control, target];
            let spectators: Vec<usize> = (0..n).filter(|s| !pair.contains(s)).collect();
            let b: Vec<usize> = spectators.iter().copied().step_by(2).collect();
            let c: Vec<usize> = spectators.iter().copied().skip(1).step_by(2).collect();
            fn with(sites: &[usize], theta: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
                sites.iter().map(move |&s| (s, theta))
            }
            let p1: Vec<_> = with(&pair, PI).chain(with(&c, PI)).collect();
            let p2: Vec<_> = with(&b, PI).chain(with(&c, -PI)).collect();
            let p3: Vec<_> = with(&pair, -PI).chain(with(&c, PI)).collect();
            let p4: Vec<_> = with(&b, -PI).chain(with(&c, -PI)).collect();
            let mut u = identity(1 << n);
            for p in [p1, p2, p3, p4] {
                u = &free * pulse(n, &p)? * u;
            }
            Ok(u)
        }
    }
}

/// CNOT assembled as
/// `√i R_z^c(π/2) R_z^t(-π/2) R_x^t(π/2) U(1/2J) R_y^t(π/2)`
/// from x/y pulses and J-coupling evolution.
pub fn cnot_via_jcoupling(
    n: usize,
    control: usize,
    target: usize,
    j_hz: f64,
    variant: CnotVariant<'_>,
) -> Result<ComplexMatrix> {
    check_pair(n, control, target)?;
    if !(j_hz > 0.0 && j_hz.is_finite()) {
        return Err(invalid(format!("coupling must be positive, got {j_hz} Hz")));
    }
    let u = coupling_block(n, control, target, j_hz, variant)?;
    let sqrt_i = Complex64::from_polar(1.0, FRAC_PI_4);
    let gate = z_rotation(n, control, FRAC_PI_2)?
        * z_rotation(n, target, -FRAC_PI_2)?
        * rotation(n, target, 1, FRAC_PI_2)?
        * u
        * rotation(n, target, 2, FRAC_PI_2)?;
    Ok(gate * sqrt_i)
}

/// Largest entrywise difference between `a` and `b` after rotating `a`'s
/// global phase to agree with `b` on `b`'s largest-magnitude entry.
pub fn phase_aligned_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: a.nrows(),
        });
    }
    let (idx, _) = b
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
        .ok_or_else(|| invalid("empty matrix"))?;
    let (pa, pb) = (a.as_slice()[idx], b.as_slice()[idx]);
    let phase = if pa.norm() > 0.0 {
        (pb / pa) / (pb / pa).norm()
    } else {
        ONE
    };
    Ok(a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x * phase - y).norm())))
}

/// `depth` layers of seeded random single-qubit rotations `R_z R_y R_z` on
/// every qubit followed by CZ on each nearest-neighbor pair.
pub fn random_lowdepth_state(n: usize, depth: usize, seed: u64) -> Result<PureState> {
    if n == 0 {
        return Err(invalid("need at least one qubit"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = PureState::ground(n).into_amplitudes();
    for _ in 0..depth {
        for site in 0..n {
            let (a, b, c): (f64, f64, f64) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..PI), rng.gen_range(0.0..2.0 * PI));
            let rz = |t: f64| {
                ComplexMatrix::from_row_slice(2, 2, &[Complex64::from_polar(1.0, -t / 2.0), ZERO, ZERO, Complex64::from_polar(1.0, t / 2.0)])
            };
            let (cb, sb) = ((b / 2.0).cos(), (b / 2.0).sin());
            let ry = ComplexMatrix::from_row_slice(2, 2, &[cb.into(), (-sb).into(), sb.into(), cb.into()]);
            apply_local(&mut v, n, site, &(rz(c) * ry * rz(a)));
        }
        for site in 0..n.saturating_sub(1) {
            let mask = (1usize << (n - 1 - site)) | (1usize << (n - 2 - site));
            for (i, z) in v.iter_mut().enumerate() {
                if i & mask == mask {
                    *z = -*z;
                }
            }
        }
    }
    PureState::normalized(v)
}

/// Target-state recipe as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetRecipe {
    Dynamical { hamiltonian: HamiltonianSpec, time: f64 },
    Bell { control: usize, target: usize },
    Random { depth: usize, seed: u64 },
}

impl TargetRecipe {
    pub fn build(&self, n: usize) -> Result<PureState> {
        match self {
            TargetRecipe::Dynamical { hamiltonian, time } => {
                if hamiltonian.qubits() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: hamiltonian.qubits(),
                    });
                }
                dynamical_state(&hamiltonian.build()?, *time, n)
            }
            TargetRecipe::Bell { control, target } => bell_state(n, *control, *target),
            TargetRecipe::Random { depth, seed } => random_lowdepth_state(n, *depth, *seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{build_ising, build_nmr, CROTONIC_J23_HZ};
    use crate::qcore::{max_abs, unitarity_deviation, STATE_TOL};
    use proptest::prelude::*;

    fn norm_error(s: &PureState) -> f64 {
        (s.amplitudes().norm() - 1.0).abs()
    }

    #[test]
    fn dynamical_examples() {
        let h = build_ising(3).unwrap();
        let start = dynamical_state(&h, 0.0, 3).unwrap();
        assert!((start.amplitudes() - PureState::ground(3).amplitudes()).norm() < 1e-14);

        let flip = dynamical_state(&pauli(1).unwrap(), FRAC_PI_2, 1).unwrap();
        assert!(flip.amplitudes()[0].norm() < 1e-15);
        assert!((flip.amplitudes()[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);

        let full = dynamical_state(&h, 0.7, 3).unwrap();
        let half = expm_hermitian(&h, 0.35).unwrap();
        let composed = &half * &half * PureState::ground(3).amplitudes();
        assert!((full.amplitudes() - composed).norm() < 1e-12);

        assert!(dynamical_state(&h, 1.0, 2).is_err());
        let mut bad = h.clone();
        bad[(0, 1)] += Complex64::new(1.0, 0.0);
        assert!(dynamical_state(&bad, 1.0, 3).is_err());
    }

    #[test]
    fn bell_examples() {
        let s = bell_state(2, 0, 1).unwrap();
        let r = FRAC_1_SQRT_2;
        let expected: Vec<Complex64> = [r, 0.0, 0.0, r].iter().map(|&x| x.into()).collect();
        assert_eq!(s.amplitudes().as_slice(), expected.as_slice());

        let s = bell_state(4, 1, 2).unwrap();
        for (i, a) in s.amplitudes().iter().enumerate() {
            let want = if i == 0b0000 || i == 0b0110 { r } else { 0.0 };
            assert_eq!(a.re, want);
            assert_eq!(a.im, 0.0);
        }
        let marginal = s.to_density().partial_trace(&[1]).unwrap();
        assert!((marginal.purity() - 0.5).abs() < 1e-12);
        assert!(bell_state(4, 2, 2).is_err());
        assert!(bell_state(2, 0, 2).is_err());
    }

    #[test]
    fn ideal_cnot_matches_permutation() {
        let u = cnot_via_jcoupling(4, 1, 2, CROTONIC_J23_HZ, CnotVariant::Ideal).unwrap();
        assert!(unitarity_deviation(&u) < 1e-12);
        let target = cnot_matrix(4, 1, 2).unwrap();
        assert!(phase_aligned_distance(&u, &target).unwrap() < 1e-8);

        let ground = PureState::ground(4).into_amplitudes();
        let out = &u * &ground;
        assert!((out[0].norm() - 1.0).abs() < 1e-12);
        let out = &u * PureState::basis(4, 0b0100).unwrap().amplitudes();
        assert!((out[0b0110].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refocused_cnot_under_full_register_drift() {
        let drift = crate::hamiltonian::HamiltonianSpec::crotonic_illustrative().build().unwrap();
        let u = cnot_via_jcoupling(4, 1, 2, CROTONIC_J23_HZ, CnotVariant::Refocused { drift: &drift }).unwrap();
        let err = phase_aligned_distance(&u, &cnot_matrix(4, 1, 2).unwrap()).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn cnot_rejects_bad_inputs() {
        assert!(cnot_via_jcoupling(4, 1, 2, 0.0, CnotVariant::Ideal).is_err());
        assert!(cnot_via_jcoupling(4, 1, 2, -3.0, CnotVariant::Ideal).is_err());
        assert!(cnot_via_jcoupling(4, 1, 1, 10.0, CnotVariant::Ideal).is_err());
        let small = ComplexMatrix::zeros(4, 4);
        assert!(cnot_via_jcoupling(4, 1, 2, 10.0, CnotVariant::Refocused { drift: &small }).is_err());
    }

    #[test]
    fn random_lowdepth_examples() {
        assert_eq!(random_lowdepth_state(3, 0, 9).unwrap(), PureState::ground(3));
        assert_eq!(random_lowdepth_state(3, 2, 9).unwrap(), random_lowdepth_state(3, 2, 9).unwrap());
        assert_ne!(random_lowdepth_state(3, 2, 9).unwrap(), random_lowdepth_state(3, 2, 10).unwrap());
        let entangled = (0..10)
            .filter(|&seed| {
                let s = random_lowdepth_state(2, 1, seed).unwrap().to_density();
                s.partial_trace(&[0]).unwrap().purity() < 1.0 - 1e-6
            })
            .count();
        assert!(entangled >= 9);
    }

    #[test]
    fn recipes_build() {
        let bell: TargetRecipe = serde_json::from_str(r#"{"kind":"bell","control":1,"target":2}"#).unwrap();
        assert_eq!(bell.build(4).unwrap(), bell_state(4, 1, 2).unwrap());
        let dynamical = TargetRecipe::Dynamical {
            hamiltonian: HamiltonianSpec::Ising { qubits: 3 },
            time: 0.6,
        };
        assert!(dynamical.build(4).is_err());
        assert!(norm_error(&dynamical.build(3).unwrap()) < STATE_TOL);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dynamical_semigroup(t1 in -2.0f64..2.0, t2 in -2.0f64..2.0) {
            let h = build_ising(3).unwrap();
            let a = dynamical_state(&h, t1 + t2, 3).unwrap();
            let b = expm_hermitian(&h, t2).unwrap() * dynamical_state(&h, t1, 3).unwrap().amplitudes();
            prop_assert!((a.amplitudes() - b).norm() < 1e-12);
            prop_assert!(norm_error(&a) < 1e-10);
        }

        #[test]
        fn refocusing_cancels_single_spin_evolution(
            shifts in proptest::collection::vec(-2000.0f64..2000.0, 4),
            j in 10.0f64..200.0,
            pair in (0usize..4, 1usize..4),
        ) {
            let (c, t) = (pair.0, (pair.0 + pair.1) % 4);
            let mut couplings = vec![vec![0.0; 4]; 4];
            couplings[c][t] = j;
            couplings[t][c] = j;
            let drift = build_nmr(&shifts, &couplings).unwrap();
            let u = cnot_via_jcoupling(4, c, t, j, CnotVariant::Refocused { drift: &drift }).unwrap();
            prop_assert!(phase_aligned_distance(&u, &cnot_matrix(4, c, t).unwrap()).unwrap() < 1e-8);
        }

        #[test]
        fn factories_are_normalized(seed in any::<u64>(), n in 1usize..6, depth in 0usize..4) {
            prop_assert!(norm_error(&random_lowdepth_state(n, depth, seed).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn phase_alignment_ignores_global_phase() {
        let a = cnot_matrix(2, 0, 1).unwrap();
        let b = &a * Complex64::from_polar(1.0, 1.234);
        assert!(phase_aligned_distance(&b, &a).unwrap() < 1e-15);
        assert!(max_abs(&(&b - &a)) > 0.5);
    }
}
