//! The simulated quantum processor.
//!
//! A [`Device`] owns the unknown state and answers fitness and observable
//! queries about it under a [`MeasurementModel`]. Nothing about the state is
//! reachable except through those queries, each of which is counted as one
//! experiment.
//!
//! ```compile_fail
//! use pulsetomo::device::{Device, MeasurementModel};
//! fn peek(device: &Device) {
//!     let _ = &device.target;
//! }
//! ```
//!
//! Queries are evaluated on state vectors. For every distinct sequence in a
//! batch the device propagates the target's eigenvectors forward slice by
//! slice and `|0...0>` backward, after which a rotated or single-slice
//! perturbed query costs one local gate or one short Krylov propagation.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{ControlSequence, ControlSystem, Rotation};
use crate::error::{invalid, Error, Result};
use crate::chebyshev::expv;
use crate::qcore::{
    apply_local, check_hermitian, hermitian_eigen, ComplexMatrix, ComplexVector, DensityMatrix,
    PureState,
};

/// Eigen-components of the target lighter than this are dropped.
const WEIGHT_FLOOR: f64 = 1e-14;

/// How a measured expectation value is turned into a reported number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementModel {
    /// The exact expectation value.
    Exact,
    /// The mean of `count` projective shots. Each experiment draws from its
    /// own stream of a generator seeded with `seed`, keyed by the experiment
    /// index, so results do not depend on evaluation order.
    Shots { count: u64, seed: u64 },
    /// The final state is replaced by `(1 - p) ρ + p I / 2^n` before being
    /// read out by `then`.
    Depolarizing { p: f64, then: Box<MeasurementModel> },
}

impl MeasurementModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasurementModel::Exact => Ok(()),
            MeasurementModel::Shots { count, .. } => {
                if *count == 0 {
                    Err(invalid("shot count must be at least 1"))
                } else {
                    Ok(())
                }
            }
            MeasurementModel::Depolarizing { p, then } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid(format!("depolarizing strength {p} is outside [0, 1]")));
                }
                if matches!(**then, MeasurementModel::Depolarizing { .. }) {
                    return Err(invalid("depolarizing channels cannot be nested"));
                }
                then.validate()
            }
        }
    }

    fn depolarizing(&self) -> f64 {
        match self {
            MeasurementModel::Depolarizing { p, .. } => *p,
            _ => 0.0,
        }
    }

    fn shots(&self) -> Option<(u64, u64)> {
        match self {
            MeasurementModel::Exact => None,
            MeasurementModel::Shots { count, seed } => Some((*count, *seed)),
            MeasurementModel::Depolarizing { then, .. } => then.shots(),
        }
    }
}

/// One query to the device.
#[derive(Debug, Clone, Copy)]
pub enum Experiment<'a> {
    /// `Tr(|0><0| C ρ C†)`.
    Fitness(&'a ControlSequence),
    /// Fitness with `rotation` inserted after the first `position` slices.
    Rotated {
        seq: &'a ControlSequence,
        position: usize,
        rotation: Rotation,
    },
    /// Fitness of `seq` with one amplitude shifted by `delta` (rad/s).
    Shifted {
        seq: &'a ControlSequence,
        slice: usize,
        channel: usize,
        delta: f64,
    },
    /// `Tr(O C ρ C†)` for a Hermitian observable.
    Observable {
        seq: &'a ControlSequence,
        observable: &'a ComplexMatrix,
    },
}

impl<'a> Experiment<'a> {
    fn sequence(&self) -> &'a ControlSequence {
        match *self {
            Experiment::Fitness(seq)
            | Experiment::Rotated { seq, .. }
            | Experiment::Shifted { seq, .. }
            | Experiment::Observable { seq, .. } => seq,
        }
    }

    fn needs_history(&self) -> bool {
        matches!(self, Experiment::Rotated { .. } | Experiment::Shifted { .. })
    }
}

pub struct Device {
    system: ControlSystem,
    target: Vec<(f64, ComplexVector)>,
    model: MeasurementModel,
    experiments: AtomicU64,
}

impl Device {
    pub fn new(system: ControlSystem, target: &DensityMatrix, model: MeasurementModel) -> Result<Self> {
        model.validate()?;
        if target.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                found: target.dim(),
            });
        }
        Ok(Self {
            system,
            target: target.spectrum(WEIGHT_FLOOR),
            model,
            experiments: AtomicU64::new(0),
        })
    }

    pub fn with_pure_target(
        system: ControlSystem,
        target: &PureState,
        model: MeasurementModel,
    ) -> Result<Self> {
        model.validate()?;
        if target.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                found: target.dim(),
            });
        }
        Ok(Self {
            system,
            target: vec![(1.0, target.amplitudes().clone())],
            model,
            experiments: AtomicU64::new(0),
        })
    }

    /// The drift and control operators; these are known to the experimenter.
    pub fn system(&self) -> &ControlSystem {
        &self.system
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    pub fn qubits(&self) -> usize {
        self.system.qubits()
    }

    /// Number of experiments run so far.
    pub fn experiment_count(&self) -> u64 {
        self.experiments.load(Ordering::SeqCst)
    }

    pub fn measure_fitness(&self, seq: &ControlSequence) -> Result<f64> {
        Ok(self.run(&[Experiment::Fitness(seq)])?[0])
    }

    /// Fitness with `rotation` inserted after the first `position` slices.
    pub fn measure_fitness_with_rotation(
        &self,
        seq: &ControlSequence,
        position: usize,
        rotation: Rotation,
    ) -> Result<f64> {
        Ok(self.run(&[Experiment::Rotated {
            seq,
            position,
            rotation,
        }])?[0])
    }

    pub fn measure_observable(&self, seq: &ControlSequence, observable: &ComplexMatrix) -> Result<f64> {
        Ok(self.run(&[Experiment::Observable { seq, observable }])?[0])
    }

    /// Runs a batch of experiments and returns one reading per experiment, in
    /// order. The batch is validated first; an invalid batch runs nothing and
    /// costs nothing.
    pub fn run(&self, batch: &[Experiment<'_>]) -> Result<Vec<f64>> {
        for e in batch {
            self.validate(e)?;
        }
        let first = self.experiments.fetch_add(batch.len() as u64, Ordering::SeqCst);

        // Group by sequence identity; each group shares one trajectory.
        let mut groups: Vec<(&ControlSequence, bool)> = Vec::new();
        let mut index: HashMap<*const ControlSequence, usize> = HashMap::new();
        let mut group_of = Vec::with_capacity(batch.len());
        for e in batch {
            let seq = e.sequence();
            let g = *index.entry(seq as *const _).or_insert_with(|| {
                groups.push((seq, false));
                groups.len() - 1
            });
            groups[g].1 |= e.needs_history();
            group_of.push(g);
        }
        let trajectories: Vec<Trajectory> = groups
            .par_iter()
            .map(|&(seq, history)| self.trajectory(seq, history))
            .collect();

        let observables: Vec<Option<Spectrum>> = batch
            .par_iter()
            .map(|e| match e {
                Experiment::Observable { observable, .. } => Some(Spectrum::of(observable)),
                _ => None,
            })
            .collect();

        Ok(batch
            .par_iter()
            .enumerate()
            .map(|(i, e)| {
                let traj = &trajectories[group_of[i]];
                let outcomes = match e {
                    Experiment::Observable { .. } => {
                        let spec = observables[i].as_ref().expect("spectrum computed above");
                        spec.outcomes(&self.target_final(traj), self.model.depolarizing())
                    }
                    _ => {
                        let f = self.raw_fitness(e, traj);
                        let p = self.model.depolarizing();
                        let dim = self.system.dim() as f64;
                        let f = (1.0 - p) * f + p / dim;
                        vec![(1.0, f), (0.0, 1.0 - f)]
                    }
                };
                self.read_out(&outcomes, first + i as u64)
            })
            .collect())
    }

    fn validate(&self, e: &Experiment<'_>) -> Result<()> {
        let seq = e.sequence();
        self.system.check(seq)?;
        match *e {
            Experiment::Fitness(_) => {}
            Experiment::Rotated {
                position, rotation, ..
            } => {
                if position > seq.slices() {
                    return Err(Error::IndexOutOfRange {
                        what: "insertion position",
                        index: position,
                        limit: seq.slices() + 1,
                    });
                }
                if rotation.site >= self.qubits() {
                    return Err(Error::IndexOutOfRange {
                        what: "qubit",
                        index: rotation.site,
                        limit: self.qubits(),
                    });
                }
            }
            Experiment::Shifted {
                slice,
                channel,
                delta,
                ..
            } => {
                if slice >= seq.slices() {
                    return Err(Error::IndexOutOfRange {
                        what: "slice",
                        index: slice,
                        limit: seq.slices(),
                    });
                }
                if channel >= seq.channels() {
                    return Err(Error::IndexOutOfRange {
                        what: "channel",
                        index: channel,
                        limit: seq.channels(),
                    });
                }
                if !delta.is_finite() {
                    return Err(invalid("amplitude shift must be finite"));
                }
            }
            Experiment::Observable { observable, .. } => {
                check_hermitian(observable)?;
                if observable.nrows() != self.system.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.system.dim(),
                        found: observable.nrows(),
                    });
                }
            }
        }
        Ok(())
    }

    fn trajectory(&self, seq: &ControlSequence, history: bool) -> Trajectory {
        let slices = seq.slices();
        let hamiltonians: Vec<ComplexMatrix> = (0..slices)
            .map(|m| self.system.slice_hamiltonian(seq, m).expect("sequence validated"))
            .collect();
        let tau = seq.tau();

        let mut forward = Vec::with_capacity(if history { slices + 1 } else { 1 });
        let mut current: Vec<ComplexVector> = self.target.iter().map(|(_, v)| v.clone()).collect();
        for h in &hamiltonians {
            if history {
                forward.push(current.clone());
            }
            current = current.iter().map(|v| expv(h, tau, v)).collect();
        }
        forward.push(current);

        let mut backward = Vec::new();
        if history {
            let mut b = ComplexVector::zeros(self.system.dim());
            b[0] = Complex64::new(1.0, 0.0);
            backward.push(b.clone());
            for h in hamiltonians.iter().rev() {
                b = expv(h, -tau, &b);
                backward.push(b.clone());
            }
            backward.reverse();
        }
        Trajectory {
            hamiltonians,
            tau,
            forward,
            backward,
        }
    }

    /// Final evolved eigenvectors of the target.
    fn target_final<'t>(&self, traj: &'t Trajectory) -> Vec<(f64, &'t ComplexVector)> {
        let last = traj.forward.last().expect("trajectory has a final state");
        self.target.iter().map(|(p, _)| *p).zip(last.iter()).collect()
    }

    fn raw_fitness(&self, e: &Experiment<'_>, traj: &Trajectory) -> f64 {
        let weights = self.target.iter().map(|(p, _)| *p);
        let f: f64 = match *e {
            Experiment::Fitness(_) => weights
                .zip(traj.forward.last().unwrap())
                .map(|(p, v)| p * v[0].norm_sqr())
                .sum(),
            Experiment::Rotated {
                position, rotation, ..
            } => {
                let gate = rotation.gate();
                let n = self.qubits();
                weights
                    .zip(&traj.forward[position])
                    .map(|(p, v)| {
                        let mut w = v.clone();
                        apply_local(&mut w, n, rotation.site, &gate);
                        p * traj.backward[position].dotc(&w).norm_sqr()
                    })
                    .sum()
            }
            Experiment::Shifted {
                slice,
                channel,
                delta,
                ..
            } => {
                let mut h = traj.hamiltonians[slice].clone();
                let op = &self.system.controls().operators()[channel];
                h.zip_apply(op, |x, y| *x += y * delta);
                weights
                    .zip(&traj.forward[slice])
                    .map(|(p, v)| {
                        let w = expv(&h, traj.tau, v);
                        p * traj.backward[slice + 1].dotc(&w).norm_sqr()
                    })
                    .sum()
            }
            Experiment::Observable { .. } => unreachable!("observables are read out separately"),
        };
        f.clamp(0.0, 1.0)
    }

    /// Exact mean or shot-sampled mean of `(value, probability)` outcomes.
    fn read_out(&self, outcomes: &[(f64, f64)], index: u64) -> f64 {
        match self.model.shots() {
            None => outcomes.iter().map(|(v, p)| v * p).sum(),
            Some((count, seed)) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(index);
                let mut remaining = count;
                let mut mass = 1.0;
                let mut total = 0.0;
                for (k, &(value, p)) in outcomes.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let hits = if k + 1 == outcomes.len() || mass <= p {
                        remaining
                    } else {
                        let q = (p / mass).clamp(0.0, 1.0);
                        Binomial::new(remaining, q).expect("probability in [0, 1]").sample(&mut rng)
                    };
                    total += value * hits as f64;
                    remaining -= hits;
                    mass -= p;
                }
                total / count as f64
            }
        }
    }
}

struct Trajectory {
    hamiltonians: Vec<ComplexMatrix>,
    tau: f64,
    /// `forward[p][k]`: eigenvector `k` of the target after `p` slices. Only
    /// the final entry is kept when no history was requested.
    forward: Vec<Vec<ComplexVector>>,
    /// `backward[p] = (C_{M-1} ... C_p)† |0...0>`.
    backward: Vec<ComplexVector>,
}

/// Eigen-decomposition of an observable, for readout.
struct Spectrum {
    values: Vec<f64>,
    /// `None` when the observable is diagonal in the computational basis.
    vectors: Option<ComplexMatrix>,
}

impl Spectrum {
    fn of(obs: &ComplexMatrix) -> Self {
        let d = obs.nrows();
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || obs[(i, j)].norm() == 0.0));
        if diagonal {
            Spectrum {
                values: (0..d).map(|i| obs[(i, i)].re).collect(),
                vectors: None,
            }
        } else {
            let sym = (obs + obs.adjoint()).scale(0.5);
            let (values, vectors) = hermitian_eigen(&sym);
            Spectrum {
                values,
                vectors: Some(vectors),
            }
        }
    }

    /// Outcome probabilities of the (depolarized) evolved state.
    fn outcomes(&self, state: &[(f64, &ComplexVector)], depolarizing: f64) -> Vec<(f64, f64)> {
        let d = self.values.len();
        let mut probs = vec![0.0; d];
        for &(w, v) in state {
            match &self.vectors {
                None => {
                    for (i, p) in probs.iter_mut().enumerate() {
                        *p += w * v[i].norm_sqr();
                    }
                }
                Some(vectors) => {
                    let amps = vectors.adjoint() * v;
                    for (i, p) in probs.iter_mut().enumerate() {
                        *p += w * amps[i].norm_sqr();
                    }
                }
            }
        }
        self.values
            .iter()
            .zip(probs)
            .map(|(&value, p)| (value, (1.0 - depolarizing) * p + depolarizing / d as f64))
            .collect()
    }
}

/// `Z ⊗ |0...0><0...0|` on qubit 0 and the remaining `n - 1` qubits: `+1` on
/// `|0...0>`, `-1` on `|10...0>`, zero elsewhere.
pub fn z1_observable(n: usize) -> ComplexMatrix {
    let d = 1usize << n;
    let mut m = ComplexMatrix::zeros(d, d);
    m[(0, 0)] = Complex64::new(1.0, 0.0);
    m[(d / 2, d / 2)] = Complex64::new(-1.0, 0.0);
    m
}
