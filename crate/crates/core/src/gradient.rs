//! Gradient estimators.
//!
//! [`grad_method1`] and [`grad_method2`] learn the gradient from device
//! experiments only. [`grad_oracle`] reads the target directly and exists to
//! check the other two.

use num_complex::Complex64;

use crate::control::{Axis, ControlSequence, ControlSystem, Rotation};
use crate::device::{Device, Experiment};
use crate::error::{invalid, Error, Result};
use crate::qcore::{expm_hermitian, max_abs, ComplexMatrix, DensityMatrix};

/// `∂f/∂b_k[m]` in the layout of a [`ControlSequence`], units 1/(rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    slices: usize,
    channels: usize,
    entries: Vec<f64>,
}

impl GradientVector {
    pub fn new(slices: usize, channels: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != slices * channels {
            return Err(Error::DimensionMismatch {
                expected: slices * channels,
                found: entries.len(),
            });
        }
        Ok(Self {
            slices,
            channels,
            entries,
        })
    }

    pub fn zeros_like(seq: &ControlSequence) -> Self {
        Self {
            slices: seq.slices(),
            channels: seq.channels(),
            entries: vec![0.0; seq.amplitudes().len()],
        }
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, m: usize, channel: usize) -> f64 {
        self.entries[m * self.channels + channel]
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, g| a.max(g.abs()))
    }

    /// Largest entrywise difference to `other`.
    pub fn max_abs_diff(&self, other: &GradientVector) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs()))
    }

    fn check_shape(&self, seq: &ControlSequence) -> Result<()> {
        if self.slices != seq.slices() || self.channels != seq.channels() {
            return Err(Error::DimensionMismatch {
                expected: seq.amplitudes().len(),
                found: self.entries.len(),
            });
        }
        Ok(())
    }
}

/// Rotation-insertion estimate
/// `g_k[m] = τ Σ_i [f(R^i_α(+π/2) after slice m) − f(R^i_α(−π/2) after slice m)]`,
/// summed over the sites driven by channel `k`. Exact to first order in `τ`.
/// Costs `4 n M` experiments in either control mode.
pub fn grad_method1(device: &Device, seq: &ControlSequence) -> Result<GradientVector> {
    device.system().check(seq)?;
    let n = seq.qubits();
    let mode = seq.mode();
    let mut batch = Vec::with_capacity(4 * n * seq.slices());
    let mut owner = Vec::with_capacity(batch.capacity());
    for m in 0..seq.slices() {
        for channel in 0..seq.channels() {
            let (label, sites) = mode.channel_target(n, channel);
            let axis = if label == 1 { Axis::X } else { Axis::Y };
            for site in sites {
                for rotation in [Rotation::plus(site, axis), Rotation::minus(site, axis)] {
                    batch.push(Experiment::Rotated {
                        seq,
                        position: m + 1,
                        rotation,
                    });
                    owner.push((m * seq.channels() + channel, rotation.positive));
                }
            }
        }
    }
    let values = device.run(&batch)?;
    let mut grad = GradientVector::zeros_like(seq);
    for ((index, positive), f) in owner.into_iter().zip(values) {
        let sign = if positive { 1.0 } else { -1.0 };
        grad.entries[index] += sign * seq.tau() * f;
    }
    Ok(grad)
}

/// Forward difference `(f(b + δ e_k[m]) − f(b)) / δ`. Returns the gradient
/// and the baseline fitness `f(b)`. Costs `1 + M K` experiments for `K`
/// channels.
pub fn grad_method2(device: &Device, seq: &ControlSequence, delta: f64) -> Result<(GradientVector, f64)> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {delta}")));
    }
    let mut batch = Vec::with_capacity(1 + seq.amplitudes().len());
    batch.push(Experiment::Fitness(seq));
    for slice in 0..seq.slices() {
        for channel in 0..seq.channels() {
            batch.push(Experiment::Shifted {
                seq,
                slice,
                channel,
                delta,
            });
        }
    }
    let values = device.run(&batch)?;
    let baseline = values[0];
    let entries = values[1..].iter().map(|f| (f - baseline) / delta).collect();
    Ok((GradientVector::new(seq.slices(), seq.channels(), entries)?, baseline))
}

/// Central difference `(f(b + δ) − f(b − δ)) / 2δ` computed with dense
/// propagators and full knowledge of `target`.
pub fn grad_oracle(
    system: &ControlSystem,
    target: &DensityMatrix,
    seq: &ControlSequence,
    delta: f64,
) -> Result<GradientVector> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid(format!("finite-difference step must be positive, got {delta}")));
    }
    system.check(seq)?;
    if target.dim() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            found: target.dim(),
        });
    }
    let slices = seq.slices();
    let dim = system.dim();
    let propagators = (0..slices)
        .map(|m| system.slice_propagator(seq, m))
        .collect::<Result<Vec<_>>>()?;

    // states[m]: target after the first m slices.
    let mut states = Vec::with_capacity(slices);
    let mut rho = target.matrix().clone();
    for u in &propagators {
        states.push(rho.clone());
        rho = u * &rho * u.adjoint();
    }
    // rows[m]: <0| C_{M-1} ... C_m, so rows[slices] = <0|.
    let mut rows = vec![ComplexMatrix::zeros(1, dim); slices + 1];
    rows[slices][(0, 0)] = Complex64::new(1.0, 0.0);
    for m in (0..slices).rev() {
        rows[m] = &rows[m + 1] * &propagators[m];
    }

    let ops = system.controls().operators();
    let mut grad = GradientVector::zeros_like(seq);
    for m in 0..slices {
        let h = system.slice_hamiltonian(seq, m)?;
        for (k, op) in ops.iter().enumerate() {
            let f = |shift: f64| -> Result<f64> {
                let u = expm_hermitian(&(&h + op * Complex64::new(shift, 0.0)), seq.tau())?;
                let w = &rows[m + 1] * u;
                Ok((&w * &states[m] * w.adjoint())[(0, 0)].re)
            };
            grad.entries[m * seq.channels() + k] = (f(delta)? - f(-delta)?) / (2.0 * delta);
        }
    }
    Ok(grad)
}

/// Largest entry of `[σ^i_α, ρ] − i (R₊ ρ R₊† − R₋ ρ R₋†)` for the rotations
/// `R± = exp(∓iπσ^i_α/4)` used by [`grad_method1`].
pub fn commutator_residual(rho: &ComplexMatrix, site: usize, axis: Axis) -> Result<f64> {
    let n = crate::qcore::qubits_for_dim(rho.nrows())
        .ok_or_else(|| invalid("matrix dimension is not a power of two"))?;
    let sigma = crate::qcore::embed(n, site, &crate::qcore::pauli(axis.pauli_label())?)?;
    let plus = Rotation::plus(site, axis).matrix(n)?;
    let minus = Rotation::minus(site, axis).matrix(n)?;
    let commutator = &sigma * rho - rho * &sigma;
    let rotated = &plus * rho * plus.adjoint() - &minus * rho * minus.adjoint();
    Ok(max_abs(&(commutator - rotated * Complex64::new(0.0, 1.0))))
}

/// Applies `step` after checking that `grad` has the layout of `seq`.
pub(crate) fn ascend(seq: &ControlSequence, grad: &GradientVector, beta: f64) -> Result<ControlSequence> {
    grad.check_shape(seq)?;
    let amplitudes = seq
        .amplitudes()
        .iter()
        .zip(grad.entries())
        .map(|(b, g)| b + beta * g)
        .collect();
    seq.with_amplitudes_clipped(amplitudes)
}
