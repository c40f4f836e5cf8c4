//! Closed-loop gradient ascent on the device fitness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::control::{ControlSequence, DEFAULT_AMPLITUDE_CAP};
use crate::device::Device;
use crate::error::{invalid, Result};
use crate::gradient::{ascend, grad_method1, grad_method2, GradientVector};
use crate::hamiltonian::ControlMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GradientMethod {
    /// Rotation insertion, `4nM` experiments per gradient.
    Method1,
    /// Forward differences with step `delta` (rad/s).
    Method2 { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    Fixed {
        beta: f64,
    },
    /// Armijo backtracking: accept `β` once
    /// `f(b + βg) ≥ f(b) + c β |g|²`, otherwise multiply `β` by `shrink`.
    /// After an accepted step the next search starts from `grow · β`.
    Backtracking {
        initial: f64,
        shrink: f64,
        grow: f64,
        sufficient_increase: f64,
        max_probes: usize,
    },
}

impl StepRule {
    pub fn backtracking(initial: f64) -> Self {
        StepRule::Backtracking {
            initial,
            shrink: 0.5,
            grow: 2.0,
            sufficient_increase: 1e-4,
            max_probes: 40,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Fixed { beta } if !(beta > 0.0) => Err(invalid("fixed step must be positive")),
            StepRule::Backtracking {
                initial,
                shrink,
                grow,
                sufficient_increase,
                max_probes,
            } => {
                if !(initial > 0.0) {
                    return Err(invalid("initial step must be positive"));
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return Err(invalid("shrink factor must lie in (0, 1)"));
                }
                if !(grow >= 1.0) {
                    return Err(invalid("grow factor must be at least 1"));
                }
                if !(0.0..1.0).contains(&sufficient_increase) {
                    return Err(invalid("sufficient-increase constant must lie in [0, 1)"));
                }
                if max_probes == 0 {
                    return Err(invalid("line search needs at least one probe"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    pub method: GradientMethod,
    pub step_rule: StepRule,
    pub max_iterations: usize,
    pub fitness_goal: f64,
    pub gradient_norm_floor: f64,
    /// Keep a copy of the pulse every this many iterations (0 = never). The
    /// final pulse is always returned separately.
    #[serde(default)]
    pub snapshot_every: usize,
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        self.step_rule.validate()?;
        if let GradientMethod::Method2 { delta } = self.method {
            if !(delta > 0.0) {
                return Err(invalid("finite-difference step must be positive"));
            }
        }
        if !(self.fitness_goal > 0.0 && self.fitness_goal <= 1.0) {
            return Err(invalid("fitness goal must lie in (0, 1]"));
        }
        if !(self.gradient_norm_floor >= 0.0) {
            return Err(invalid("gradient floor must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    GoalReached,
    /// The gradient fell below the floor, or no probe of the line search
    /// increased the fitness.
    GradientVanished,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Measured fitness of the current pulse.
    pub fitness: f64,
    /// Norm of the gradient estimated at this pulse, if one was taken.
    pub gradient_norm: Option<f64>,
    /// Step length of the accepted move away from this pulse.
    pub step_size: Option<f64>,
    pub line_search_probes: usize,
    /// Experiments used since the start of the run, up to and including the
    /// fitness measurement of this pulse.
    pub experiments: u64,
    pub snapshot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub iterations: Vec<IterationRecord>,
    pub status: RunStatus,
    pub best_fitness: f64,
    pub best_iteration: usize,
    /// Total experiments consumed by the run.
    pub experiments: u64,
    pub snapshots: Vec<(usize, ControlSequence)>,
}

/// Amplitudes drawn independently from `U[-scale, scale]`.
pub fn random_init(
    slices: usize,
    tau: f64,
    mode: ControlMode,
    qubits: usize,
    amplitude_scale: f64,
    seed: u64,
) -> Result<ControlSequence> {
    if !(0.0..=DEFAULT_AMPLITUDE_CAP).contains(&amplitude_scale) {
        return Err(invalid(format!(
            "initial amplitude scale {amplitude_scale} is outside [0, {DEFAULT_AMPLITUDE_CAP}]"
        )));
    }
    let count = slices * mode.channels(qubits);
    let amplitudes = if amplitude_scale == 0.0 {
        vec![0.0; count]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-amplitude_scale, amplitude_scale);
        (0..count).map(|_| dist.sample(&mut rng)).collect()
    };
    ControlSequence::new(qubits, mode, tau, amplitudes)
}

/// `b + β g`, clipped to the amplitude cap.
pub fn step(seq: &ControlSequence, grad: &GradientVector, beta: f64) -> Result<ControlSequence> {
    ascend(seq, grad, beta)
}

/// Runs gradient ascent from `init` until the goal, a vanishing gradient or
/// the iteration cap. Returns the best pulse seen and the run history.
pub fn optimize(
    device: &Device,
    init: &ControlSequence,
    opts: &OptimizerOptions,
) -> Result<(ControlSequence, RunRecord)> {
    opts.validate()?;
    device.system().check(init)?;
    let start = device.experiment_count();
    let used = || device.experiment_count() - start;

    let mut seq = init.clone();
    let mut fitness = device.measure_fitness(&seq)?;
    let mut best = (fitness, 0usize, seq.clone());
    let mut iterations = Vec::new();
    let mut snapshots = Vec::new();
    let mut beta = match opts.step_rule {
        StepRule::Fixed { beta } => beta,
        StepRule::Backtracking { initial, .. } => initial,
    };

    let status = 'run: {
        for k in 0.. {
            let snapshot = opts.snapshot_every > 0 && k % opts.snapshot_every == 0;
            if snapshot {
                snapshots.push((k, seq.clone()));
            }
            iterations.push(IterationRecord {
                iteration: k,
                fitness,
                gradient_norm: None,
                step_size: None,
                line_search_probes: 0,
                experiments: used(),
                snapshot,
            });
            if fitness >= opts.fitness_goal {
                break 'run RunStatus::GoalReached;
            }
            if k >= opts.max_iterations {
                break 'run RunStatus::IterationCap;
            }

            let grad = match opts.method {
                GradientMethod::Method1 => grad_method1(device, &seq)?,
                GradientMethod::Method2 { delta } => grad_method2(device, &seq, delta)?.0,
            };
            let norm = grad.norm();
            let record = iterations.last_mut().expect("pushed above");
            record.gradient_norm = Some(norm);
            if !(norm > opts.gradient_norm_floor) {
                break 'run RunStatus::GradientVanished;
            }

            let next = match opts.step_rule {
                StepRule::Fixed { beta } => {
                    record.step_size = Some(beta);
                    step(&seq, &grad, beta)?
                }
                StepRule::Backtracking {
                    shrink,
                    grow,
                    sufficient_increase,
                    max_probes,
                    ..
                } => {
                    let mut accepted = None;
                    for probe in 1..=max_probes {
                        let candidate = step(&seq, &grad, beta)?;
                        let f = device.measure_fitness(&candidate)?;
                        record.line_search_probes = probe;
                        if f >= fitness + sufficient_increase * beta * norm * norm {
                            accepted = Some(candidate);
                            break;
                        }
                        beta *= shrink;
                    }
                    match accepted {
                        Some(candidate) => {
                            record.step_size = Some(beta);
                            beta *= grow;
                            candidate
                        }
                        None => break 'run RunStatus::GradientVanished,
                    }
                }
            };
            seq = next;
            fitness = device.measure_fitness(&seq)?;
            if fitness > best.0 {
                best = (fitness, k + 1, seq.clone());
            }
        }
        unreachable!("the iteration loop only exits through a status")
    };

    let (best_fitness, best_iteration, best_seq) = best;
    Ok((
        best_seq,
        RunRecord {
            iterations,
            status,
            best_fitness,
            best_iteration,
            experiments: used(),
            snapshots,
        },
    ))
}
