//! The four studies, as functions from a loaded config to results. Nothing
//! here touches the filesystem; see [`crate::output`].

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64;
use pulsetomo::control::{Axis, ControlSequence, ControlSystem};
use pulsetomo::device::{Device, MeasurementModel};
use pulsetomo::gradient::{commutator_residual, grad_method1, grad_method2, grad_oracle, GradientVector};
use pulsetomo::hamiltonian::{build_ising, ControlMode, ControlOperators};
use pulsetomo::optimizer::{optimize, random_init, OptimizerOptions, RunRecord, RunStatus};
use pulsetomo::qcore::{fidelity, ComplexMatrix, DensityMatrix, PureState};
use pulsetomo::stateprep::{dynamical_state, random_lowdepth_state};
use pulsetomo::tomography::{full_qst, reconstruct, PauliCoefficients};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CostConfig, GradcheckConfig, Loaded, ReconstructConfig, ScalingConfig};
use crate::{CliError, Overrides};

/// Random full-rank density matrix `A A† / Tr(A A†)` with
/// entries of `A` uniform in the unit square, reproducible from `seed`.
pub fn random_density(n: usize, seed: u64) -> Result<DensityMatrix, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 1usize << n;
    let a = ComplexMatrix::from_fn(d, d, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let m = &a * a.adjoint();
    let t = m.trace();
    Ok(DensityMatrix::new(m / t)?)
}

/// Uniform random amplitudes in `[-scale, scale]` for a fixed slice count.
pub fn random_amplitudes(count: usize, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen_range(-scale..=scale)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionSummary {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub measurement: MeasurementModel,
    pub status: RunStatus,
    pub iterations: usize,
    /// Best fitness as reported by the device during the run.
    pub measured_fitness: f64,
    /// Noiseless fitness of the returned pulse.
    pub exact_fitness: f64,
    /// Fidelity of the reconstruction against the hidden target.
    pub fidelity: f64,
    pub purity: f64,
    pub experiments: u64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub summary: ReconstructionSummary,
    pub pulse: ControlSequence,
    pub record: RunRecord,
    pub rho: DensityMatrix,
    pub coefficients: PauliCoefficients,
    pub wall_seconds: f64,
}

pub fn run_reconstruction(
    loaded: &Loaded<ReconstructConfig>,
    overrides: Overrides,
) -> Result<Reconstruction, CliError> {
    let started = Instant::now();
    let cfg = &loaded.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let model = match overrides.shots {
        Some(0) => return Err(CliError::Config("--shots must be at least 1".into())),
        Some(count) => MeasurementModel::Shots { count, seed },
        None => cfg.measurement.clone(),
    };
    let n = cfg.hamiltonian.qubits();
    let drift = cfg.hamiltonian.build().map_err(|e| CliError::Config(e.to_string()))?;
    let controls = ControlOperators::new(cfg.control.mode, n).map_err(|e| CliError::Config(e.to_string()))?;
    let system = ControlSystem::new(drift, controls).map_err(|e| CliError::Config(e.to_string()))?;
    let target = cfg.target.build(n).map_err(|e| CliError::Config(e.to_string()))?;
    let device = Device::with_pure_target(system.clone(), &target, model.clone())?;

    let init = random_init(cfg.control.slices, cfg.control.tau, cfg.control.mode, n, cfg.control.init_scale, seed)?;
    let init = ControlSequence::with_cap(n, cfg.control.mode, cfg.control.tau, cfg.control.cap, init.amplitudes().to_vec())?;
    let (pulse, record) = optimize(&device, &init, &cfg.optimizer)?;

    let rho = reconstruct(&system, &pulse)?;
    let exact = Device::with_pure_target(system, &target, MeasurementModel::Exact)?;
    let summary = ReconstructionSummary {
        name: cfg.name.clone(),
        config_hash: loaded.hash.clone(),
        seed,
        measurement: model,
        status: record.status,
        iterations: record.iterations.len() - 1,
        measured_fitness: record.best_fitness,
        exact_fitness: exact.measure_fitness(&pulse)?,
        fidelity: fidelity(&rho, &target.to_density())?,
        purity: rho.purity(),
        experiments: record.experiments,
    };
    Ok(Reconstruction {
        coefficients: full_qst(&rho),
        summary,
        pulse,
        record,
        rho,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Best fitness of one optimized cell of the scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingCell {
    pub qubits: usize,
    pub slices: usize,
    pub restart: usize,
    pub fitness: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub qubits: usize,
    /// `None` when no slice count up to the cap reached the threshold.
    pub min_slices: Option<usize>,
    /// Best fitness at `min_slices`, or at the largest count tried.
    pub fitness: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub cells: Vec<ScalingCell>,
}

fn cell_seed(seed: u64, n: usize, slices: usize, restart: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((n as u64) << 40)
        .wrapping_add((slices as u64) << 8)
        .wrapping_add(restart as u64)
}

fn scaling_cells(
    cfg: &ScalingConfig,
    seed: u64,
    n: usize,
    slices: usize,
    target: &PureState,
    opts: &OptimizerOptions,
) -> Result<Vec<ScalingCell>, CliError> {
    let tau = cfg.total_time / slices as f64;
    (0..cfg.restarts)
        .into_par_iter()
        .map(|restart| {
            let system = ControlSystem::new(build_ising(n)?, ControlOperators::new(cfg.mode, n)?)?;
            let device = Device::with_pure_target(system, target, MeasurementModel::Exact)?;
            let init = random_init(slices, tau, cfg.mode, n, cfg.init_scale, cell_seed(seed, n, slices, restart))?;
            let (_, record) = optimize(&device, &init, opts)?;
            Ok(ScalingCell {
                qubits: n,
                slices,
                restart,
                fitness: record.best_fitness,
                iterations: record.iterations.len() - 1,
            })
        })
        .collect::<Result<Vec<_>, pulsetomo::Error>>()
        .map_err(CliError::from)
}

fn scaling_row(cfg: &ScalingConfig, seed: u64, n: usize) -> Result<(ScalingRow, Vec<ScalingCell>), CliError> {
    let started = Instant::now();
    let ising = build_ising(n)?;
    let target = dynamical_state(&ising, cfg.total_time, n)?;
    let opts = OptimizerOptions {
        fitness_goal: cfg.threshold.max(f64::MIN_POSITIVE),
        ..cfg.optimizer.clone()
    };
    let mut tried: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cells = Vec::new();
    let mut best_at = |slices: usize, cells: &mut Vec<ScalingCell>| -> Result<bool, CliError> {
        let found = scaling_cells(cfg, seed, n, slices, &target, &opts)?;
        let best = found.iter().map(|c| c.fitness).fold(f64::NEG_INFINITY, f64::max);
        cells.extend(found);
        tried.insert(slices, best);
        Ok(best >= cfg.threshold)
    };

    // Doubling until the threshold is met, then bisection between the last
    // failure and the first success.
    let mut lo = 0;
    let mut hi = None;
    let mut slices = 1;
    loop {
        if best_at(slices, &mut cells)? {
            hi = Some(slices);
            break;
        }
        lo = slices;
        if slices == cfg.max_slices {
            break;
        }
        slices = (2 * slices).min(cfg.max_slices);
    }
    if let Some(mut h) = hi {
        while h - lo > 1 {
            let mid = (lo + h) / 2;
            if best_at(mid, &mut cells)? {
                h = mid;
            } else {
                lo = mid;
            }
        }
        hi = Some(h);
    }
    let fitness = match hi {
        Some(h) => tried[&h],
        None => tried[&cfg.max_slices],
    };
    let row = ScalingRow {
        qubits: n,
        min_slices: hi,
        fitness,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((row, cells))
}

/// Smallest slice count reaching the threshold on the Ising dynamical state,
/// for each register size. Register sizes run in parallel; results are
/// assembled in order of `n`.
pub fn run_scaling(loaded: &Loaded<ScalingConfig>, overrides: Overrides) -> Result<ScalingStudy, CliError> {
    let cfg = &loaded.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let results = (cfg.n_min..=cfg.n_max)
        .into_par_iter()
        .map(|n| scaling_row(cfg, seed, n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut study = ScalingStudy {
        rows: Vec::new(),
        cells: Vec::new(),
    };
    for (row, mut cells) in results {
        cells.sort_by_key(|c| (c.slices, c.restart));
        study.rows.push(row);
        study.cells.extend(cells);
    }
    Ok(study)
}

/// Relative error `|g − g_oracle| / |g_oracle|` per instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSeries {
    pub parameter: f64,
    pub errors: Vec<f64>,
}

impl ErrorSeries {
    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    /// One series per slice duration.
    pub method1: Vec<ErrorSeries>,
    /// One series per finite-difference step.
    pub method2: Vec<ErrorSeries>,
    pub commutator_residual: f64,
}

fn relative_error(estimate: &GradientVector, oracle: &GradientVector) -> f64 {
    estimate.entries().iter().zip(oracle.entries()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        / oracle.norm()
}

pub fn run_gradcheck(loaded: &Loaded<GradcheckConfig>, overrides: Overrides) -> Result<GradcheckReport, CliError> {
    let cfg = &loaded.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    let n = cfg.hamiltonian.qubits();
    let system = ControlSystem::new(cfg.hamiltonian.build()?, ControlOperators::new(cfg.mode, n)?)?;
    let count = cfg.slices * cfg.mode.channels(n);

    let instances = (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let instance_seed = seed.wrapping_add(1000 * i as u64);
            let target = random_density(n, instance_seed)?;
            let amplitudes = random_amplitudes(count, cfg.amplitude_scale, instance_seed + 1);
            let device = Device::new(system.clone(), &target, MeasurementModel::Exact)?;
            let mut m1 = Vec::new();
            for &tau in &cfg.taus {
                let seq = ControlSequence::new(n, cfg.mode, tau, amplitudes.clone())?;
                let oracle = grad_oracle(&system, &target, &seq, cfg.oracle_delta)?;
                m1.push(relative_error(&grad_method1(&device, &seq)?, &oracle));
            }
            let seq = ControlSequence::new(n, cfg.mode, cfg.fd_tau, amplitudes)?;
            let oracle = grad_oracle(&system, &target, &seq, cfg.oracle_delta)?;
            let m2 = cfg
                .deltas
                .iter()
                .map(|&delta| Ok(relative_error(&grad_method2(&device, &seq, delta)?.0, &oracle)))
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok((m1, m2))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let series = |params: &[f64], pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
        params
            .iter()
            .enumerate()
            .map(|(j, &parameter)| ErrorSeries {
                parameter,
                errors: instances.iter().map(|inst| pick(inst)[j]).collect(),
            })
            .collect::<Vec<_>>()
    };
    let method1 = series(&cfg.taus, &|inst| &inst.0);
    let method2 = series(&cfg.deltas, &|inst| &inst.1);

    let mut residual = 0.0f64;
    for s in 0..cfg.commutator_states {
        let rho = random_density(n, seed.wrapping_add(7919 * (s as u64 + 1)))?;
        for site in 0..n {
            for axis in [Axis::X, Axis::Y] {
                residual = residual.max(commutator_residual(rho.matrix(), site, axis)?);
            }
        }
    }
    Ok(GradcheckReport {
        method1,
        method2,
        commutator_residual: residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub qubits: usize,
    pub slices: usize,
    pub full_qst: u64,
    pub method1_per_iteration: u64,
    pub method2_per_iteration: u64,
    pub method1_total: u64,
    pub method2_total: u64,
    /// Whether a live device used exactly the tabulated per-iteration
    /// counts; empty for rows that were not checked.
    pub verified: Option<bool>,
}

/// `(4^n − 1, 4nM + 1, 2M + 1)` for global controls: conventional
/// tomography, one rotation-insertion iteration with its fitness reading,
/// and one finite-difference iteration with its baseline.
pub fn cost_formulas(n: usize, slices: usize) -> (u64, u64, u64) {
    let (n64, m) = (n as u64, slices as u64);
    ((1u64 << (2 * n64)) - 1, 4 * n64 * m + 1, 2 * m + 1)
}

/// Counts experiments used by one iteration of each estimator on a live
/// Ising device with global controls.
pub fn measured_costs(n: usize, slices: usize, seed: u64) -> Result<(u64, u64), CliError> {
    let system = ControlSystem::new(build_ising(n)?, ControlOperators::new(ControlMode::Global, n)?)?;
    let target = random_lowdepth_state(n, 2, seed)?;
    let device = Device::with_pure_target(system, &target, MeasurementModel::Exact)?;
    let seq = ControlSequence::new(n, ControlMode::Global, 0.1, random_amplitudes(2 * slices, 1.0, seed))?;
    let before = device.experiment_count();
    device.measure_fitness(&seq)?;
    grad_method1(&device, &seq)?;
    let method1 = device.experiment_count() - before;
    let before = device.experiment_count();
    grad_method2(&device, &seq, 1e-3)?;
    Ok((method1, device.experiment_count() - before))
}

pub fn run_cost(loaded: &Loaded<CostConfig>, overrides: Overrides) -> Result<Vec<CostRow>, CliError> {
    let cfg = &loaded.config;
    let seed = overrides.seed.unwrap_or(cfg.seed);
    (cfg.n_min..=cfg.n_max)
        .map(|n| {
            let (qst, m1, m2) = cost_formulas(n, cfg.slices);
            let verified = if cfg.verify.contains(&n) {
                Some(measured_costs(n, cfg.slices, seed)? == (m1, m2))
            } else {
                None
            };
            Ok(CostRow {
                qubits: n,
                slices: cfg.slices,
                full_qst: qst,
                method1_per_iteration: m1,
                method2_per_iteration: m2,
                method1_total: cfg.iterations * m1,
                method2_total: cfg.iterations * m2,
                verified,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_examples() {
        assert_eq!(cost_formulas(4, 10).0, 255);
        assert_eq!(cost_formulas(2, 10), (15, 81, 21));
        assert_eq!(measured_costs(2, 10, 3).unwrap(), (81, 21));
    }

    #[test]
    fn random_density_is_valid() {
        let rho = random_density(3, 1).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
        assert_eq!(rho, random_density(3, 1).unwrap());
    }
}
