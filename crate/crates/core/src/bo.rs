//! Constrained Bayesian-optimization loop.
//!
//! Random initial design, then propose → evaluate → refit until the budget
//! is spent. Objective and constraint each get their own GP surrogate over
//! the unit-normalized search box.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    compute_incumbent, maximize_acquisition, AcquisitionConfig, AcquisitionRegistry, Incumbent,
};
use crate::error::{Error, Result};
use crate::gp::{fit_hyperparameters, FitConfig, GpModel, KernelParams};
use crate::optim::Bounds;
use crate::rng::{derive_seed, stream, stream_id, Purpose};

/// One noisy black-box observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y_obj: f64,
    /// Feasible when `>= 0`.
    pub y_con: f64,
    pub replicate_count: usize,
    pub rng_stream_id: u64,
}

/// A black box mapping a physical-units point to an observation.
pub trait Evaluator: Sync {
    fn evaluate(&self, theta: &[f64], iteration: usize) -> Result<Observation>;
}

impl<F> Evaluator for F
where
    F: Fn(&[f64], usize) -> Result<Observation> + Sync,
{
    fn evaluate(&self, theta: &[f64], iteration: usize) -> Result<Observation> {
        self(theta, iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub y_obj: f64,
    pub y_con: f64,
    pub replicate_count: usize,
    pub rng_stream_id: u64,
}

impl Record {
    pub fn feasible(&self) -> bool {
        self.y_con >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init: usize,
    pub acquisition: AcquisitionConfig,
    pub gp_fit: FitConfig,
    /// Hyperparameters used while only one observation exists.
    pub default_kernel: KernelParams,
    /// Write elapsed seconds into the log. Off by default so logs are
    /// byte-identical across reruns.
    pub record_wall_time: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: 40,
            n_init: 5,
            acquisition: AcquisitionConfig::default(),
            gp_fit: FitConfig::default(),
            default_kernel: KernelParams {
                lengthscale: 0.5,
                signal_variance: 1.0,
                noise_variance: 1e-4,
            },
            record_wall_time: false,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("n_init must be >= 1".into()));
        }
        if self.budget < self.n_init {
            return Err(Error::Config(format!(
                "budget {} smaller than n_init {}",
                self.budget, self.n_init
            )));
        }
        self.acquisition.validate()?;
        KernelParams::new(
            self.default_kernel.lengthscale,
            self.default_kernel.signal_variance,
            self.default_kernel.noise_variance,
        )?;
        Ok(())
    }
}

/// One line of the JSON-lines iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    /// Proposed point in physical units.
    pub theta: Vec<f64>,
    pub y_obj: Option<f64>,
    pub y_con: Option<f64>,
    pub eta: Option<f64>,
    pub acq_value: Option<f64>,
    /// `initial`, `random`, or the acquisition strategy name.
    pub mode: String,
    pub best_feasible: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub rng_stream_id: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// `n_init` i.i.d. uniform points in `bounds`.
pub fn initial_design(bounds: &Bounds, n_init: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, stream_id(Purpose::InitialDesign, 0, 0));
    (0..n_init)
        .map(|_| {
            let z: Vec<f64> = (0..bounds.dim()).map(|_| rng.random::<f64>()).collect();
            bounds.from_unit(&z)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BoRunState {
    pub bounds: Bounds,
    pub observations: Vec<Record>,
    pub obj_gp: Option<GpModel>,
    pub con_gp: Option<GpModel>,
    pub iteration: usize,
    pub budget: usize,
    pub n_init: usize,
    /// Running minimum of feasible observed objectives (`+inf` until one exists).
    pub best_feasible_history: Vec<f64>,
    pub failed_iterations: Vec<usize>,
    pub design: Vec<Vec<f64>>,
    pub seed: u64,
}

impl BoRunState {
    pub fn new(bounds: Bounds, config: &BoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let design = initial_design(&bounds, config.n_init, seed);
        Ok(Self {
            bounds,
            observations: Vec::new(),
            obj_gp: None,
            con_gp: None,
            iteration: 0,
            budget: config.budget,
            n_init: config.n_init,
            best_feasible_history: Vec::new(),
            failed_iterations: Vec::new(),
            design,
            seed,
        })
    }

    pub fn best_feasible(&self) -> f64 {
        self.observations
            .iter()
            .filter(|r| r.feasible())
            .map(|r| r.y_obj)
            .fold(f64::INFINITY, f64::min)
    }

    /// Best feasible record, or the least infeasible one when none is feasible.
    pub fn best_record(&self) -> Option<&Record> {
        let feasible = self
            .observations
            .iter()
            .filter(|r| r.feasible())
            .min_by(|a, b| a.y_obj.total_cmp(&b.y_obj));
        feasible.or_else(|| {
            self.observations
                .iter()
                .max_by(|a, b| a.y_con.total_cmp(&b.y_con).then(b.y_obj.total_cmp(&a.y_obj)))
        })
    }

    fn unit_inputs(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|r| self.bounds.to_unit(&r.theta)).collect()
    }

    fn refit(&mut self, config: &BoConfig) -> Result<()> {
        let xs = self.unit_inputs();
        let y_obj: Vec<f64> = self.observations.iter().map(|r| r.y_obj).collect();
        let y_con: Vec<f64> = self.observations.iter().map(|r| r.y_con).collect();
        let fit = |ys: &[f64], which: u64| -> Result<GpModel> {
            if xs.len() >= 2 {
                let seed = derive_seed(self.seed, stream_id(Purpose::GpFit, self.iteration as u64, which));
                fit_hyperparameters(&xs, ys, &config.gp_fit, seed)
            } else {
                GpModel::with_empirical_mean(config.default_kernel, xs.clone(), ys.to_vec())
            }
        };
        if xs.is_empty() {
            return Ok(());
        }
        self.obj_gp = Some(fit(&y_obj, 0)?);
        self.con_gp = Some(fit(&y_con, 1)?);
        Ok(())
    }

    fn incumbent(&self, config: &BoConfig, iteration: usize) -> Incumbent {
        match &self.obj_gp {
            Some(obj) => {
                let extra: Vec<Vec<f64>> = self
                    .best_record()
                    .map(|r| vec![self.bounds.to_unit(&r.theta)])
                    .unwrap_or_default();
                let seed = derive_seed(self.seed, stream_id(Purpose::Acquisition, iteration as u64, 0));
                compute_incumbent(
                    obj,
                    self.con_gp.as_ref(),
                    &config.acquisition,
                    &Bounds::unit(self.bounds.dim()),
                    seed,
                    &extra,
                )
            }
            None => Incumbent::none(),
        }
    }
}

/// Runs one iteration: propose, evaluate, append, refit.
pub fn bo_step(
    state: &mut BoRunState,
    evaluator: &dyn Evaluator,
    config: &BoConfig,
    registry: &AcquisitionRegistry,
) -> Result<IterationLog> {
    let start = Instant::now();
    let it = state.iteration;
    if it >= state.budget {
        return Err(Error::Usage(format!("budget of {} iterations exhausted", state.budget)));
    }
    let unit = Bounds::unit(state.bounds.dim());

    let (theta, mode, eta, acq_value) = if it < state.n_init {
        (state.design[it].clone(), "initial".to_string(), None, None)
    } else if let Some(obj) = &state.obj_gp {
        let incumbent = state.incumbent(config, it);
        let extra: Vec<Vec<f64>> = state
            .best_record()
            .map(|r| vec![state.bounds.to_unit(&r.theta)])
            .unwrap_or_default();
        let seed = derive_seed(state.seed, stream_id(Purpose::Acquisition, it as u64, 1));
        let p = maximize_acquisition(
            registry,
            obj,
            state.con_gp.as_ref(),
            &incumbent,
            &config.acquisition,
            &unit,
            seed,
            &extra,
        )?;
        let mut theta = state.bounds.from_unit(&p.point);
        state.bounds.project(&mut theta);
        (theta, p.strategy, finite(incumbent.value), Some(p.value))
    } else {
        // every earlier evaluation failed: keep sampling uniformly
        let mut rng = stream(state.seed, stream_id(Purpose::InitialDesign, it as u64, 1));
        let z: Vec<f64> = (0..unit.dim()).map(|_| rng.random::<f64>()).collect();
        (state.bounds.from_unit(&z), "random".to_string(), None, None)
    };

    let outcome = evaluator.evaluate(&theta, it);
    state.iteration += 1;
    let mut log = IterationLog {
        iteration: it,
        theta: theta.clone(),
        y_obj: None,
        y_con: None,
        eta,
        acq_value,
        mode,
        best_feasible: None,
        wall_time_s: None,
        rng_stream_id: 0,
        error: None,
    };
    match outcome {
        Ok(obs) if obs.y_obj.is_finite() && obs.y_con.is_finite() => {
            state.observations.push(Record {
                iteration: it,
                theta,
                y_obj: obs.y_obj,
                y_con: obs.y_con,
                replicate_count: obs.replicate_count,
                rng_stream_id: obs.rng_stream_id,
            });
            log.y_obj = Some(obs.y_obj);
            log.y_con = Some(obs.y_con);
            log.rng_stream_id = obs.rng_stream_id;
            state.refit(config)?;
        }
        Ok(obs) => {
            state.failed_iterations.push(it);
            log.rng_stream_id = obs.rng_stream_id;
            log.error = Some("non-finite observation".into());
        }
        Err(e) => {
            state.failed_iterations.push(it);
            log.error = Some(e.to_string());
        }
    }
    let best = state.best_feasible();
    state.best_feasible_history.push(best);
    log.best_feasible = finite(best);
    if config.record_wall_time {
        log.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// Recommended point in physical units.
    pub recommended_theta: Option<Vec<f64>>,
    /// `incumbent`, `best_observed_feasible`, `best_observed` or `none`.
    pub recommendation_source: String,
    pub incumbent: Incumbent,
    pub best_feasible: Option<f64>,
    pub evaluations: usize,
    pub failed_iterations: Vec<usize>,
    pub no_bo_iterations: bool,
}

/// Executes the whole budget, streaming each log record to `sink`.
pub fn run(
    config: &BoConfig,
    evaluator: &dyn Evaluator,
    bounds: &Bounds,
    seed: u64,
    registry: &AcquisitionRegistry,
    sink: &mut dyn FnMut(&IterationLog) -> Result<()>,
) -> Result<(BoRunState, RunReport)> {
    let mut state = BoRunState::new(bounds.clone(), config, seed)?;
    while state.iteration < state.budget {
        let log = bo_step(&mut state, evaluator, config, registry)?;
        sink(&log)?;
    }
    let report = recommend(&state, config);
    Ok((state, report))
}

/// Posterior-mean incumbent at termination, falling back to observed data.
pub fn recommend(state: &BoRunState, config: &BoConfig) -> RunReport {
    let incumbent = state.incumbent(config, state.budget);
    let (theta, source) = if let Some(loc) = incumbent.location.as_ref().filter(|_| incumbent.feasible_found) {
        let mut t = state.bounds.from_unit(loc);
        state.bounds.project(&mut t);
        (Some(t), "incumbent")
    } else if let Some(r) = state.observations.iter().filter(|r| r.feasible()).min_by(|a, b| a.y_obj.total_cmp(&b.y_obj)) {
        (Some(r.theta.clone()), "best_observed_feasible")
    } else if let Some(r) = state.best_record() {
        (Some(r.theta.clone()), "best_observed")
    } else {
        (None, "none")
    };
    RunReport {
        seed: state.seed,
        recommended_theta: theta,
        recommendation_source: source.to_string(),
        incumbent,
        best_feasible: finite(state.best_feasible()),
        evaluations: state.observations.len(),
        failed_iterations: state.failed_iterations.clone(),
        no_bo_iterations: state.budget <= state.n_init,
    }
}
