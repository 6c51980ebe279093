//! Economic receding-horizon MPC over a NARX prediction model.
//!
//! The controller maximizes predicted production of B over `np` steps. The
//! upper reactor-temperature bound is tightened by the backoff and enforced
//! through a quadratic penalty on scaled violations; the input box is hard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::narx::{simulate_horizon, NarxCoeffs, ScalingSpec};
use crate::optim::{Bounds, Halton, NelderMead};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Starts added after the four standard ones, taken as the best points of
    /// a screened Halton design.
    pub extra_restarts: usize,
    /// Size of the screened design; the objective is cheap next to a local search.
    pub screen_points: usize,
    /// Objective evaluations per start.
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            extra_restarts: 2,
            screen_points: 64,
            max_iters: 500,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    pub np: usize,
    /// Feed-rate bounds `[F_min, F_max]` in 1/h.
    pub input_bounds: (f64, f64),
    /// Reactor temperature bounds in °C.
    pub t_bounds: (f64, f64),
    /// Tightening of the upper temperature bound, in scaled output units.
    pub backoff: f64,
    pub dt: f64,
    pub vin: f64,
    pub penalty_weight: f64,
    pub scaling: ScalingSpec,
    pub solver: SolverConfig,
    /// Stage-cost parameters. The economic cost has none, so this stays
    /// empty; it is kept so a parametrized cost can be tuned later.
    pub stage_cost_params: Vec<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            np: 10,
            input_bounds: (5.0, 35.0),
            t_bounds: (100.0, 150.0),
            backoff: 0.0,
            dt: 0.005,
            vin: 10.01,
            penalty_weight: 1e3,
            scaling: ScalingSpec::default(),
            solver: SolverConfig::default(),
            stage_cost_params: Vec::new(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.np == 0 {
            return Err(Error::Config("MPC horizon must be >= 1".into()));
        }
        if !(self.input_bounds.0 < self.input_bounds.1) {
            return Err(Error::Config("F_min must be below F_max".into()));
        }
        if !(self.t_bounds.0 < self.t_bounds.1) {
            return Err(Error::Config("T_min must be below T_max".into()));
        }
        if !(self.backoff >= 0.0) {
            return Err(Error::Config("backoff must be >= 0".into()));
        }
        if !(self.dt > 0.0 && self.vin > 0.0 && self.penalty_weight > 0.0) {
            return Err(Error::Config("dt, vin and penalty_weight must be positive".into()));
        }
        if !self.stage_cost_params.is_empty() {
            return Err(Error::Config("the economic stage cost takes no parameters".into()));
        }
        if self.solver.max_iters == 0 {
            return Err(Error::Config("solver max_iters must be >= 1".into()));
        }
        self.scaling.validate()
    }

    fn input_box(&self) -> Bounds {
        Bounds::new(vec![self.input_bounds.0; self.np], vec![self.input_bounds.1; self.np])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolverStatus {
    Optimal,
    /// No start improved on its initial point.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub u_sequence: Vec<f64>,
    /// Scaled `(c_B, T_R)` predictions `y₁..y_Np`.
    pub predicted_outputs: Vec<[f64; 2]>,
    pub objective_value: f64,
    pub solver_status: SolverStatus,
}

/// Production and penalty parts of the MPC cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    /// Predicted moles of B over the horizon.
    pub production: f64,
    /// Sum of squared scaled temperature-bound violations (unweighted).
    pub violation: f64,
}

pub fn objective_terms(u_sequence: &[f64], y_scaled: [f64; 2], coeffs: &NarxCoeffs, config: &MpcConfig) -> ObjectiveTerms {
    let s = &config.scaling;
    let u_scaled: Vec<f64> = u_sequence.iter().map(|u| s.scale_input(*u)).collect();
    let preds = simulate_horizon(coeffs, y_scaled, &u_scaled);
    let t_hi = s.TR.scale(config.t_bounds.1);
    let t_lo = s.TR.scale(config.t_bounds.0);
    let mut production = 0.0;
    let mut violation = 0.0;
    for (y, f) in preds.iter().zip(u_sequence) {
        production += config.vin * s.cB.unscale(y[0]) * f * config.dt;
        violation += (y[1] + config.backoff - t_hi).max(0.0).powi(2) + (t_lo - y[1]).max(0.0).powi(2);
    }
    ObjectiveTerms {
        production,
        violation,
    }
}

/// Cost to minimize: `−production + penalty_weight · violation`.
pub fn mpc_objective(u_sequence: &[f64], y_scaled: [f64; 2], coeffs: &NarxCoeffs, config: &MpcConfig) -> f64 {
    let t = objective_terms(u_sequence, y_scaled, coeffs, config);
    -t.production + config.penalty_weight * t.violation
}

/// Minimizes [`mpc_objective`] over the input box by multistart Nelder-Mead.
///
/// Starts, in order: the warm start (if any), constant `F_min`, constant
/// `F_max`, constant midpoint, then the `solver.extra_restarts` best points of
/// a screened Halton design.
pub fn solve(
    y_meas: [f64; 2],
    coeffs: &NarxCoeffs,
    config: &MpcConfig,
    warm_start: Option<&[f64]>,
) -> Result<MpcSolution> {
    if y_meas.iter().any(|v| !v.is_finite()) {
        return Err(Error::Usage(format!("non-finite measurement {y_meas:?}")));
    }
    let y_scaled = config.scaling.scale_output(y_meas);
    let bounds = config.input_box();
    let (lo, hi) = config.input_bounds;
    let np = config.np;

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(4 + config.solver.extra_restarts);
    if let Some(w) = warm_start {
        if w.len() == np {
            starts.push(w.to_vec());
        }
    }
    starts.push(vec![lo; np]);
    starts.push(vec![hi; np]);
    starts.push(vec![0.5 * (lo + hi); np]);
    if config.solver.extra_restarts > 0 {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x4d5043);
        let design = Halton::new(np.min(32), &mut rng);
        let n = config.solver.screen_points.max(config.solver.extra_restarts);
        let mut screened: Vec<(f64, usize, Vec<f64>)> = (0..n)
            .map(|i| {
                let mut z = design.point(i);
                z.resize(np, 0.5);
                let u = bounds.from_unit(&z);
                (mpc_objective(&u, y_scaled, coeffs, config), i, u)
            })
            .collect();
        screened.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        starts.extend(screened.into_iter().take(config.solver.extra_restarts).map(|(_, _, u)| u));
    }

    let nm = NelderMead {
        max_evals: config.solver.max_iters,
        initial_step: 0.1,
        f_tol: config.solver.tolerance,
        x_tol: 1e-6,
    };
    let cost = |u: &[f64]| mpc_objective(u, y_scaled, coeffs, config);

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut improved = false;
    for s in &starts {
        let mut s = s.clone();
        bounds.project(&mut s);
        let initial = cost(&s);
        let m = nm.minimize(cost, &s, &bounds);
        if m.value < initial {
            improved = true;
        }
        let (x, v) = if m.value <= initial { (m.x, m.value) } else { (s, initial) };
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((x, v));
        }
    }
    let (mut u, mut value) = best.expect("at least three starts");
    if improved {
        // one polishing restart from the incumbent
        let m = nm.minimize(cost, &u, &bounds);
        if m.value < value {
            u = m.x;
            value = m.value;
        }
    }
    let u_scaled: Vec<f64> = u.iter().map(|v| config.scaling.scale_input(*v)).collect();
    Ok(MpcSolution {
        predicted_outputs: simulate_horizon(coeffs, y_scaled, &u_scaled),
        u_sequence: u,
        objective_value: value,
        solver_status: if improved {
            SolverStatus::Optimal
        } else {
            SolverStatus::Degenerate
        },
    })
}

/// Stateful MPC policy holding the shifted previous solution as warm start.
#[derive(Debug, Clone)]
pub struct Controller {
    pub coeffs: NarxCoeffs,
    pub config: MpcConfig,
    memory: Option<Vec<f64>>,
    last_status: Option<SolverStatus>,
}

impl Controller {
    pub fn new(coeffs: NarxCoeffs, config: MpcConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            coeffs,
            config,
            memory: None,
            last_status: None,
        })
    }

    pub fn memory(&self) -> Option<&[f64]> {
        self.memory.as_deref()
    }

    pub fn last_status(&self) -> Option<SolverStatus> {
        self.last_status
    }

    /// Applies the first optimal input and stores the shifted sequence.
    pub fn control_law(&mut self, y_meas: [f64; 2]) -> Result<f64> {
        let sol = solve(y_meas, &self.coeffs, &self.config, self.memory.as_deref())?;
        let first = sol.u_sequence[0];
        let mut next = sol.u_sequence[1..].to_vec();
        next.push(*sol.u_sequence.last().expect("np >= 1"));
        self.memory = Some(next);
        self.last_status = Some(sol.solver_status);
        Ok(first)
    }
}
