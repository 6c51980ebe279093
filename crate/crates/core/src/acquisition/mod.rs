//! Acquisition functions, the constrained incumbent, and multistart
//! acquisition maximization over the normalized tuning box.

mod registry;
mod strategies;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use registry::{AcquisitionFactory, AcquisitionRegistry};
pub use strategies::{
    eic, expected_improvement, expected_improvement_from_moments, probability_feasible,
    probability_feasible_from_moments, std_normal_cdf, std_normal_pdf, AcqContext,
    AcquisitionFunction, ConstrainedExpectedImprovement, ExpectedImprovement, FeasibilityOnly,
    SIGMA_FLOOR,
};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::optim::{Bounds, Halton, NelderMead};

/// Best posterior-mean value subject to the probabilistic feasibility test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    /// `+inf` when no feasible point was found.
    pub value: f64,
    pub location: Option<Vec<f64>>,
    pub feasible_found: bool,
}

impl Incumbent {
    pub fn none() -> Self {
        Self {
            value: f64::INFINITY,
            location: None,
            feasible_found: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Allowed infeasibility probability in the incumbent test, in (0, 0.5].
    pub beta: f64,
    pub restarts: usize,
    /// Objective evaluations per local refinement.
    pub local_iters: usize,
    /// Registry name of the acquisition used once a feasible incumbent exists.
    pub strategy: String,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            restarts: 32,
            local_iters: 200,
            strategy: "eic".to_string(),
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::Config(format!("beta {} outside (0, 0.5]", self.beta)));
        }
        if self.restarts == 0 || self.local_iters == 0 {
            return Err(Error::Config("acquisition restarts and local_iters must be >= 1".into()));
        }
        Ok(())
    }
}

fn start_points(dim: usize, count: usize, seed: u64, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = Halton::new(dim, &mut rng);
    let mut pts = design.points(count);
    pts.extend(extra.iter().filter(|p| p.len() == dim).cloned());
    pts
}

/// Minimizes the posterior mean of `obj_gp` over `bounds` subject to
/// `Φ(μc/σc) >= 1 − beta`. Starts are `config.restarts` shifted-Halton points
/// followed by `extra_starts`.
pub fn compute_incumbent(
    obj_gp: &GpModel,
    con_gp: Option<&GpModel>,
    config: &AcquisitionConfig,
    bounds: &Bounds,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Incumbent {
    let threshold = 1.0 - config.beta;
    let feasible = |x: &[f64]| con_gp.is_none_or(|c| probability_feasible(c, x) >= threshold);
    let penalized = |x: &[f64]| {
        let mean = obj_gp.posterior_unchecked(x).mean;
        match con_gp {
            None => mean,
            Some(c) => {
                let pof = probability_feasible(c, x);
                if pof >= threshold {
                    mean
                } else {
                    1e12 * (1.0 + threshold - pof)
                }
            }
        }
    };
    let nm = NelderMead::with_max_evals(config.local_iters);
    let starts = start_points(bounds.dim(), config.restarts, seed, extra_starts);
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| nm.minimize(penalized, s, bounds))
        .collect();

    let mut best = Incumbent::none();
    for m in results {
        if !feasible(&m.x) {
            continue;
        }
        let value = obj_gp.posterior_unchecked(&m.x).mean;
        if value < best.value {
            best = Incumbent {
                value,
                location: Some(m.x),
                feasible_found: true,
            };
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub value: f64,
    /// Name of the acquisition that produced the point.
    pub strategy: String,
}

/// Maximizes an acquisition by multistart bounded Nelder-Mead.
///
/// The ordered start list is `config.restarts` shifted-Halton points followed by
/// `extra_starts`. The highest refined value wins with ties going to the lower
/// index; if every value is zero the start with the largest objective
/// posterior variance is returned instead.
pub fn maximize_with(
    acquisition: &dyn AcquisitionFunction,
    ctx: &AcqContext<'_>,
    config: &AcquisitionConfig,
    bounds: &Bounds,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Proposal {
    let starts = start_points(bounds.dim(), config.restarts, seed, extra_starts);
    let nm = NelderMead::with_max_evals(config.local_iters);
    let results: Vec<_> = starts
        .par_iter()
        .map(|s| nm.minimize(|x| -acquisition.value(ctx, x), s, bounds))
        .collect();

    let mut best_idx = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, m) in results.iter().enumerate() {
        let v = -m.value;
        if v > best_val {
            best_val = v;
            best_idx = i;
        }
    }
    if best_val > 0.0 {
        return Proposal {
            point: results[best_idx].x.clone(),
            value: best_val,
            strategy: acquisition.name().to_string(),
        };
    }

    let mut pick = 0;
    let mut pick_var = f64::NEG_INFINITY;
    for (i, s) in starts.iter().enumerate() {
        let v = ctx.objective.posterior_unchecked(s).variance;
        if v > pick_var {
            pick_var = v;
            pick = i;
        }
    }
    Proposal {
        point: starts[pick].clone(),
        value: acquisition.value(ctx, &starts[pick]).max(0.0),
        strategy: acquisition.name().to_string(),
    }
}

/// Picks the configured strategy, falling back to feasibility search when the
/// strategy needs an incumbent and none is feasible, then maximizes it.
#[allow(clippy::too_many_arguments)]
pub fn maximize_acquisition(
    registry: &AcquisitionRegistry,
    obj_gp: &GpModel,
    con_gp: Option<&GpModel>,
    incumbent: &Incumbent,
    config: &AcquisitionConfig,
    bounds: &Bounds,
    seed: u64,
    extra_starts: &[Vec<f64>],
) -> Result<Proposal> {
    let mut acquisition = registry.get(&config.strategy)?;
    if acquisition.needs_incumbent() && !incumbent.feasible_found {
        acquisition = registry.get("feasibility")?;
    }
    let ctx = AcqContext {
        objective: obj_gp,
        constraint: con_gp,
        eta: incumbent.value,
    };
    let mut extra = extra_starts.to_vec();
    if let Some(loc) = &incumbent.location {
        extra.push(loc.clone());
    }
    Ok(maximize_with(acquisition.as_ref(), &ctx, config, bounds, seed, &extra))
}
