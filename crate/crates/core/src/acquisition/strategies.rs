use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Debug;

use libm::erfc;

use crate::gp::{GpModel, PosteriorMoments};

/// Below this posterior standard deviation the deterministic limits are used.
pub const SIGMA_FLOOR: f64 = 1e-12;

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Expected improvement below `eta` for a Gaussian with the given moments
/// (minimization convention).
pub fn expected_improvement_from_moments(m: PosteriorMoments, eta: f64) -> f64 {
    let sigma = m.std_dev();
    if sigma < SIGMA_FLOOR {
        return (eta - m.mean).max(0.0);
    }
    let z = (eta - m.mean) / sigma;
    (sigma * (z * std_normal_cdf(z) + std_normal_pdf(z))).max(0.0)
}

/// `Φ(μ/σ)`: probability that a constraint with these moments is `>= 0`.
pub fn probability_feasible_from_moments(m: PosteriorMoments) -> f64 {
    let sigma = m.std_dev();
    if sigma < SIGMA_FLOOR {
        return if m.mean >= 0.0 { 1.0 } else { 0.0 };
    }
    std_normal_cdf(m.mean / sigma)
}

pub fn expected_improvement(obj_gp: &GpModel, query: &[f64], eta: f64) -> f64 {
    expected_improvement_from_moments(obj_gp.posterior_unchecked(query), eta)
}

pub fn probability_feasible(con_gp: &GpModel, query: &[f64]) -> f64 {
    probability_feasible_from_moments(con_gp.posterior_unchecked(query))
}

/// Expected improvement weighted by the probability of feasibility.
pub fn eic(obj_gp: &GpModel, con_gp: &GpModel, query: &[f64], eta: f64) -> f64 {
    let pof = probability_feasible(con_gp, query);
    if pof == 0.0 {
        return 0.0;
    }
    expected_improvement(obj_gp, query, eta) * pof
}

/// Everything an acquisition function may look at.
#[derive(Debug, Clone, Copy)]
pub struct AcqContext<'a> {
    pub objective: &'a GpModel,
    pub constraint: Option<&'a GpModel>,
    pub eta: f64,
}

/// A scoring rule that the proposal step maximizes over the unit box.
pub trait AcquisitionFunction: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn value(&self, ctx: &AcqContext<'_>, x: &[f64]) -> f64;

    /// Whether the score is meaningless without a feasible incumbent.
    fn needs_incumbent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExpectedImprovement;

impl AcquisitionFunction for ExpectedImprovement {
    fn name(&self) -> &'static str {
        "ei"
    }

    fn value(&self, ctx: &AcqContext<'_>, x: &[f64]) -> f64 {
        expected_improvement(ctx.objective, x, ctx.eta)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ConstrainedExpectedImprovement;

impl AcquisitionFunction for ConstrainedExpectedImprovement {
    fn name(&self) -> &'static str {
        "eic"
    }

    fn value(&self, ctx: &AcqContext<'_>, x: &[f64]) -> f64 {
        match ctx.constraint {
            Some(con) => eic(ctx.objective, con, x, ctx.eta),
            None => expected_improvement(ctx.objective, x, ctx.eta),
        }
    }
}

/// Searches only for feasibility; used until a feasible incumbent exists.
#[derive(Debug, Clone, Copy, Default)]
pub struct FeasibilityOnly;

impl AcquisitionFunction for FeasibilityOnly {
    fn name(&self) -> &'static str {
        "feasibility"
    }

    fn value(&self, ctx: &AcqContext<'_>, x: &[f64]) -> f64 {
        ctx.constraint.map_or(1.0, |con| probability_feasible(con, x))
    }

    fn needs_incumbent(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mom(mean: f64, sd: f64) -> PosteriorMoments {
        PosteriorMoments {
            mean,
            variance: sd * sd,
        }
    }

    #[test]
    fn ei_deterministic_limit() {
        assert_eq!(expected_improvement_from_moments(mom(1.0, 0.0), 3.0), 2.0);
        assert_eq!(expected_improvement_from_moments(mom(4.0, 0.0), 3.0), 0.0);
    }

    #[test]
    fn ei_at_zero_z_is_pdf_of_zero() {
        let v = expected_improvement_from_moments(mom(2.0, 1.0), 2.0);
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn pof_table_values() {
        assert_eq!(probability_feasible_from_moments(mom(0.0, 0.3)), 0.5);
        let v = probability_feasible_from_moments(mom(2.0, 1.0));
        assert!((v - 0.977_249_868_051_820_8).abs() < 1e-12, "{v:.17}");
        assert_eq!(probability_feasible_from_moments(mom(-0.01, 0.0)), 0.0);
        assert_eq!(probability_feasible_from_moments(mom(0.0, 0.0)), 1.0);
    }

    #[test]
    fn cdf_symmetry_and_tails() {
        for z in [-8.0, -1.3, 0.0, 0.7, 5.0] {
            assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() < 1e-15);
        }
        assert_eq!(std_normal_cdf(40.0), 1.0);
        assert!(std_normal_cdf(-40.0) >= 0.0);
    }
}
