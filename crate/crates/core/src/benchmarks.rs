//! Synthetic test problems for exercising the BO loop without the plant.

use rand::Rng;

use crate::bo::{Evaluator, Observation};
use crate::error::Result;
use crate::optim::Bounds;
use crate::rng::{stream, stream_id, Purpose};

/// `Σ xᵢ²`, always feasible.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sphere;

impl Evaluator for Sphere {
    fn evaluate(&self, theta: &[f64], _iteration: usize) -> Result<Observation> {
        Ok(Observation {
            y_obj: theta.iter().map(|v| v * v).sum(),
            y_con: 1.0,
            replicate_count: 1,
            rng_stream_id: 0,
        })
    }
}

pub fn branin(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    let (a, b, c) = (1.0, 5.1 / (4.0 * PI * PI), 5.0 / PI);
    let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * PI));
    a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
}

/// Branin on `[-5, 10] × [0, 15]` subject to a disk around `(2.5, 7.5)`.
///
/// The constraint `y_con = (radius² − ‖x − center‖²) / radius²` is feasible
/// when non-negative. The disk excludes two of the three unconstrained minima.
#[derive(Debug, Clone, Copy)]
pub struct BraninDisk {
    pub radius: f64,
}

impl Default for BraninDisk {
    fn default() -> Self {
        Self { radius: 5.0 }
    }
}

impl BraninDisk {
    pub const CENTER: [f64; 2] = [2.5, 7.5];

    pub fn bounds() -> Bounds {
        Bounds::new(vec![-5.0, 0.0], vec![10.0, 15.0])
    }

    pub fn constraint(&self, x: &[f64]) -> f64 {
        let d2 = (x[0] - Self::CENTER[0]).powi(2) + (x[1] - Self::CENTER[1]).powi(2);
        (self.radius * self.radius - d2) / (self.radius * self.radius)
    }

    /// Constrained optimum value estimated on a dense grid.
    pub fn reference_optimum(&self, grid: usize) -> f64 {
        let b = Self::bounds();
        let mut best = f64::INFINITY;
        for i in 0..=grid {
            for j in 0..=grid {
                let z = [i as f64 / grid as f64, j as f64 / grid as f64];
                let x = b.from_unit(&z);
                if self.constraint(&x) >= 0.0 {
                    best = best.min(branin(&x));
                }
            }
        }
        best
    }
}

impl Evaluator for BraninDisk {
    fn evaluate(&self, theta: &[f64], _iteration: usize) -> Result<Observation> {
        Ok(Observation {
            y_obj: branin(theta),
            y_con: self.constraint(theta),
            replicate_count: 1,
            rng_stream_id: 0,
        })
    }
}

/// Best feasible value of `budget` uniform random evaluations.
pub fn random_search(evaluator: &dyn Evaluator, bounds: &Bounds, budget: usize, seed: u64) -> Result<f64> {
    let mut rng = stream(seed, stream_id(Purpose::InitialDesign, 0, 99));
    let mut best = f64::INFINITY;
    for it in 0..budget {
        let z: Vec<f64> = (0..bounds.dim()).map(|_| rng.random::<f64>()).collect();
        let obs = evaluator.evaluate(&bounds.from_unit(&z), it)?;
        if obs.y_con >= 0.0 {
            best = best.min(obs.y_obj);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branin_known_minimum() {
        assert!((branin(&[std::f64::consts::PI, 2.275]) - 0.397_887).abs() < 1e-5);
    }

    #[test]
    fn disk_excludes_two_minima() {
        let c = BraninDisk::default();
        assert!(c.constraint(&[std::f64::consts::PI, 2.275]) < 0.0);
        assert!(c.constraint(&[-std::f64::consts::PI, 12.275]) < 0.0);
        assert!(c.constraint(&BraninDisk::CENTER) == 1.0);
        let opt = c.reference_optimum(400);
        assert!(opt > 0.4 && opt < 10.0, "{opt}");
    }
}
