//! Derivative-free local search and space-filling start designs.
//!
//! The GP hyperparameter fit, the acquisition/incumbent searches and the MPC
//! solver all reuse [`NelderMead`], a box-projected Nelder-Mead simplex.

use rand::Rng;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "bounds dimension mismatch");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l <= u),
            "lower bound above upper bound"
        );
        Self { lower, upper }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(z, (l, u))| l + z * (u - l))
            .collect()
    }

    /// Maps a point of the box onto the unit cube. Degenerate axes map to 0.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(x, (l, u))| if u > l { (x - l) / (u - l) } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Bounded Nelder-Mead. Trial points are clamped onto the box before they are
/// evaluated; non-finite objective values are treated as `+inf`.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Initial simplex edge as a fraction of each box side.
    pub initial_step: f64,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 200,
            initial_step: 0.1,
            f_tol: 1e-10,
            x_tol: 1e-8,
        }
    }
}

impl NelderMead {
    pub fn with_max_evals(max_evals: usize) -> Self {
        Self {
            max_evals,
            ..Self::default()
        }
    }

    pub fn minimize<F>(&self, mut f: F, x0: &[f64], bounds: &Bounds) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        self.minimize_dyn(&mut f, x0, bounds)
    }

    fn minimize_dyn(&self, f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], bounds: &Bounds) -> Minimum {
        let n = bounds.dim();
        assert_eq!(x0.len(), n, "start point dimension mismatch");
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };

        let mut start = x0.to_vec();
        bounds.project(&mut start);
        let f0 = eval(&start, &mut evals);
        if n == 0 || self.max_evals <= 1 {
            return Minimum {
                x: start,
                value: f0,
                evals,
            };
        }

        // Adaptive coefficients (Gao & Han) for higher dimensions.
        let nf = n as f64;
        let (alpha, gamma, rho, sigma) = if n > 2 {
            (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
        } else {
            (1.0, 2.0, 0.5, 0.5)
        };

        // Vertices are stepped inward from the base point along each axis.
        let build = |base: &[f64], f_base: f64, evals: &mut usize, eval: &mut dyn FnMut(&[f64], &mut usize) -> f64| {
            let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
            simplex.push((base.to_vec(), f_base));
            for i in 0..n {
                if *evals >= self.max_evals {
                    break;
                }
                let width = bounds.upper[i] - bounds.lower[i];
                let mut step = self.initial_step * if width > 0.0 { width } else { 1.0 };
                if base[i] + step > bounds.upper[i] {
                    step = -step;
                }
                let mut v = base.to_vec();
                v[i] += step;
                bounds.project(&mut v);
                let fv = eval(&v, evals);
                simplex.push((v, fv));
            }
            simplex
        };
        let mut simplex = build(&start, f0, &mut evals, &mut eval);
        if simplex.len() < n + 1 {
            return best_of(simplex, evals);
        }

        let mut centroid = vec![0.0; n];
        let mut trial = vec![0.0; n];
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            let spread = if f_worst == f_best { 0.0 } else { f_worst - f_best };
            let diameter = simplex[1..]
                .iter()
                .map(|(v, _)| {
                    v.iter()
                        .zip(&simplex[0].0)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            if spread <= self.f_tol * (1.0 + f_best.abs()) && diameter <= self.x_tol {
                break;
            }
            if diameter == 0.0 {
                break;
            }
            // A simplex flattened onto a face of the box searches the face with
            // the pinned coordinates held fixed, then restarts in full from
            // whatever it found, as long as that keeps paying off.
            let pinned: Vec<bool> = (0..n)
                .map(|i| {
                    let x = simplex[0].0[i];
                    bounds.upper[i] > bounds.lower[i] && simplex.iter().all(|(v, _)| v[i] == x)
                })
                .collect();
            if pinned.iter().any(|p| *p) {
                let free: Vec<usize> = (0..n).filter(|i| !pinned[*i]).collect();
                let base = simplex[0].0.clone();
                let budget = self.max_evals.saturating_sub(evals + n);
                if free.is_empty() || budget <= free.len() + 1 {
                    break;
                }
                let sub = NelderMead {
                    max_evals: budget,
                    ..self.clone()
                };
                let sub_box = Bounds::new(
                    free.iter().map(|i| bounds.lower[*i]).collect(),
                    free.iter().map(|i| bounds.upper[*i]).collect(),
                );
                let z0: Vec<f64> = free.iter().map(|i| base[*i]).collect();
                let mut full = base.clone();
                let m = sub.minimize_dyn(
                    &mut |z: &[f64]| {
                        for (k, i) in free.iter().enumerate() {
                            full[*i] = z[k];
                        }
                        eval(&full, &mut 0)
                    },
                    &z0,
                    &sub_box,
                );
                evals += m.evals;
                if !(m.value < f_best) {
                    break;
                }
                let mut x = base;
                for (k, i) in free.iter().enumerate() {
                    x[*i] = m.x[k];
                }
                simplex = build(&x, m.value, &mut evals, &mut eval);
                if simplex.len() < n + 1 {
                    return best_of(simplex, evals);
                }
                continue;
            }

            centroid.iter_mut().for_each(|c| *c = 0.0);
            for (v, _) in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / nf;
                }
            }
            let worst = simplex[n].0.clone();
            let along = |coef: f64, out: &mut Vec<f64>| {
                for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                    *o = c + coef * (c - w);
                }
                bounds.project(out);
            };

            along(alpha, &mut trial);
            let fr = eval(&trial, &mut evals);
            let reflected = trial.clone();
            if fr < simplex[0].1 {
                if evals >= self.max_evals {
                    simplex[n] = (reflected, fr);
                    break;
                }
                along(gamma, &mut trial);
                let fe = eval(&trial, &mut evals);
                simplex[n] = if fe < fr {
                    (trial.clone(), fe)
                } else {
                    (reflected, fr)
                };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (reflected, fr);
                continue;
            }
            if evals >= self.max_evals {
                break;
            }
            let outside = fr < simplex[n].1;
            let coef = if outside { rho * alpha } else { -rho };
            along(coef, &mut trial);
            let fc = eval(&trial, &mut evals);
            if (outside && fc <= fr) || (!outside && fc < simplex[n].1) {
                simplex[n] = (trial.clone(), fc);
                continue;
            }
            // Shrink towards the best vertex.
            let best = simplex[0].0.clone();
            for (v, fv) in simplex[1..].iter_mut() {
                if evals >= self.max_evals {
                    break;
                }
                for (x, b) in v.iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                bounds.project(v);
                *fv = eval(v, &mut evals);
            }
        }
        best_of(simplex, evals)
    }
}

fn best_of(simplex: Vec<(Vec<f64>, f64)>, evals: usize) -> Minimum {
    let (x, value) = simplex
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty simplex");
    Minimum { x, value, evals }
}

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Randomly shifted (Cranley-Patterson) Halton sequence on the unit cube.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
}

impl Halton {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim <= PRIMES.len(), "Halton design supports up to {} dims", PRIMES.len());
        Self {
            shift: (0..dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    pub fn point(&self, index: usize) -> Vec<f64> {
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, p)| (radical_inverse(index as u64 + 1, p as u64) + s).fract())
            .collect()
    }

    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| self.point(i)).collect()
    }
}
