//! Gaussian-process regression with an isotropic squared-exponential kernel.
//!
//! Inputs live in the normalized unit box. The model stores its training data
//! together with the Cholesky factor of `K + σ²I` and the weight vector
//! `(K + σ²I)⁻¹(y − m)`, both rebuilt whenever data or hyperparameters change.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Bounds, Halton, NelderMead};

pub const LENGTHSCALE_RANGE: (f64, f64) = (1e-3, 1e3);
pub const SIGNAL_VARIANCE_RANGE: (f64, f64) = (1e-6, 1e6);
pub const NOISE_VARIANCE_RANGE: (f64, f64) = (1e-10, 1e2);

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    /// Validates the hyperparameter ranges. A noise variance of exactly zero
    /// is accepted for noise-free interpolation.
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let in_range = |v: f64, (lo, hi): (f64, f64)| v.is_finite() && v >= lo && v <= hi;
        if !in_range(lengthscale, LENGTHSCALE_RANGE) {
            return Err(Error::Usage(format!("lengthscale {lengthscale} out of range")));
        }
        if !in_range(signal_variance, SIGNAL_VARIANCE_RANGE) {
            return Err(Error::Usage(format!(
                "signal variance {signal_variance} out of range"
            )));
        }
        if !(noise_variance == 0.0 || in_range(noise_variance, NOISE_VARIANCE_RANGE)) {
            return Err(Error::Usage(format!(
                "noise variance {noise_variance} out of range"
            )));
        }
        Ok(Self {
            lengthscale,
            signal_variance,
            noise_variance,
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::Usage(format!(
                "kernel inputs have dimensions {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    #[inline]
    fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
    }
}

/// Squared-exponential covariance `sv · exp(−‖a−b‖² / 2l²)`.
pub fn kernel_eval(a: &[f64], b: &[f64], k: &KernelParams) -> Result<f64> {
    k.eval(a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorMoments {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: KernelParams,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    prior_mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Serializable snapshot written into run logs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: KernelParams,
    pub prior_mean: f64,
    pub jitter: f64,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl GpModel {
    pub fn new(
        kernel: KernelParams,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        prior_mean: f64,
    ) -> Result<Self> {
        let n = inputs.len();
        if n == 0 || n != targets.len() {
            return Err(Error::Usage(format!(
                "GP needs n >= 1 matched observations, got {} inputs and {} targets",
                n,
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dim || x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Usage("GP inputs must be finite and share a dimension".into()));
        }
        if targets.iter().any(|t| !t.is_finite()) || !prior_mean.is_finite() {
            return Err(Error::Usage("GP targets must be finite".into()));
        }

        let mut gram = DMatrix::from_fn(n, n, |i, j| kernel.eval_unchecked(&inputs[i], &inputs[j]));
        for i in 0..n {
            gram[(i, i)] += kernel.noise_variance;
        }
        let (chol, jitter) = factorize(gram, kernel.signal_variance)?;
        let resid = DVector::from_iterator(n, targets.iter().map(|t| t - prior_mean));
        let alpha = chol.solve(&resid);
        Ok(Self {
            kernel,
            inputs,
            targets,
            prior_mean,
            jitter,
            chol,
            alpha,
        })
    }

    /// Builds a model whose prior mean is the empirical mean of the targets.
    pub fn with_empirical_mean(
        kernel: KernelParams,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        let mean = if targets.is_empty() {
            0.0
        } else {
            targets.iter().sum::<f64>() / targets.len() as f64
        };
        Self::new(kernel, inputs, targets, mean)
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    /// Diagonal jitter that was needed on top of the noise variance.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Returns a new model with one more observation and the same hyperparameters.
    pub fn with_observation(&self, x: Vec<f64>, y: f64) -> Result<Self> {
        let mut inputs = self.inputs.clone();
        let mut targets = self.targets.clone();
        inputs.push(x);
        targets.push(y);
        Self::new(self.kernel, inputs, targets, self.prior_mean)
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel,
            prior_mean: self.prior_mean,
            jitter: self.jitter,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn posterior(&self, query: &[f64]) -> Result<PosteriorMoments> {
        if query.len() != self.dim() {
            return Err(Error::Usage(format!(
                "query has dimension {}, model has {}",
                query.len(),
                self.dim()
            )));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::Usage("non-finite GP query".into()));
        }
        Ok(self.posterior_unchecked(query))
    }

    pub(crate) fn posterior_unchecked(&self, query: &[f64]) -> PosteriorMoments {
        let n = self.len();
        let kq = DVector::from_iterator(
            n,
            self.inputs.iter().map(|x| self.kernel.eval_unchecked(x, query)),
        );
        let mean = self.prior_mean + kq.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kq)
            .expect("Cholesky factor has a positive diagonal");
        let variance = (self.kernel.signal_variance - v.dot(&v)).max(0.0);
        PosteriorMoments { mean, variance }
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let resid = DVector::from_iterator(self.len(), self.targets.iter().map(|t| t - self.prior_mean));
        let log_det: f64 = self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        -0.5 * resid.dot(&self.alpha) - 0.5 * log_det - 0.5 * n * LN_2PI
    }
}

/// Cholesky with adaptive diagonal jitter, `1e-10·sv` growing tenfold up to `1e-4·sv`.
fn factorize(gram: DMatrix<f64>, signal_variance: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(gram.clone()) {
        if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Ok((c, 0.0));
        }
    }
    let mut jitter = JITTER_START * signal_variance;
    while jitter <= JITTER_MAX * signal_variance * (1.0 + 1e-9) {
        let mut m = gram.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            if c.l_dirty().diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok((c, jitter));
            }
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(
        "covariance matrix not positive definite after maximum jitter".into(),
    ))
}

pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// Per-hyperparameter search intervals for [`fit_hyperparameters`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl Default for HyperBounds {
    fn default() -> Self {
        Self {
            lengthscale: (1e-2, 1e2),
            signal_variance: SIGNAL_VARIANCE_RANGE,
            noise_variance: NOISE_VARIANCE_RANGE,
        }
    }
}

impl HyperBounds {
    fn validate(&self) -> Result<()> {
        let ok = |(lo, hi): (f64, f64), (rlo, rhi): (f64, f64)| lo > 0.0 && lo <= hi && lo >= rlo && hi <= rhi;
        if ok(self.lengthscale, LENGTHSCALE_RANGE)
            && ok(self.signal_variance, SIGNAL_VARIANCE_RANGE)
            && ok(self.noise_variance, NOISE_VARIANCE_RANGE)
        {
            Ok(())
        } else {
            Err(Error::Usage(format!("hyperparameter bounds {self:?} invalid")))
        }
    }

    fn log_box(&self) -> Bounds {
        Bounds::new(
            vec![
                self.lengthscale.0.ln(),
                self.signal_variance.0.ln(),
                self.noise_variance.0.ln(),
            ],
            vec![
                self.lengthscale.1.ln(),
                self.signal_variance.1.ln(),
                self.noise_variance.1.ln(),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub bounds: HyperBounds,
    pub restarts: usize,
    pub max_evals: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: HyperBounds::default(),
            restarts: 8,
            max_evals: 300,
        }
    }
}

/// Point-estimate hyperparameters maximizing the log marginal likelihood.
///
/// Optimizes `(ln l, ln sv, ln σ²)` with bounded Nelder-Mead from `restarts`
/// shifted-Halton starts. The best restart wins, ties going to the lower index.
/// The prior mean is the empirical target mean.
pub fn fit_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    config: &FitConfig,
    seed: u64,
) -> Result<GpModel> {
    if inputs.len() < 2 || inputs.len() != targets.len() {
        return Err(Error::Usage(format!(
            "hyperparameter fit needs n >= 2 matched observations, got {}",
            inputs.len()
        )));
    }
    config.bounds.validate()?;
    let log_box = config.bounds.log_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = Halton::new(3, &mut rng);
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;

    let objective = |z: &[f64]| -> f64 {
        let k = KernelParams {
            lengthscale: z[0].exp(),
            signal_variance: z[1].exp(),
            noise_variance: z[2].exp(),
        };
        match GpModel::new(k, inputs.to_vec(), targets.to_vec(), mean) {
            Ok(m) => -m.log_marginal_likelihood(),
            Err(_) => f64::INFINITY,
        }
    };

    let nm = NelderMead {
        max_evals: config.max_evals,
        initial_step: 0.1,
        f_tol: 1e-9,
        x_tol: 1e-6,
    };
    let best = (0..config.restarts.max(1))
        .map(|i| {
            let start = log_box.from_unit(&design.point(i));
            nm.minimize(objective, &start, &log_box)
        })
        .enumerate()
        .fold(None::<(usize, crate::optim::Minimum)>, |acc, (i, m)| match acc {
            Some((j, b)) if b.value <= m.value => Some((j, b)),
            _ => Some((i, m)),
        })
        .map(|(_, m)| m)
        .expect("at least one restart");

    if !best.value.is_finite() {
        return Err(Error::Numerical(
            "no hyperparameter restart produced a valid factorization".into(),
        ));
    }
    let kernel = KernelParams {
        lengthscale: best.x[0].exp(),
        signal_variance: best.x[1].exp(),
        noise_variance: best.x[2].exp(),
    };
    GpModel::new(kernel, inputs.to_vec(), targets.to_vec(), mean)
}

/// Starting points used by [`fit_hyperparameters`], exposed for tests.
pub fn fit_start_points(config: &FitConfig, seed: u64) -> Vec<KernelParams> {
    let log_box = config.bounds.log_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = Halton::new(3, &mut rng);
    (0..config.restarts.max(1))
        .map(|i| {
            let z = log_box.from_unit(&design.point(i));
            KernelParams {
                lengthscale: z[0].exp(),
                signal_variance: z[1].exp(),
                noise_variance: z[2].exp(),
            }
        })
        .collect()
}
