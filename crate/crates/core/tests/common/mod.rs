//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mpctune_core::gp::{GpModel, KernelParams};
use mpctune_core::mpc::{mpc_objective, MpcConfig};
use mpctune_core::narx::NarxCoeffs;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Squared-exponential kernel written out element by element.
pub fn se(a: &[f64], b: &[f64], l: f64, sv: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..a.len() {
        d2 += (a[i] - b[i]) * (a[i] - b[i]);
    }
    sv * (-d2 / (2.0 * l * l)).exp()
}

pub struct DenseOracle {
    kinv: DMatrix<f64>,
    resid: DVector<f64>,
    log_det: f64,
    inputs: Vec<Vec<f64>>,
    l: f64,
    sv: f64,
    mean0: f64,
}

impl DenseOracle {
    /// Explicit inverse of `K + (σ² + jitter) I`.
    pub fn new(model: &GpModel) -> Self {
        let k = model.kernel();
        let n = model.len();
        let xs = model.inputs().to_vec();
        let mut m = DMatrix::from_fn(n, n, |i, j| se(&xs[i], &xs[j], k.lengthscale, k.signal_variance));
        for i in 0..n {
            m[(i, i)] += k.noise_variance + model.jitter();
        }
        let log_det = m.clone().lu().determinant().ln();
        let kinv = m.try_inverse().expect("invertible");
        let resid = DVector::from_iterator(n, model.targets().iter().map(|t| t - model.prior_mean()));
        Self {
            kinv,
            resid,
            log_det,
            inputs: xs,
            l: k.lengthscale,
            sv: k.signal_variance,
            mean0: model.prior_mean(),
        }
    }

    pub fn posterior(&self, q: &[f64]) -> (f64, f64) {
        let kq = DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|x| se(x, q, self.l, self.sv)));
        let mean = self.mean0 + (kq.transpose() * &self.kinv * &self.resid)[(0, 0)];
        let var = self.sv - (kq.transpose() * &self.kinv * &kq)[(0, 0)];
        (mean, var)
    }

    pub fn lml(&self) -> f64 {
        let n = self.resid.len() as f64;
        -0.5 * (self.resid.transpose() * &self.kinv * &self.resid)[(0, 0)]
            - 0.5 * self.log_det
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Random well-conditioned dataset in the unit cube.
pub fn random_gp<R: Rng>(rng: &mut R, n: usize, d: usize) -> GpModel {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let k = KernelParams::new(
        rng.random_range(0.3..1.5),
        rng.random_range(0.5..2.0),
        rng.random_range(1e-3..1e-1),
    )
    .unwrap();
    let mean = rng.random_range(-1.0..1.0);
    GpModel::new(k, xs, ys, mean).unwrap()
}

/// Monte-Carlo `E[max(0, η − f)]` with `f ~ N(μ, σ²)`; returns (mean, standard error).
pub fn mc_improvement<R: Rng>(rng: &mut R, mu: f64, sigma: f64, eta: f64, samples: usize) -> (f64, f64) {
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let z: f64 = rng.sample(StandardNormal);
        let v = (eta - (mu + sigma * z)).max(0.0);
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exhaustive scan of `[F_min, F_max]²` for `Np = 2`.
pub fn mpc_grid_optimum(y_scaled: [f64; 2], coeffs: &NarxCoeffs, config: &MpcConfig, points: usize) -> (f64, [f64; 2]) {
    let (lo, hi) = config.input_bounds;
    let mut best = (f64::INFINITY, [lo, lo]);
    for i in 0..points {
        for j in 0..points {
            let u = [
                lo + (hi - lo) * i as f64 / (points - 1) as f64,
                lo + (hi - lo) * j as f64 / (points - 1) as f64,
            ];
            let v = mpc_objective(&u, y_scaled, coeffs, config);
            if v < best.0 {
                best = (v, u);
            }
        }
    }
    best
}

/// Random NARX model in the tuning box.
pub fn random_coeffs<R: Rng>(rng: &mut R) -> NarxCoeffs {
    let v: Vec<f64> = (0..14).map(|_| rng.random_range(-2.0..2.0)).collect();
    NarxCoeffs::from_slice(&v).unwrap()
}

/// `(c_A, c_B, T_R, T_K)` at steps 10, 20, 30, 40 of a constant `F = 14.19`
/// run from `(1, 1, 100, 100)` with `c_A0 = 5.1`, integrated by an adaptive
/// 8th-order Dormand-Prince solver at `rtol = atol = 1e-13`.
pub const REFERENCE_F: f64 = 14.19;
pub const REFERENCE_TRAJECTORY: [(usize, [f64; 4]); 4] = [
    (10, [1.0701605768444749, 0.7619452893625677, 125.02283480639475, 114.60971280790068]),
    (20, [0.6476978273418994, 0.5729234626695028, 137.5532451225809, 130.18218163346427]),
    (30, [0.5324737844104152, 0.4656204666553784, 142.3817497762128, 136.32261944125744]),
    (40, [0.4909907323767899, 0.4290002016612839, 144.39241418263748, 138.8350465821359]),
];

/// One-sided sign test p-value for `wins` successes out of `n` non-tied pairs.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k) * 0.5f64.powi(n as i32);
    }
    p
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares slope of `ln err` against `ln h`.
pub fn loglog_slope(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
