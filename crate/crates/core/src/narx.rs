//! Second-order polynomial NARX model with one output lag and one input lag.
//!
//! Each of the two outputs `(c_B, T_R)` is predicted from the basis
//! `{1, y₁, y₂, u, y₁², y₂², u²}` in scaled units.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASIS_LEN: usize = 7;
pub const N_COEFFS: usize = 2 * BASIS_LEN;
/// Scaled predictions are clamped to `±PREDICTION_CLAMP` inside horizons.
pub const PREDICTION_CLAMP: f64 = 10.0;
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Physical range mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Config(format!("scaling range [{min}, {max}] is empty")));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn unscale(&self, s: f64) -> f64 {
        self.min + s * (self.max - self.min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ScalingSpec {
    pub cB: Range,
    pub TR: Range,
    pub F: Range,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            cB: Range { min: 0.0, max: 2.0 },
            TR: Range {
                min: 100.0,
                max: 150.0,
            },
            F: Range { min: 5.0, max: 35.0 },
        }
    }
}

impl ScalingSpec {
    pub fn validate(&self) -> Result<()> {
        for r in [self.cB, self.TR, self.F] {
            Range::new(r.min, r.max)?;
        }
        Ok(())
    }

    pub fn scale_output(&self, y: [f64; 2]) -> [f64; 2] {
        [self.cB.scale(y[0]), self.TR.scale(y[1])]
    }

    pub fn unscale_output(&self, y: [f64; 2]) -> [f64; 2] {
        [self.cB.unscale(y[0]), self.TR.unscale(y[1])]
    }

    pub fn scale_input(&self, u: f64) -> f64 {
        self.F.scale(u)
    }

    pub fn unscale_input(&self, u: f64) -> f64 {
        self.F.unscale(u)
    }
}

/// Two rows of basis coefficients, `c_B` row first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarxCoeffs {
    pub rows: [[f64; BASIS_LEN]; 2],
}

impl NarxCoeffs {
    pub const ZERO: NarxCoeffs = NarxCoeffs {
        rows: [[0.0; BASIS_LEN]; 2],
    };

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() != N_COEFFS {
            return Err(Error::Usage(format!(
                "expected {N_COEFFS} NARX coefficients, got {}",
                v.len()
            )));
        }
        let mut rows = [[0.0; BASIS_LEN]; 2];
        rows[0].copy_from_slice(&v[..BASIS_LEN]);
        rows[1].copy_from_slice(&v[BASIS_LEN..]);
        Ok(Self { rows })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.rows.iter().flatten().copied().collect()
    }
}

#[inline]
pub fn basis(y: [f64; 2], u: f64) -> [f64; BASIS_LEN] {
    [1.0, y[0], y[1], u, y[0] * y[0], y[1] * y[1], u * u]
}

#[inline]
pub fn predict_one_step(c: &NarxCoeffs, y: [f64; 2], u: f64) -> [f64; 2] {
    let phi = basis(y, u);
    let dot = |row: &[f64; BASIS_LEN]| row.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>();
    [dot(&c.rows[0]), dot(&c.rows[1])]
}

/// Iterated one-step predictions `y₁..y_N` from `y0` under `u_seq`, with
/// every prediction clamped to `±PREDICTION_CLAMP`.
pub fn simulate_horizon(c: &NarxCoeffs, y0: [f64; 2], u_seq: &[f64]) -> Vec<[f64; 2]> {
    simulate_horizon_with(c, y0, u_seq, true)
}

pub fn simulate_horizon_with(c: &NarxCoeffs, y0: [f64; 2], u_seq: &[f64], clamp: bool) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(u_seq.len());
    let mut y = y0;
    for &u in u_seq {
        y = predict_one_step(c, y, u);
        if clamp {
            y = y.map(clamp_prediction);
        }
        out.push(y);
    }
    out
}

#[inline]
fn clamp_prediction(v: f64) -> f64 {
    if v.is_nan() {
        PREDICTION_CLAMP
    } else {
        v.clamp(-PREDICTION_CLAMP, PREDICTION_CLAMP)
    }
}

/// One row of identification data in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarxSample {
    pub y: [f64; 2],
    pub u: f64,
    pub y_next: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub rows: usize,
    /// Ridge fallback was used because the regressors were rank deficient.
    pub ridge: bool,
    pub train_accuracy: [f64; 2],
}

/// Per-output ordinary least squares on the 7-term basis.
pub fn fit_least_squares(data: &[NarxSample]) -> Result<(NarxCoeffs, FitReport)> {
    if data.len() < N_COEFFS {
        return Err(Error::Usage(format!(
            "need at least {N_COEFFS} rows to fit, got {}",
            data.len()
        )));
    }
    let x = DMatrix::from_fn(data.len(), BASIS_LEN, |i, j| basis(data[i].y, data[i].u)[j]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ridge = !(smin > smax * 1e-12);

    let xtx = x.transpose() * &x;
    let mut rows = [[0.0; BASIS_LEN]; 2];
    for (out, row) in rows.iter_mut().enumerate() {
        let target = DVector::from_iterator(data.len(), data.iter().map(|s| s.y_next[out]));
        let sol = if ridge {
            let a = &xtx + DMatrix::identity(BASIS_LEN, BASIS_LEN) * RIDGE_LAMBDA;
            let b = x.transpose() * &target;
            a.cholesky()
                .ok_or_else(|| Error::Numerical("ridge system not positive definite".into()))?
                .solve(&b)
        } else {
            svd.solve(&target, 0.0)
                .map_err(|e| Error::Numerical(format!("least-squares solve failed: {e}")))?
        };
        row.copy_from_slice(sol.as_slice());
    }
    let coeffs = NarxCoeffs { rows };
    let report = FitReport {
        rows: data.len(),
        ridge,
        train_accuracy: one_step_accuracy(&coeffs, data),
    };
    Ok((coeffs, report))
}

/// `1 − ‖y − ŷ‖ / ‖y − ȳ‖` for each output over one-step-ahead predictions.
pub fn one_step_accuracy(c: &NarxCoeffs, data: &[NarxSample]) -> [f64; 2] {
    let n = data.len().max(1) as f64;
    std::array::from_fn(|o| {
        let mean = data.iter().map(|s| s.y_next[o]).sum::<f64>() / n;
        let (err, dev) = data.iter().fold((0.0, 0.0), |(e, d), s| {
            let p = predict_one_step(c, s.y, s.u)[o];
            (e + (s.y_next[o] - p).powi(2), d + (s.y_next[o] - mean).powi(2))
        });
        if dev == 0.0 {
            if err == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            1.0 - (err / dev).sqrt()
        }
    })
}
