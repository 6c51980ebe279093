//! Four-state CSTR (A → B → C, 2A → D) with Arrhenius kinetics.
//!
//! This is the ground-truth black box. Controller code only sees noisy
//! measurements of `(c_B, T_R)` through [`Plant::measure`].

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PlantParams {
    pub k01: f64,
    pub k02: f64,
    pub k03: f64,
    pub Ea1R: f64,
    pub Ea2R: f64,
    pub Ea3R: f64,
    pub dH_AB: f64,
    pub dH_BC: f64,
    pub dH_AD: f64,
    pub rho: f64,
    pub cp: f64,
    pub cpK: f64,
    pub A: f64,
    pub VR: f64,
    pub mK: f64,
    pub Tin: f64,
    pub kW: f64,
    pub QK_dot: f64,
    /// Feed concentration of A. Has no published value, so it must be given.
    pub cA0: f64,
}

impl PlantParams {
    /// Benchmark constants with the caller-supplied feed concentration.
    pub fn benchmark(c_a0: f64) -> Self {
        Self {
            k01: 1.287e12,
            k02: 1.287e12,
            k03: 9.043e9,
            Ea1R: 9758.3,
            Ea2R: 9758.3,
            Ea3R: 7704.0,
            dH_AB: 4.2,
            dH_BC: -11.0,
            dH_AD: -41.85,
            rho: 0.9342,
            cp: 3.01,
            cpK: 2.0,
            A: 0.215,
            VR: 10.01,
            mK: 5.0,
            Tin: 130.0,
            kW: 4032.0,
            QK_dot: -4500.0,
            cA0: c_a0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.k01, self.k02, self.k03, self.Ea1R, self.Ea2R, self.Ea3R, self.dH_AB, self.dH_BC,
            self.dH_AD, self.rho, self.cp, self.cpK, self.A, self.VR, self.mK, self.Tin, self.kW,
            self.QK_dot, self.cA0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("plant parameters must be finite".into()));
        }
        if [self.rho, self.cp, self.cpK, self.VR, self.mK].iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("rho, cp, cpK, VR and mK must be positive".into()));
        }
        if self.cA0 < 0.0 {
            return Err(Error::Config("cA0 must be non-negative".into()));
        }
        Ok(())
    }

    /// Rate constants `(k1, k2, k3)` at reactor temperature `t_r` (°C).
    pub fn rate_constants(&self, t_r: f64) -> (f64, f64, f64) {
        let t = t_r + KELVIN_OFFSET;
        (
            self.k01 * (-self.Ea1R / t).exp(),
            self.k02 * (-self.Ea2R / t).exp(),
            self.k03 * (-self.Ea3R / t).exp(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct PlantState {
    pub cA: f64,
    pub cB: f64,
    pub TR: f64,
    pub TK: f64,
}

impl PlantState {
    pub const INITIAL: PlantState = PlantState {
        cA: 1.0,
        cB: 1.0,
        TR: 100.0,
        TK: 100.0,
    };

    fn to_array(self) -> [f64; 4] {
        [self.cA, self.cB, self.TR, self.TK]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            cA: a[0],
            cB: a[1],
            TR: a[2],
            TK: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Standard deviations of the `(c_B, T_R)` measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct NoiseSpec {
    pub sigma_B: f64,
    pub sigma_R: f64,
}

#[allow(non_snake_case)]
impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        sigma_B: 0.0,
        sigma_R: 0.0,
    };

    pub fn new(sigma_B: f64, sigma_R: f64) -> Result<Self> {
        if !(sigma_B >= 0.0 && sigma_R >= 0.0) {
            return Err(Error::Config("noise standard deviations must be >= 0".into()));
        }
        Ok(Self { sigma_B, sigma_R })
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_B == 0.0 && self.sigma_R == 0.0
    }
}

/// Time derivatives `(ċA, ċB, ṪR, ṪK)` in units per hour at feed rate `f`.
pub fn derivatives(s: &PlantState, f: f64, p: &PlantParams) -> PlantState {
    let (k1, k2, k3) = p.rate_constants(s.TR);
    let r1 = k1 * s.cA;
    let r2 = k2 * s.cB;
    let r3 = k3 * s.cA * s.cA;
    PlantState {
        cA: f * (p.cA0 - s.cA) - r1 - r3,
        cB: -f * s.cB + r1 - r2,
        TR: f * (p.Tin - s.TR) + p.kW * p.A / (p.rho * p.cp * p.VR) * (s.TK - s.TR)
            - (r1 * p.dH_AB + r2 * p.dH_BC + r3 * p.dH_AD) / (p.rho * p.cp),
        TK: (p.QK_dot + p.kW * p.A * (s.TR - s.TK)) / (p.mK * p.cpK),
    }
}

/// Advances the state by `dt` hours with `substeps` classical RK4 steps at constant `f`.
pub fn step(s: &PlantState, f: f64, dt: f64, substeps: usize, p: &PlantParams) -> Result<PlantState> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(Error::Usage(format!("invalid step dt={dt} substeps={substeps}")));
    }
    if !f.is_finite() {
        return Err(Error::Usage(format!("non-finite input {f}")));
    }
    let h = dt / substeps as f64;
    let rate = |x: [f64; 4]| derivatives(&PlantState::from_array(x), f, p).to_array();
    let axpy = |x: [f64; 4], a: f64, d: [f64; 4]| std::array::from_fn(|i| x[i] + a * d[i]);
    let mut x = s.to_array();
    for _ in 0..substeps {
        let k1 = rate(x);
        let k2 = rate(axpy(x, h / 2.0, k1));
        let k3 = rate(axpy(x, h / 2.0, k2));
        let k4 = rate(axpy(x, h, k3));
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    let out = PlantState::from_array(x);
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Integration(format!("non-finite state {out:?} at F={f}")))
    }
}

/// Noisy `(c_B, T_R)` measurement.
pub fn measure<R: Rng + ?Sized>(s: &PlantState, noise: &NoiseSpec, rng: &mut R) -> (f64, f64) {
    // both draws are taken even for zero noise so streams stay aligned
    let eb: f64 = rng.sample(StandardNormal);
    let er: f64 = rng.sample(StandardNormal);
    let cb = if noise.sigma_B == 0.0 { s.cB } else { s.cB + noise.sigma_B * eb };
    let tr = if noise.sigma_R == 0.0 { s.TR } else { s.TR + noise.sigma_R * er };
    (cb, tr)
}

/// A simulated reactor with fixed sampling interval.
#[derive(Debug, Clone)]
pub struct Plant {
    pub params: PlantParams,
    pub state: PlantState,
    pub dt: f64,
    pub substeps: usize,
}

impl Plant {
    pub fn new(params: PlantParams, state: PlantState, dt: f64, substeps: usize) -> Self {
        Self {
            params,
            state,
            dt,
            substeps,
        }
    }

    pub fn advance(&mut self, f: f64) -> Result<PlantState> {
        self.state = step(&self.state, f, self.dt, self.substeps, &self.params)?;
        Ok(self.state)
    }

    pub fn measure<R: Rng + ?Sized>(&self, noise: &NoiseSpec, rng: &mut R) -> (f64, f64) {
        measure(&self.state, noise, rng)
    }
}
