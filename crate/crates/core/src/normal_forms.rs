//! Hopf and Neimark–Sacker normal forms.
//!
//! The continuous Hopf field in Cartesian form is
//!
//! ```text
//! dx1/dt = αc μc x1 − ω x2 − αc x1 (x1² + x2²)
//! dx2/dt = ω x1 + αc μc x2 − αc x2 (x1² + x2²)
//! ```
//!
//! and its sampled counterpart is the truncated Neimark–Sacker map
//!
//! ```text
//! r[k+1] = r[k] + μ r[k] + α r[k]³,    θ[k+1] = θ[k] + φ
//! x[k+1] = (1 + μ + α xᵀx) R(φ) x[k]
//! ```
//!
//! With `μ > 0` and `α < 0` the map has an unstable fixed point at the origin
//! and an attracting invariant circle of radius `ρ = sqrt(−μ/α)`.

use std::f64::consts::TAU;
use std::io::{self, Write};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Normal-form state `(x1, x2)`.
pub type State2 = Vector2<f64>;

/// Default norm bound beyond which a trajectory is declared divergent.
pub const DEFAULT_OVERFLOW_BOUND: f64 = 1e12;

/// Counter-clockwise rotation by `phi` radians.
pub fn rotation(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Parameters of the continuous supercritical Hopf normal form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopfParams {
    alpha_c: f64,
    mu_c: f64,
    omega: f64,
}

impl HopfParams {
    pub fn new(alpha_c: f64, mu_c: f64, omega: f64) -> Result<Self> {
        for (name, v) in [("alpha_c", alpha_c), ("mu_c", mu_c), ("omega", omega)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(Self {
            alpha_c,
            mu_c,
            omega,
        })
    }

    pub fn alpha_c(&self) -> f64 {
        self.alpha_c
    }

    pub fn mu_c(&self) -> f64 {
        self.mu_c
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Radius of the attracting orbit, `sqrt(μc)`.
    pub fn radius(&self) -> f64 {
        self.mu_c.sqrt()
    }
}

/// Shape-class parameters of the discrete limit cycle.
///
/// The rotation per sample is always `phi = omega * tau`; it is derived at
/// construction rather than passed in, so the two can never disagree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitCycleParams {
    mu: f64,
    alpha: f64,
    omega: f64,
    tau: f64,
    phi: f64,
}

impl LimitCycleParams {
    /// Builds a supercritical parameter set. Rejects `mu <= 0`, `alpha >= 0`,
    /// and non-positive `omega` or `tau`.
    pub fn new(mu: f64, alpha: f64, omega: f64, tau: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mu must be > 0 for a supercritical limit cycle, got {mu}"
            )));
        }
        if !(alpha.is_finite() && alpha < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be < 0 for a supercritical limit cycle, got {alpha}"
            )));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "omega must be > 0, got {omega}"
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be > 0, got {tau}")));
        }
        Ok(Self {
            mu,
            alpha,
            omega,
            tau,
            phi: omega * tau,
        })
    }

    /// Same as [`LimitCycleParams::new`] but also checks a caller-supplied
    /// rotation against `omega * tau`.
    pub fn with_phi(mu: f64, alpha: f64, omega: f64, tau: f64, phi: f64) -> Result<Self> {
        let p = Self::new(mu, alpha, omega, tau)?;
        if phi != p.phi {
            return Err(Error::InvalidParameter(format!(
                "phi = {phi} does not equal omega*tau = {}",
                p.phi
            )));
        }
        Ok(p)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.phi)
    }
}

/// Long-run behaviour of the radius map for a given starting radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadiusClassification {
    FixedAtOrigin,
    ConvergesToLimitCycle,
    MapsToOrigin,
    Divergent,
}

pub fn hopf_vector_field(x: &State2, p: &HopfParams) -> State2 {
    let r2 = x.norm_squared();
    let radial = p.alpha_c * (p.mu_c - r2);
    State2::new(
        radial * x[0] - p.omega * x[1],
        p.omega * x[0] + radial * x[1],
    )
}

/// Classical RK4 integration of the Hopf field; returns `steps + 1` states.
pub fn integrate_hopf(x0: State2, p: &HopfParams, dt: f64, steps: usize) -> Vec<State2> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut x = x0;
    out.push(x);
    for _ in 0..steps {
        let k1 = hopf_vector_field(&x, p);
        let k2 = hopf_vector_field(&(x + k1 * (dt / 2.0)), p);
        let k3 = hopf_vector_field(&(x + k2 * (dt / 2.0)), p);
        let k4 = hopf_vector_field(&(x + k3 * dt), p);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x);
    }
    out
}

pub fn ns_radius_step(r: f64, p: &LimitCycleParams) -> f64 {
    r + p.mu * r + p.alpha * r * r * r
}

pub fn ns_map_step(x: &State2, p: &LimitCycleParams) -> State2 {
    let gain = 1.0 + p.mu + p.alpha * x.norm_squared();
    p.rotation() * x * gain
}

/// Radius `ρ = sqrt(−μ/α)` of the attracting circle.
pub fn limit_cycle_radius(p: &LimitCycleParams) -> f64 {
    (-p.mu / p.alpha).sqrt()
}

/// Returns `(ρ0, ρ∞)`: the radius mapped straight to the origin and the
/// escape radius of the truncated radius map.
pub fn critical_radii(p: &LimitCycleParams) -> (f64, f64) {
    let rho0 = (-(1.0 + p.mu) / p.alpha).sqrt();
    let rho_inf = (-(2.0 + p.mu) / p.alpha).sqrt();
    (rho0, rho_inf)
}

/// `r = ρ0` is matched exactly; nearby radii converge.
pub fn classify_initial_radius(r: f64, p: &LimitCycleParams) -> RadiusClassification {
    let (rho0, rho_inf) = critical_radii(p);
    if r == 0.0 {
        RadiusClassification::FixedAtOrigin
    } else if r == rho0 {
        RadiusClassification::MapsToOrigin
    } else if r > rho_inf {
        RadiusClassification::Divergent
    } else {
        RadiusClassification::ConvergesToLimitCycle
    }
}

/// Output of [`iterate_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State2>,
    /// Step index at which the norm first exceeded the bound. Iteration stops
    /// there, so `states` is shorter than requested.
    pub overflow_at: Option<usize>,
}

impl Trajectory {
    pub fn overflowed(&self) -> bool {
        self.overflow_at.is_some()
    }

    pub fn last(&self) -> &State2 {
        self.states.last().expect("trajectory always holds x0")
    }
}

pub fn iterate_trajectory(x0: State2, p: &LimitCycleParams, n_steps: usize) -> Trajectory {
    iterate_trajectory_bounded(x0, p, n_steps, DEFAULT_OVERFLOW_BOUND)
}

pub fn iterate_trajectory_bounded(
    x0: State2,
    p: &LimitCycleParams,
    n_steps: usize,
    bound: f64,
) -> Trajectory {
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0);
    let mut x = x0;
    for k in 1..=n_steps {
        x = ns_map_step(&x, p);
        if !(x.norm() <= bound) {
            return Trajectory {
                states,
                overflow_at: Some(k),
            };
        }
        states.push(x);
    }
    Trajectory {
        states,
        overflow_at: None,
    }
}

/// Seed points for phase portraits: 16 equally spaced angles on each of the
/// radii `{0.1, ρ/2, ρ, 2ρ}`, ordered radius-major.
pub fn phase_portrait_seeds(rho: f64) -> Vec<State2> {
    const ANGLES: usize = 16;
    [0.1, 0.5 * rho, rho, 2.0 * rho]
        .iter()
        .flat_map(|&r| {
            (0..ANGLES).map(move |i| {
                let th = TAU * i as f64 / ANGLES as f64;
                State2::new(r * th.cos(), r * th.sin())
            })
        })
        .collect()
}

/// Writes trajectories as `traj_id,k,x1,x2` rows.
pub fn write_phase_portrait_csv<W: Write>(mut w: W, trajectories: &[Vec<State2>]) -> io::Result<()> {
    writeln!(w, "traj_id,k,x1,x2")?;
    for (id, traj) in trajectories.iter().enumerate() {
        for (k, x) in traj.iter().enumerate() {
            writeln!(w, "{id},{k},{:.16e},{:.16e}", x[0], x[1])?;
        }
    }
    Ok(())
}
