//! Minimal single-phase grid: ideal supply behind a line resistance `R1`, a
//! series `R2 L2 C2` load, and two ideal current sources at the point of
//! common coupling (compensation `i_c` and disturbance `i_d`).
//!
//! State `x = (q_l, i_l)`, input `u = i_c`, disturbances `v = (i_d, v_s)`,
//! outputs `y = (v_c, i_l)`.
//!
//! Phasors follow the sine convention: `a sin(nωt + θ)` ↔ `a e^{jθ}`.
//! The supply amplitude is a peak value.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linear_plant::ContinuousStateSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCircuitParams {
    pub r1: f64,
    pub r2: f64,
    pub l2: f64,
    pub c2: f64,
    /// Fundamental frequency in Hz.
    pub f: f64,
    /// Supply peak voltage.
    pub vs_amplitude: f64,
}

impl Default for GridCircuitParams {
    fn default() -> Self {
        Self {
            r1: 100.0,
            r2: 10.0,
            l2: 0.1,
            c2: 0.01,
            f: 50.0,
            vs_amplitude: 400.0,
        }
    }
}

impl GridCircuitParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("R1", self.r1),
            ("R2", self.r2),
            ("L2", self.l2),
            ("C2", self.c2),
            ("f", self.f),
            ("vs_amplitude", self.vs_amplitude),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        TAU * self.f
    }

    /// Load-branch impedance plus `R1` at harmonic `n`.
    fn loop_impedance(&self, n: usize) -> Complex64 {
        let w = n as f64 * self.omega();
        Complex64::new(self.r1 + self.r2, w * self.l2 - 1.0 / (w * self.c2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicComponent {
    order: usize,
    amplitude: f64,
    phase: f64,
}

impl HarmonicComponent {
    pub fn new(order: usize, amplitude: f64, phase: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("harmonic order must be >= 1".into()));
        }
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "harmonic amplitude must be >= 0, got {amplitude}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidParameter("harmonic phase must be finite".into()));
        }
        Ok(Self {
            order,
            amplitude,
            phase,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn phasor(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

/// 2 A third and 3 A fifth harmonic with phases `atan(4/3)` and
/// `atan(3/4) + π/2`.
pub fn standard_distortion() -> Vec<HarmonicComponent> {
    vec![
        HarmonicComponent::new(3, 2.0, (4.0f64 / 3.0).atan()).unwrap(),
        HarmonicComponent::new(5, 3.0, (3.0f64 / 4.0).atan() + FRAC_PI_2).unwrap(),
    ]
}

pub fn build_grid_state_space(p: &GridCircuitParams) -> ContinuousStateSpace {
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[0.0, 1.0, -1.0 / (p.c2 * p.l2), -(p.r2 + p.r1) / p.l2],
    );
    let b = DMatrix::from_row_slice(2, 1, &[0.0, p.r1 / p.l2]);
    let f = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, p.r1 / p.l2, 1.0 / p.l2]);
    let c = DMatrix::from_row_slice(2, 2, &[1.0 / p.c2, 0.0, 0.0, 1.0]);
    ContinuousStateSpace::new(a, b, f, c).expect("grid matrices are 2x2 and finite")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhasorSource {
    /// The supply at its configured amplitude and zero phase.
    Supply,
    /// A disturbance current phasor injected at the coupling point.
    DisturbanceCurrent(Complex64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStatePhasors {
    pub i_l: Complex64,
    pub v_c: Complex64,
}

/// Steady-state load current and capacitor voltage at harmonic `n` due to a
/// single source, the other source removed.
pub fn steady_state_phasor(p: &GridCircuitParams, n: usize, source: PhasorSource) -> SteadyStatePhasors {
    let z = p.loop_impedance(n);
    let drive = match source {
        PhasorSource::Supply => Complex64::new(p.vs_amplitude, 0.0),
        PhasorSource::DisturbanceCurrent(i_d) => i_d * p.r1,
    };
    let i_l = drive / z;
    let v_c = i_l / Complex64::new(0.0, n as f64 * p.omega() * p.c2);
    SteadyStatePhasors { i_l, v_c }
}

/// Per-harmonic steady-state amplitudes of `(i_l, v_c)` for orders
/// `1..=max_order`, supply at the fundamental plus the given disturbance.
pub fn phasor_harmonic_amplitudes(
    p: &GridCircuitParams,
    disturbance: &[HarmonicComponent],
    max_order: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut i_l = vec![Complex64::new(0.0, 0.0); max_order];
    let mut v_c = vec![Complex64::new(0.0, 0.0); max_order];
    if max_order >= 1 {
        let s = steady_state_phasor(p, 1, PhasorSource::Supply);
        i_l[0] += s.i_l;
        v_c[0] += s.v_c;
    }
    for h in disturbance.iter().filter(|h| h.order <= max_order) {
        let s = steady_state_phasor(p, h.order, PhasorSource::DisturbanceCurrent(h.phasor()));
        i_l[h.order - 1] += s.i_l;
        v_c[h.order - 1] += s.v_c;
    }
    (
        i_l.iter().map(|c| c.norm()).collect(),
        v_c.iter().map(|c| c.norm()).collect(),
    )
}

/// Scaling `x = M x̃` with `M = [[0, ρv C2], [ρi, 0]]`, which maps the
/// undisturbed steady state onto the unit circle: `x̃1 = i_l/ρi`,
/// `x̃2 = v_c/ρv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormScaling {
    rho_v: f64,
    rho_i: f64,
    c2: f64,
}

impl NormalFormScaling {
    pub fn new(rho_v: f64, rho_i: f64, c2: f64) -> Result<Self> {
        if !(rho_v > 0.0 && rho_i > 0.0 && c2 > 0.0) || !(rho_v * rho_i * c2).is_finite() {
            return Err(Error::SingularTransform);
        }
        Ok(Self { rho_v, rho_i, c2 })
    }

    pub fn identity_like(c2: f64) -> Result<Self> {
        Self::new(1.0 / c2, 1.0, c2)
    }

    pub fn rho_v(&self) -> f64 {
        self.rho_v
    }

    pub fn rho_i(&self) -> f64 {
        self.rho_i
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, self.rho_v * self.c2, self.rho_i, 0.0)
    }

    pub fn inverse(&self) -> Matrix2<f64> {
        Matrix2::new(0.0, 1.0 / self.rho_i, 1.0 / (self.rho_v * self.c2), 0.0)
    }

    pub fn to_normal(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[1] / self.rho_i, x[0] / (self.rho_v * self.c2)])
    }

    pub fn to_physical(&self, xt: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.rho_v * self.c2 * xt[1], self.rho_i * xt[0]])
    }
}

pub fn compute_normal_form_scaling(p: &GridCircuitParams) -> Result<NormalFormScaling> {
    p.validate()?;
    let s = steady_state_phasor(p, 1, PhasorSource::Supply);
    NormalFormScaling::new(s.v_c.norm(), s.i_l.norm(), p.c2)
}

/// Similarity transform to normal-form coordinates `x̃ = M⁻¹ x`.
pub fn transform_to_normal_form(css: &ContinuousStateSpace, s: &NormalFormScaling) -> Result<ContinuousStateSpace> {
    if css.n_states() != 2 {
        return Err(Error::DimensionMismatch {
            context: "normal-form transform requires two states",
            expected: 2,
            actual: css.n_states(),
        });
    }
    transform_with(css, &DMatrix::from_iterator(2, 2, s.matrix().iter().copied()))
}

/// General similarity transform `x = T x̃`.
pub fn transform_with(css: &ContinuousStateSpace, t: &DMatrix<f64>) -> Result<ContinuousStateSpace> {
    let t_inv = t.clone().try_inverse().ok_or(Error::SingularTransform)?;
    ContinuousStateSpace::new(
        &t_inv * css.a() * t,
        &t_inv * css.b(),
        &t_inv * css.f(),
        css.c() * t,
    )
}

/// Disturbance sample `(i_d, v_s)` at `t = kτ`.
pub fn synthesize_disturbance(
    spec: &[HarmonicComponent],
    vs_amplitude: f64,
    f: f64,
    k: usize,
    tau: f64,
) -> (f64, f64) {
    let wt = TAU * f * k as f64 * tau;
    let i_d = spec
        .iter()
        .map(|h| h.amplitude * (h.order as f64 * wt + h.phase).sin())
        .sum();
    (i_d, vs_amplitude * wt.sin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_matrices() {
        let css = build_grid_state_space(&GridCircuitParams::default());
        assert_relative_eq!(css.a(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1000.0, -1100.0]), max_relative = 1e-14);
        assert_relative_eq!(css.b(), &DMatrix::from_row_slice(2, 1, &[0.0, 1000.0]), max_relative = 1e-14);
        assert_relative_eq!(css.f(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1000.0, 10.0]), max_relative = 1e-14);
        assert_relative_eq!(css.c(), &DMatrix::from_row_slice(2, 2, &[100.0, 0.0, 0.0, 1.0]), max_relative = 1e-14);
    }

    #[test]
    fn default_plant_is_overdamped() {
        // λ² + 1100 λ + 1000 = 0
        let disc: f64 = 1100.0 * 1100.0 - 4000.0;
        let roots = [(-1100.0 + disc.sqrt()) / 2.0, (-1100.0 - disc.sqrt()) / 2.0];
        assert!(roots.iter().all(|r| *r < 0.0));
        let css = build_grid_state_space(&GridCircuitParams::default());
        assert_relative_eq!(css.a().trace(), roots[0] + roots[1], max_relative = 1e-12);
        assert_relative_eq!(css.a().determinant(), roots[0] * roots[1], max_relative = 1e-9);
    }

    #[test]
    fn supply_phasor_amplitudes() {
        let p = GridCircuitParams::default();
        let s = steady_state_phasor(&p, 1, PhasorSource::Supply);
        let z = (110.0f64.powi(2) + (p.omega() * 0.1 - 1.0 / (p.omega() * 0.01)).powi(2)).sqrt();
        assert_relative_eq!(z, 114.311, epsilon = 1e-3);
        assert_relative_eq!(s.i_l.norm(), 400.0 / z, max_relative = 1e-12);
        assert!((s.i_l.norm() - 3.49).abs() < 0.01);
        assert!((s.v_c.norm() - 1.11).abs() < 0.01);
        assert_relative_eq!(s.v_c.norm(), s.i_l.norm() / (p.omega() * p.c2), max_relative = 1e-12);
    }

    #[test]
    fn disturbance_phasor_amplitudes() {
        let p = GridCircuitParams::default();
        let i3 = steady_state_phasor(&p, 3, PhasorSource::DisturbanceCurrent(Complex64::new(2.0, 0.0)));
        let i5 = steady_state_phasor(&p, 5, PhasorSource::DisturbanceCurrent(Complex64::new(3.0, 0.0)));
        assert!((i3.i_l.norm() - 1.38).abs() < 0.01, "{}", i3.i_l.norm());
        assert!((i5.i_l.norm() - 1.57).abs() < 0.01, "{}", i5.i_l.norm());
    }

    #[test]
    fn scaling_defaults_and_linearity() {
        let p = GridCircuitParams::default();
        let s = compute_normal_form_scaling(&p).unwrap();
        assert!((1.10..=1.12).contains(&s.rho_v()));
        assert!((3.48..=3.50).contains(&s.rho_i()));
        let doubled = compute_normal_form_scaling(&GridCircuitParams {
            vs_amplitude: 800.0,
            ..p
        })
        .unwrap();
        assert_relative_eq!(doubled.rho_v(), 2.0 * s.rho_v(), max_relative = 1e-14);
        assert_relative_eq!(doubled.rho_i(), 2.0 * s.rho_i(), max_relative = 1e-14);
    }

    #[test]
    fn scaling_maps_steady_state_to_unit_circle() {
        let p = GridCircuitParams::default();
        let s = compute_normal_form_scaling(&p).unwrap();
        let ph = steady_state_phasor(&p, 1, PhasorSource::Supply);
        let q = ph.i_l / Complex64::new(0.0, p.omega());
        for i in 0..50 {
            let wt = TAU * i as f64 / 50.0;
            let e = Complex64::from_polar(1.0, wt);
            let x = DVector::from_vec(vec![(q * e).im, (ph.i_l * e).im]);
            let xt = s.to_normal(&x);
            assert_relative_eq!(xt.norm(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(s.to_physical(&xt), x, max_relative = 1e-12);
        }
        assert_relative_eq!(s.matrix() * s.inverse(), Matrix2::identity(), epsilon = 1e-15);
    }

    #[test]
    fn transform_identity_and_invariants() {
        let css = build_grid_state_space(&GridCircuitParams::default());
        let same = transform_with(&css, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(same, css);

        let s = compute_normal_form_scaling(&GridCircuitParams::default()).unwrap();
        let t = transform_to_normal_form(&css, &s).unwrap();
        assert_relative_eq!(t.a().trace(), css.a().trace(), max_relative = 1e-12);
        assert_relative_eq!(t.a().determinant(), css.a().determinant(), max_relative = 1e-10);
        let x = DVector::from_vec(vec![0.0123, -2.5]);
        let xt = s.to_normal(&x);
        assert_relative_eq!(t.c() * &xt, css.c() * &x, max_relative = 1e-12);

        assert!(NormalFormScaling::new(0.0, 1.0, 1.0).is_err());
        assert!(transform_with(&css, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn disturbance_synthesis() {
        let (i_d, v_s) = synthesize_disturbance(&[], 400.0, 50.0, 25, 0.0002);
        assert_eq!(i_d, 0.0);
        assert_relative_eq!(v_s, 400.0, max_relative = 1e-12);

        let spec = standard_distortion();
        let (i_d0, v_s0) = synthesize_disturbance(&spec, 400.0, 50.0, 0, 0.0002);
        assert_relative_eq!(i_d0, 4.0, max_relative = 1e-14);
        assert_eq!(v_s0, 0.0);
        for k in 0..100 {
            let a = synthesize_disturbance(&spec, 400.0, 50.0, k, 0.0002);
            let b = synthesize_disturbance(&spec, 400.0, 50.0, k + 100, 0.0002);
            assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_component_validation() {
        assert!(HarmonicComponent::new(0, 1.0, 0.0).is_err());
        assert!(HarmonicComponent::new(3, -1.0, 0.0).is_err());
        assert!(GridCircuitParams {
            r1: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
