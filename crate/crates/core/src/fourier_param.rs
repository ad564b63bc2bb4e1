//! Harmonic parameterization of the future input sequence.
//!
//! Inputs over the horizon are restricted to
//! `u(i) = Σₙ fₙ sin(n ω τ i) + gₙ cos(n ω τ i)` for `n = 1 … h`, with `i`
//! counted from the optimization instant. There is no DC term.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel_cost::StackedStates;
use crate::linear_plant::{expect_len, PredictionOperator};

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBasis {
    m: DMatrix<f64>,
    harmonics: usize,
    omega: f64,
    tau: f64,
    horizon: usize,
}

/// Builds the `Hp × 2h` basis whose row `i` is
/// `[sin(nωτi)]ₙ | [cos(nωτi)]ₙ`.
pub fn build_fourier_basis(omega: f64, tau: f64, horizon: usize, harmonics: usize) -> Result<FourierBasis> {
    if harmonics == 0 || horizon == 0 {
        return Err(Error::InvalidParameter(format!(
            "harmonic bound and horizon must be >= 1 (h = {harmonics}, Hp = {horizon})"
        )));
    }
    let phi = omega * tau;
    if !(phi > 0.0 && phi * (harmonics as f64) < PI) {
        return Err(Error::Nyquist {
            order: harmonics,
            phi,
        });
    }
    let m = DMatrix::from_fn(horizon, 2 * harmonics, |i, c| {
        let n = (c % harmonics + 1) as f64;
        let angle = n * phi * i as f64;
        if c < harmonics {
            angle.sin()
        } else {
            angle.cos()
        }
    });
    Ok(FourierBasis {
        m,
        harmonics,
        omega,
        tau,
        horizon,
    })
}

impl FourierBasis {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `M ⊗ I_m` as a dense `(m·Hp) × (2mh)` matrix.
    pub fn kron(&self, m: usize) -> DMatrix<f64> {
        self.m.kronecker(&DMatrix::identity(m, m))
    }
}

/// Coefficient vector `P = [f₁ … f_h | g₁ … g_h]`, each block an m-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs {
    p: DVector<f64>,
    inputs: usize,
    harmonics: usize,
}

impl FourierCoeffs {
    pub fn new(p: DVector<f64>, inputs: usize, harmonics: usize) -> Result<Self> {
        expect_len("Fourier coefficient vector", 2 * inputs * harmonics, p.len())?;
        Ok(Self { p, inputs, harmonics })
    }

    pub fn zeros(inputs: usize, harmonics: usize) -> Self {
        Self {
            p: DVector::zeros(2 * inputs * harmonics),
            inputs,
            harmonics,
        }
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.p
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    /// Sine coefficient `fₙ` of input channel `ch`, `n` 1-based.
    pub fn sine(&self, n: usize, ch: usize) -> f64 {
        self.p[(n - 1) * self.inputs + ch]
    }

    /// Cosine coefficient `gₙ` of input channel `ch`, `n` 1-based.
    pub fn cosine(&self, n: usize, ch: usize) -> f64 {
        self.p[(self.harmonics + n - 1) * self.inputs + ch]
    }
}

/// `U = (M ⊗ I_m) P`, interleaved per sample as `[u(0); u(1); …]`.
pub fn expand_inputs(basis: &FourierBasis, p: &FourierCoeffs, m: usize) -> Result<DVector<f64>> {
    expect_len("Fourier coefficient vector", 2 * m * basis.harmonics, p.p.len())?;
    if m == 1 {
        return Ok(&basis.m * &p.p);
    }
    let mut u = DVector::zeros(m * basis.horizon);
    for i in 0..basis.horizon {
        for c in 0..2 * basis.harmonics {
            let w = basis.m[(i, c)];
            for ch in 0..m {
                u[i * m + ch] += w * p.p[c * m + ch];
            }
        }
    }
    Ok(u)
}

/// `X(P) = Ψ x_k + Θ (M ⊗ I_m) P + Γ V`.
pub fn predict_states_param(
    op: &PredictionOperator,
    basis: &FourierBasis,
    x_k: &DVector<f64>,
    p: &FourierCoeffs,
    v: &DVector<f64>,
) -> Result<StackedStates> {
    expect_len("basis horizon", op.horizon(), basis.horizon)?;
    let u = expand_inputs(basis, p, op.n_inputs())?;
    crate::linear_plant::predict_states(op, x_k, &u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn first_row_is_zero_sines_unit_cosines() {
        let b = build_fourier_basis(3.0, 0.01, 1, 4).unwrap();
        let row: Vec<f64> = b.matrix().row(0).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn quarter_period_sampling() {
        let b = build_fourier_basis(PI / 2.0, 1.0, 4, 1).unwrap();
        let s = b.matrix().column(0);
        let c = b.matrix().column(1);
        for (got, want) in s.iter().zip([0.0, 1.0, 0.0, -1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        for (got, want) in c.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn nyquist_guard() {
        assert!(matches!(
            build_fourier_basis(PI / 2.0, 1.0, 4, 2),
            Err(Error::Nyquist { .. })
        ));
        assert!(build_fourier_basis(1.0, 1.0, 0, 1).is_err());
        assert!(build_fourier_basis(1.0, 1.0, 4, 0).is_err());
    }

    #[test]
    fn grid_setup_column_periods() {
        let b = build_fourier_basis(2.0 * PI * 50.0, 0.0002, 200, 5).unwrap();
        assert_eq!(b.matrix().shape(), (200, 10));
        for n in 1..=5usize {
            if 100 % n != 0 {
                continue;
            }
            let period = 100 / n;
            let col = b.matrix().column(n - 1);
            for i in 0..200 - period {
                assert!((col[i] - col[i + period]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_sinusoid() {
        let b = build_fourier_basis(2.0, 0.1, 30, 1).unwrap();
        let p = FourierCoeffs::new(DVector::from_vec(vec![1.0, 0.0]), 1, 1).unwrap();
        let u = expand_inputs(&b, &p, 1).unwrap();
        for i in 0..30 {
            assert_relative_eq!(u[i], (0.2 * i as f64).sin(), epsilon = 1e-15);
        }
        assert_eq!(expand_inputs(&b, &FourierCoeffs::zeros(1, 1), 1).unwrap().amax(), 0.0);
    }

    #[test]
    fn multi_input_kronecker_layout() {
        let b = build_fourier_basis(2.0, 0.1, 7, 2).unwrap();
        let p = FourierCoeffs::new(DVector::from_fn(8, |i, _| i as f64 - 3.5), 2, 2).unwrap();
        let u = expand_inputs(&b, &p, 2).unwrap();
        let via_kron = b.kron(2) * p.as_vector();
        assert_relative_eq!(u, via_kron, epsilon = 1e-14);
        for i in 0..7 {
            for ch in 0..2 {
                let t = 0.2 * i as f64;
                let direct: f64 = (1..=2)
                    .map(|n| {
                        p.sine(n, ch) * (n as f64 * t).sin() + p.cosine(n, ch) * (n as f64 * t).cos()
                    })
                    .sum();
                assert_relative_eq!(u[2 * i + ch], direct, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn coeff_length_checked() {
        assert!(FourierCoeffs::new(DVector::zeros(5), 1, 3).is_err());
        let b = build_fourier_basis(2.0, 0.1, 7, 2).unwrap();
        assert!(expand_inputs(&b, &FourierCoeffs::zeros(1, 3), 1).is_err());
    }
}
