//! Linear plants, zero-order-hold discretization and lifted horizon prediction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel_cost::StackedStates;

fn check_dims(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "system matrix columns",
            expected: n,
            actual: a.ncols(),
        });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "input matrix rows",
            expected: n,
            actual: b.nrows(),
        });
    }
    if f.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "disturbance matrix rows",
            expected: n,
            actual: f.nrows(),
        });
    }
    if c.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "output matrix columns",
            expected: n,
            actual: c.ncols(),
        });
    }
    let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
    if !(finite(a) && finite(b) && finite(f) && finite(c)) {
        return Err(Error::InvalidParameter("state-space matrices must be finite".into()));
    }
    Ok(())
}

/// `ẋ = Ac x + Bc u + Fc v`, `y = Cc x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    f: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl ContinuousStateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, f: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        check_dims(&a, &b, &f, &c)?;
        Ok(Self { a, b, f, c })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_disturbances(&self) -> usize {
        self.f.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// State derivative for held inputs.
    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.f * v
    }
}

/// `x⁺ = A x + B u + F v`, `y = C x + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    f: DMatrix<f64>,
    c: DMatrix<f64>,
    tau: f64,
}

impl DiscreteStateSpace {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        f: DMatrix<f64>,
        c: DMatrix<f64>,
        tau: f64,
    ) -> Result<Self> {
        check_dims(&a, &b, &f, &c)?;
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("sampling time must be > 0, got {tau}")));
        }
        Ok(Self { a, b, f, c, tau })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_disturbances(&self) -> usize {
        self.f.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.f * v
    }

    /// Output with an additive output disturbance `w`.
    pub fn output(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.c * x + w
    }
}

/// Zero-order-hold discretization.
///
/// `A = exp(Ac τ)` and `[B F] = ∫₀^τ exp(Ac s) ds [Bc Fc]` are read off the
/// exponential of the augmented matrix `[[Ac, Bc Fc], [0, 0]] τ`.
pub fn zoh_discretize(css: &ContinuousStateSpace, tau: f64) -> Result<DiscreteStateSpace> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("sampling time must be > 0, got {tau}")));
    }
    let (n, m, d) = (css.n_states(), css.n_inputs(), css.n_disturbances());
    let size = n + m + d;
    let mut aug = DMatrix::zeros(size, size);
    aug.view_mut((0, 0), (n, n)).copy_from(&(css.a() * tau));
    aug.view_mut((0, n), (n, m)).copy_from(&(css.b() * tau));
    aug.view_mut((0, n + m), (n, d)).copy_from(&(css.f() * tau));
    let e = aug.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteExponential);
    }
    DiscreteStateSpace::new(
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
        e.view((0, n + m), (n, d)).into_owned(),
        css.c().clone(),
        tau,
    )
}

/// Lifted horizon operator `X = Ψ x + Θ U + Γ V`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOperator {
    psi: DMatrix<f64>,
    theta: DMatrix<f64>,
    gamma: DMatrix<f64>,
    /// `A^0 … A^Hp`
    powers: Vec<DMatrix<f64>>,
    horizon: usize,
    n: usize,
    m: usize,
    d: usize,
}

pub fn build_prediction_operator(dss: &DiscreteStateSpace, horizon: usize) -> Result<PredictionOperator> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("prediction horizon must be >= 1".into()));
    }
    let (n, m, d) = (dss.n_states(), dss.n_inputs(), dss.n_disturbances());
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::identity(n, n));
    for i in 1..=horizon {
        let next = dss.a() * &powers[i - 1];
        powers.push(next);
    }
    // A^i B and A^i F for i = 0 … Hp−1, shared by every Toeplitz diagonal.
    let ab: Vec<_> = powers[..horizon].iter().map(|p| p * dss.b()).collect();
    let af: Vec<_> = powers[..horizon].iter().map(|p| p * dss.f()).collect();

    let mut psi = DMatrix::zeros(n * horizon, n);
    let mut theta = DMatrix::zeros(n * horizon, m * horizon);
    let mut gamma = DMatrix::zeros(n * horizon, d * horizon);
    for i in 0..horizon {
        psi.view_mut((n * i, 0), (n, n)).copy_from(&powers[i + 1]);
        for j in 0..=i {
            theta.view_mut((n * i, m * j), (n, m)).copy_from(&ab[i - j]);
            gamma.view_mut((n * i, d * j), (n, d)).copy_from(&af[i - j]);
        }
    }
    Ok(PredictionOperator {
        psi,
        theta,
        gamma,
        powers,
        horizon,
        n,
        m,
        d,
    })
}

impl PredictionOperator {
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    /// `A^i` for `0 <= i <= Hp`.
    pub fn power(&self, i: usize) -> &DMatrix<f64> {
        &self.powers[i]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn n_inputs(&self) -> usize {
        self.m
    }

    pub fn n_disturbances(&self) -> usize {
        self.d
    }

    /// Free plus disturbance response `Ψ x + Γ V`.
    pub fn affine_part(&self, x_k: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        expect_len("initial state", self.n, x_k.len())?;
        expect_len("disturbance sequence", self.d * self.horizon, v.len())?;
        Ok(&self.psi * x_k + &self.gamma * v)
    }

    /// Stacked prediction as a raw vector; works for any state dimension.
    pub fn predict(&self, x_k: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        expect_len("input sequence", self.m * self.horizon, u.len())?;
        Ok(self.affine_part(x_k, v)? + &self.theta * u)
    }
}

pub(crate) fn expect_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}

/// `X = Ψ x_k + Θ U + Γ V` for a two-state plant, ready for the kernel cost.
pub fn predict_states(
    op: &PredictionOperator,
    x_k: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<StackedStates> {
    if op.n != 2 {
        return Err(Error::DimensionMismatch {
            context: "stacked states require a two-state plant",
            expected: 2,
            actual: op.n,
        });
    }
    StackedStates::new(op.predict(x_k, u, v)?)
}
