//! Limit-cycle residual kernel and its quartic horizon cost.
//!
//! For consecutive predicted states the kernel residual is
//!
//! ```text
//! e(x⁺, x) = x⁺ − (1 + μ) R(φ) x − α R(φ) x (xᵀx)
//! ```
//!
//! and the cost accumulates `‖e‖²` over the `Hp − 1` consecutive pairs inside
//! the stacked vector `X = [x(k+1); …; x(k+Hp)]`. The measured state `x(k)` is
//! not part of any pair. Expanding the sum gives the matrix form
//!
//! ```text
//! J(X) = Xᵀ Q2 X + 2α Xᵀ (L ∘ (X Xᵀ Q4)) X + α² Xᵀ (L ∘ (X Xᵀ (L ∘ (X Xᵀ)))) X
//! ```
//!
//! [`cost_direct`] evaluates the sum in `O(Hp)` and is what the controller
//! uses. [`cost_vectorized`] evaluates the matrix form term by term and is kept
//! as an independent route for cross-checking the block layout.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::normal_forms::{LimitCycleParams, State2};

/// Stacked horizon states `[x(k+1); …; x(k+Hp)]`, two entries per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedStates(DVector<f64>);

impl StackedStates {
    pub fn new(data: DVector<f64>) -> Result<Self> {
        if !data.len().is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "stacked state length {} is not a multiple of 2",
                data.len()
            )));
        }
        if data.len() < 4 {
            return Err(Error::InvalidParameter(format!(
                "horizon must hold at least two states, got length {}",
                data.len()
            )));
        }
        Ok(Self(data))
    }

    pub fn from_states(states: &[State2]) -> Result<Self> {
        Self::new(DVector::from_iterator(
            states.len() * 2,
            states.iter().flat_map(|x| [x[0], x[1]]),
        ))
    }

    pub fn horizon(&self) -> usize {
        self.0.len() / 2
    }

    pub fn block(&self, j: usize) -> State2 {
        State2::new(self.0[2 * j], self.0[2 * j + 1])
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// Per-term values of the horizon cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    /// `Xᵀ Q2 X`
    pub quadratic_term: f64,
    /// `2α Xᵀ (L ∘ (X Xᵀ Q4)) X`
    pub cubic_term: f64,
    /// `α² Xᵀ (L ∘ (X Xᵀ (L ∘ (X Xᵀ)))) X`
    pub quartic_term: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn from_terms(quadratic_term: f64, cubic_term: f64, quartic_term: f64) -> Self {
        Self {
            quadratic_term,
            cubic_term,
            quartic_term,
            total: quadratic_term + cubic_term + quartic_term,
        }
    }
}

/// Block-banded storage of `Q2`, `L` and `Q4`.
///
/// `Q2` is symmetric block-tridiagonal, `L` block-diagonal with all-ones
/// blocks except a zero last block, and `Q4` block lower-bidiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCostMatrices {
    horizon: usize,
    q2_diag: Vec<Matrix2<f64>>,
    /// Block `(j+1, j)` of `Q2`; the super-diagonal is its transpose.
    q2_sub: Vec<Matrix2<f64>>,
    l_diag: Vec<Matrix2<f64>>,
    q4_diag: Vec<Matrix2<f64>>,
    /// Block `(j+1, j)` of `Q4`.
    q4_sub: Vec<Matrix2<f64>>,
}

pub fn build_cost_matrices(p: &LimitCycleParams, horizon: usize) -> Result<KernelCostMatrices> {
    if horizon < 2 {
        return Err(Error::InvalidParameter(format!(
            "cost horizon must be >= 2, got {horizon}"
        )));
    }
    let g = 1.0 + p.mu();
    let r = p.rotation();
    let eye = Matrix2::identity();
    let ones = Matrix2::repeat(1.0);

    let q2_diag = (0..horizon)
        .map(|j| {
            if j == 0 {
                eye * (g * g)
            } else if j + 1 == horizon {
                eye
            } else {
                eye * (1.0 + g * g)
            }
        })
        .collect();
    let q2_sub = vec![r * -g; horizon - 1];
    let l_diag = (0..horizon)
        .map(|j| if j + 1 == horizon { Matrix2::zeros() } else { ones })
        .collect();
    let q4_diag = (0..horizon)
        .map(|j| if j + 1 == horizon { Matrix2::zeros() } else { eye * g })
        .collect();
    let q4_sub = vec![-r; horizon - 1];

    Ok(KernelCostMatrices {
        horizon,
        q2_diag,
        q2_sub,
        l_diag,
        q4_diag,
        q4_sub,
    })
}

impl KernelCostMatrices {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        2 * self.horizon
    }

    pub fn q2_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (j, b) in self.q2_diag.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * j, 2 * j).copy_from(b);
        }
        for (j, b) in self.q2_sub.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * j + 2, 2 * j).copy_from(b);
            m.fixed_view_mut::<2, 2>(2 * j, 2 * j + 2).copy_from(&b.transpose());
        }
        m
    }

    pub fn l_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (j, b) in self.l_diag.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * j, 2 * j).copy_from(b);
        }
        m
    }

    pub fn q4_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for (j, b) in self.q4_diag.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * j, 2 * j).copy_from(b);
        }
        for (j, b) in self.q4_sub.iter().enumerate() {
            m.fixed_view_mut::<2, 2>(2 * j + 2, 2 * j).copy_from(b);
        }
        m
    }

    /// `Xᵀ Q2 X` using the banded blocks.
    pub fn quadratic_form(&self, x: &StackedStates) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.horizon {
            let xj = x.block(j);
            acc += xj.dot(&(self.q2_diag[j] * xj));
            if j + 1 < self.horizon {
                acc += 2.0 * x.block(j + 1).dot(&(self.q2_sub[j] * xj));
            }
        }
        acc
    }
}

pub fn kernel_residual(x_next: &State2, x: &State2, p: &LimitCycleParams) -> State2 {
    let gain = 1.0 + p.mu() + p.alpha() * x.norm_squared();
    x_next - p.rotation() * x * gain
}

/// Brute-force cost: sum of squared residual norms over consecutive pairs.
///
/// The reported terms come from expanding each `‖e‖²`; they agree with the
/// three summands of the matrix form.
pub fn cost_direct(x: &StackedStates, p: &LimitCycleParams) -> CostBreakdown {
    let r = p.rotation();
    let (g, a) = (1.0 + p.mu(), p.alpha());
    let mut total = 0.0;
    let mut quad = 0.0;
    let mut cubic = 0.0;
    let mut quartic = 0.0;
    for j in 0..x.horizon() - 1 {
        let (xj, xn) = (x.block(j), x.block(j + 1));
        total += kernel_residual(&xn, &xj, p).norm_squared();
        let s = xj.norm_squared();
        let cross = xn.dot(&(r * xj));
        quad += xn.norm_squared() + g * g * s - 2.0 * g * cross;
        cubic += 2.0 * a * s * (g * s - cross);
        quartic += a * a * s * s * s;
    }
    CostBreakdown {
        quadratic_term: quad,
        cubic_term: cubic,
        quartic_term: quartic,
        total,
    }
}

/// Evaluates the matrix form of the cost literally.
///
/// Every Hadamard product is materialised as a dense `2Hp × 2Hp` matrix. The
/// rank-one products `X Xᵀ W` are associated as `X (Xᵀ W)`, which keeps the
/// evaluation `O(Hp²)`.
pub fn cost_vectorized(
    x: &StackedStates,
    m: &KernelCostMatrices,
    p: &LimitCycleParams,
) -> Result<CostBreakdown> {
    let xv = x.as_vector();
    if xv.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            context: "cost_vectorized",
            expected: m.dim(),
            actual: xv.len(),
        });
    }
    let a = p.alpha();
    let l = m.l_dense();
    let q2 = m.q2_dense();
    let q4 = m.q4_dense();

    let quadratic = xv.dot(&(&q2 * xv));

    // L ∘ (X Xᵀ Q4)
    let xxt_q4 = xv * (xv.transpose() * &q4);
    let h1 = l.component_mul(&xxt_q4);
    let cubic = 2.0 * a * xv.dot(&(&h1 * xv));

    // L ∘ (X Xᵀ (L ∘ (X Xᵀ)))
    let inner = l.component_mul(&(xv * xv.transpose()));
    let outer = xv * (xv.transpose() * &inner);
    let h2 = l.component_mul(&outer);
    let quartic = a * a * xv.dot(&(&h2 * xv));

    Ok(CostBreakdown::from_terms(quadratic, cubic, quartic))
}

/// How [`cost_gradient`] differentiates the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    FiniteDifference,
    Analytic,
}

/// Central-difference step `max(1e-6, 1e-8 ‖X‖∞)`.
pub fn fd_step(x: &DVector<f64>) -> f64 {
    f64::max(1e-6, 1e-8 * x.amax())
}

/// Gradient of the direct-sum cost with respect to every stacked entry.
///
/// Each pair contributes `2 e` to `x(j+1)` and `2 Jᵀ e` to `x(j)`, with
/// `J = −R(φ) [ (1 + μ + α‖x‖²) I + 2α x xᵀ ]`.
pub fn cost_gradient_analytic(x: &StackedStates, p: &LimitCycleParams) -> DVector<f64> {
    let r = p.rotation();
    let (g, a) = (1.0 + p.mu(), p.alpha());
    let mut grad = DVector::zeros(x.as_vector().len());
    for j in 0..x.horizon() - 1 {
        let (xj, xn) = (x.block(j), x.block(j + 1));
        let e = kernel_residual(&xn, &xj, p);
        let s = xj.norm_squared();
        let jac = -(r * (Matrix2::identity() * (g + a * s) + xj * xj.transpose() * (2.0 * a)));
        let gj = jac.transpose() * e * 2.0;
        grad[2 * j] += gj[0];
        grad[2 * j + 1] += gj[1];
        grad[2 * j + 2] += 2.0 * e[0];
        grad[2 * j + 3] += 2.0 * e[1];
    }
    grad
}

pub fn cost_gradient(
    x: &StackedStates,
    m: &KernelCostMatrices,
    p: &LimitCycleParams,
    mode: GradientMode,
) -> Result<DVector<f64>> {
    let n = x.as_vector().len();
    if n != m.dim() {
        return Err(Error::DimensionMismatch {
            context: "cost_gradient",
            expected: m.dim(),
            actual: n,
        });
    }
    Ok(match mode {
        GradientMode::Analytic => cost_gradient_analytic(x, p),
        GradientMode::FiniteDifference => {
            let h = fd_step(x.as_vector());
            let mut probe = x.clone();
            let mut grad = DVector::zeros(n);
            for i in 0..n {
                let orig = probe.0[i];
                probe.0[i] = orig + h;
                let fp = cost_direct(&probe, p).total;
                probe.0[i] = orig - h;
                let fm = cost_direct(&probe, p).total;
                probe.0[i] = orig;
                grad[i] = (fp - fm) / (2.0 * h);
            }
            grad
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_forms::{limit_cycle_radius, ns_map_step, rotation};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sim() -> LimitCycleParams {
        LimitCycleParams::new(0.01, -0.01, 2.0 * PI * 50.0, 0.0002).unwrap()
    }

    fn cycle(p: &LimitCycleParams, hp: usize, theta0: f64) -> StackedStates {
        let rho = limit_cycle_radius(p);
        let states: Vec<_> = (0..hp)
            .map(|j| {
                let th = theta0 + p.phi() * j as f64;
                State2::new(rho * th.cos(), rho * th.sin())
            })
            .collect();
        StackedStates::from_states(&states).unwrap()
    }

    #[test]
    fn residual_examples() {
        let p = sim();
        assert_eq!(kernel_residual(&State2::zeros(), &State2::zeros(), &p), State2::zeros());

        let x = State2::new(0.6, -0.8);
        let e = kernel_residual(&(p.rotation() * x), &x, &p);
        assert!(e.norm() < 1e-15);

        let e = kernel_residual(&State2::zeros(), &State2::new(1.0, 0.0), &p);
        let phi = p.phi();
        assert_relative_eq!(e[0], -phi.cos(), epsilon = 1e-15);
        assert_relative_eq!(e[1], -phi.sin(), epsilon = 1e-15);
        assert_relative_eq!(e[0], -0.998028, epsilon = 2e-6);
        assert_relative_eq!(e[1], -0.0627905, epsilon = 1e-6);
    }

    #[test]
    fn stacked_states_validation() {
        assert!(StackedStates::new(DVector::zeros(3)).is_err());
        assert!(StackedStates::new(DVector::zeros(2)).is_err());
        assert_eq!(StackedStates::new(DVector::zeros(6)).unwrap().horizon(), 3);
    }

    #[test]
    fn rejects_short_horizon() {
        assert!(build_cost_matrices(&sim(), 1).is_err());
    }

    #[test]
    fn q2_with_zero_mu_hp2() {
        // mu must be > 0 for a valid LimitCycleParams, so use the smallest
        // positive mu and compare to the degenerate structure.
        let p = LimitCycleParams::new(f64::MIN_POSITIVE, -1.0, 1.0, 0.3).unwrap();
        let q2 = build_cost_matrices(&p, 2).unwrap().q2_dense();
        let r = rotation(0.3);
        let mut expected = DMatrix::zeros(4, 4);
        expected.fixed_view_mut::<2, 2>(0, 0).copy_from(&Matrix2::identity());
        expected.fixed_view_mut::<2, 2>(2, 2).copy_from(&Matrix2::identity());
        expected.fixed_view_mut::<2, 2>(0, 2).copy_from(&(-r.transpose()));
        expected.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-r));
        assert_eq!(q2, expected);
    }

    #[test]
    fn block_structure() {
        let p = sim();
        let g = 1.0 + p.mu();
        let m = build_cost_matrices(&p, 4).unwrap();
        let q2 = m.q2_dense();
        assert_eq!(q2, q2.transpose());
        assert_eq!(q2[(0, 0)], g * g);
        assert_eq!(q2[(2, 2)], 1.0 + g * g);
        assert_eq!(q2[(7, 7)], 1.0);
        assert_eq!(q2[(0, 4)], 0.0);

        let l = build_cost_matrices(&p, 3).unwrap().l_dense();
        assert_eq!(l.sum(), 8.0);
        assert_eq!(l.view((4, 4), (2, 2)).sum(), 0.0);
        assert_eq!(l[(0, 1)], 1.0);
        assert_eq!(l[(1, 2)], 0.0);

        let q4 = m.q4_dense();
        assert_eq!(q4[(0, 0)], g);
        assert_eq!(q4[(6, 6)], 0.0);
        assert_eq!(q4.fixed_view::<2, 2>(2, 0).clone_owned(), -p.rotation());
        assert_eq!(q4[(0, 2)], 0.0);
    }

    #[test]
    fn banded_quadratic_form_matches_dense() {
        let p = sim();
        let m = build_cost_matrices(&p, 7).unwrap();
        let x = StackedStates::new(DVector::from_fn(14, |i, _| (i as f64 * 0.37).sin())).unwrap();
        let dense = x.as_vector().dot(&(m.q2_dense() * x.as_vector()));
        assert_relative_eq!(m.quadratic_form(&x), dense, max_relative = 1e-13);
    }

    #[test]
    fn exact_cycle_has_zero_cost() {
        let p = sim();
        let x = cycle(&p, 200, 0.3);
        let m = build_cost_matrices(&p, 200).unwrap();
        assert!(cost_direct(&x, &p).total < 1e-20);
        assert!(cost_vectorized(&x, &m, &p).unwrap().total.abs() < 1e-12 * 200.0);
    }

    #[test]
    fn zero_vector_has_zero_cost_and_gradient() {
        let p = sim();
        let x = StackedStates::new(DVector::zeros(10)).unwrap();
        let m = build_cost_matrices(&p, 5).unwrap();
        assert_eq!(cost_direct(&x, &p).total, 0.0);
        assert_eq!(cost_gradient(&x, &m, &p, GradientMode::Analytic).unwrap().amax(), 0.0);
    }

    #[test]
    fn scaled_cycle_is_penalised() {
        let p = sim();
        let x = cycle(&p, 50, 0.0);
        let scaled = StackedStates::new(x.as_vector() * 2.0).unwrap();
        assert!(cost_direct(&scaled, &p).total > 0.0);
    }

    #[test]
    fn breakdown_terms_agree_between_routes() {
        let p = LimitCycleParams::new(0.3, -0.2, 1.0, 0.7).unwrap();
        let x = StackedStates::new(DVector::from_fn(10, |i, _| (i as f64 * 1.3).cos())).unwrap();
        let m = build_cost_matrices(&p, 5).unwrap();
        let d = cost_direct(&x, &p);
        let v = cost_vectorized(&x, &m, &p).unwrap();
        assert_relative_eq!(d.quadratic_term, v.quadratic_term, max_relative = 1e-12);
        assert_relative_eq!(d.cubic_term, v.cubic_term, max_relative = 1e-12);
        assert_relative_eq!(d.quartic_term, v.quartic_term, max_relative = 1e-12);
        assert_relative_eq!(d.total, d.quadratic_term + d.cubic_term + d.quartic_term, max_relative = 1e-12);
    }

    #[test]
    fn vectorized_dimension_mismatch() {
        let p = sim();
        let m = build_cost_matrices(&p, 4).unwrap();
        let x = StackedStates::new(DVector::zeros(6)).unwrap();
        assert!(matches!(
            cost_vectorized(&x, &m, &p),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_vanishes_on_cycle() {
        let p = sim();
        let x = cycle(&p, 20, 1.0);
        let m = build_cost_matrices(&p, 20).unwrap();
        for mode in [GradientMode::Analytic, GradientMode::FiniteDifference] {
            let g = cost_gradient(&x, &m, &p, mode).unwrap();
            assert!(g.norm() < 1e-8, "{mode:?}: {}", g.norm());
        }
    }

    #[test]
    fn map_generated_trajectory_off_cycle_has_zero_cost() {
        let p = sim();
        let mut states = vec![State2::new(0.3, 0.1)];
        for _ in 1..30 {
            let next = ns_map_step(states.last().unwrap(), &p);
            states.push(next);
        }
        let x = StackedStates::from_states(&states).unwrap();
        assert!(cost_direct(&x, &p).total < 1e-18 * 30.0);
    }
}
