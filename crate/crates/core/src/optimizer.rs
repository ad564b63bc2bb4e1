//! Unconstrained quasi-Newton minimization.
//!
//! BFGS on the inverse Hessian (identity start) with a backtracking Armijo
//! line search. Backtracking trials use safeguarded quadratic interpolation,
//! clamped to `[0.1, backtrack]` times the previous trial.

use nalgebra::{DMatrix, DVector};

/// Scalar objective with an optional analytic gradient.
///
/// When [`Objective::gradient`] returns `None` the optimizer falls back to
/// central finite differences.
pub trait Objective {
    fn value(&self, p: &DVector<f64>) -> f64;

    fn gradient(&self, _p: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Adapts a value closure and an optional gradient closure.
pub struct FnObjective<F, G = fn(&DVector<f64>) -> DVector<f64>> {
    f: F,
    g: Option<G>,
}

impl<F> FnObjective<F>
where
    F: Fn(&DVector<f64>) -> f64,
{
    pub fn value_only(f: F) -> Self {
        Self { f, g: None }
    }
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn with_gradient(f: F, g: G) -> Self {
        Self { f, g: Some(g) }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn value(&self, p: &DVector<f64>) -> f64 {
        (self.f)(p)
    }

    fn gradient(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        self.g.as_ref().map(|g| g(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Stop when `‖∇f‖∞` falls below this.
    pub optimality_tol: f64,
    /// Stop when an accepted step has `‖s‖∞` below this.
    pub step_tol: f64,
    pub max_iters: usize,
    /// Finite-difference step is `max(fd_min_step, fd_rel_step · ‖p‖∞)`.
    pub fd_min_step: f64,
    pub fd_rel_step: f64,
    /// Armijo sufficient-decrease constant `c₁`.
    pub armijo_c1: f64,
    /// Upper bound on the step shrink factor per backtrack.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            optimality_tol: 1e-6,
            step_tol: 1e-6,
            max_iters: 500,
            fd_min_step: 1e-6,
            fd_rel_step: 1e-8,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("optimality_tol", self.optimality_tol),
            ("step_tol", self.step_tol),
            ("fd_min_step", self.fd_min_step),
            ("fd_rel_step", self.fd_rel_step),
            ("armijo_c1", self.armijo_c1),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        if !(self.armijo_c1 < 1.0) {
            return Err(format!("armijo_c1 must be < 1, got {}", self.armijo_c1));
        }
        if !(self.backtrack > 0.1 && self.backtrack < 1.0) {
            return Err(format!("backtrack must lie in (0.1, 1), got {}", self.backtrack));
        }
        if self.max_iters == 0 || self.max_backtracks == 0 {
            return Err("iteration limits must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTol,
    StepTol,
    MaxIters,
    /// No trial step along a descent direction satisfied the Armijo test.
    LineSearchStalled,
    /// The objective stayed non-finite through every backtrack.
    NonFinite,
}

/// One accepted quasi-Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub f_before: f64,
    pub f_after: f64,
    pub step_length: f64,
    /// Directional derivative `∇fᵀd` at the start of the step.
    pub slope: f64,
    pub grad_inf_norm: f64,
    pub hessian_updated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub p_star: DVector<f64>,
    pub f_star: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub f_evals: usize,
    pub g_evals: usize,
    pub grad_inf_norm: f64,
    pub trace: Vec<IterationRecord>,
    pub diagnostic: Option<String>,
}

impl OptimizerResult {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::GradientTol | Termination::StepTol)
    }
}

struct Counted<'a, O: ?Sized> {
    obj: &'a O,
    settings: &'a OptimizerSettings,
    f_evals: usize,
    g_evals: usize,
}

impl<O: Objective + ?Sized> Counted<'_, O> {
    fn value(&mut self, p: &DVector<f64>) -> f64 {
        self.f_evals += 1;
        self.obj.value(p)
    }

    fn gradient(&mut self, p: &DVector<f64>) -> DVector<f64> {
        self.g_evals += 1;
        if let Some(g) = self.obj.gradient(p) {
            return g;
        }
        let h = f64::max(self.settings.fd_min_step, self.settings.fd_rel_step * p.amax());
        let mut probe = p.clone();
        let mut g = DVector::zeros(p.len());
        for i in 0..p.len() {
            let orig = probe[i];
            probe[i] = orig + h;
            let fp = self.value(&probe);
            probe[i] = orig - h;
            let fm = self.value(&probe);
            probe[i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }
}

/// Central-difference gradient with the optimizer's step rule.
pub fn finite_difference_gradient<O: Objective + ?Sized>(
    obj: &O,
    p: &DVector<f64>,
    settings: &OptimizerSettings,
) -> DVector<f64> {
    let value_only = FnObjective::value_only(|q: &DVector<f64>| obj.value(q));
    Counted {
        obj: &value_only,
        settings,
        f_evals: 0,
        g_evals: 0,
    }
    .gradient(p)
}

/// Moves an accepted step to the minimiser of the quadratic through
/// `f(x)`, the slope and `f(x + αd)` when that is lower and still satisfies
/// the sufficient-decrease test. Exact on quadratics.
#[allow(clippy::too_many_arguments)]
fn refine<O: Objective + ?Sized>(
    ev: &mut Counted<'_, O>,
    x: &DVector<f64>,
    d: &DVector<f64>,
    f: f64,
    slope: f64,
    alpha: f64,
    trial: DVector<f64>,
    ft: f64,
    settings: &OptimizerSettings,
) -> (DVector<f64>, f64, f64) {
    let curvature = ft - f - slope * alpha;
    if curvature > 0.0 {
        let a_star = -slope * alpha * alpha / (2.0 * curvature);
        if a_star > 0.0 && a_star <= 10.0 * alpha && (a_star / alpha - 1.0).abs() > 1e-3 {
            let cand = x + d * a_star;
            let fc = ev.value(&cand);
            if fc < ft && fc <= f + settings.armijo_c1 * a_star * slope {
                return (cand, fc, a_star);
            }
        }
    }
    (trial, ft, alpha)
}

pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    p0: DVector<f64>,
    settings: &OptimizerSettings,
) -> OptimizerResult {
    let n = p0.len();
    let mut ev = Counted {
        obj: objective,
        settings,
        f_evals: 0,
        g_evals: 0,
    };
    let mut x = p0;
    let mut f = ev.value(&x);
    if !f.is_finite() {
        return OptimizerResult {
            f_star: f,
            grad_inf_norm: f64::NAN,
            iterations: 0,
            termination: Termination::NonFinite,
            f_evals: ev.f_evals,
            g_evals: 0,
            trace: Vec::new(),
            diagnostic: Some(format!("objective is {f} at the initial point")),
            p_star: x,
        };
    }
    let mut g = ev.gradient(&x);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut trace = Vec::new();
    let mut diagnostic = None;

    let termination = 'outer: loop {
        if g.amax() < settings.optimality_tol {
            break Termination::GradientTol;
        }
        if trace.len() >= settings.max_iters {
            break Termination::MaxIters;
        }

        let mut d = -(&h_inv * &g);
        let mut slope = d.dot(&g);
        if !(slope < 0.0) {
            h_inv.fill_with_identity();
            first_update = true;
            d = -g.clone();
            slope = -g.norm_squared();
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut saw_finite = false;
        for _ in 0..settings.max_backtracks {
            let trial = &x + &d * alpha;
            let ft = ev.value(&trial);
            if ft.is_finite() {
                saw_finite = true;
                if ft <= f + settings.armijo_c1 * alpha * slope {
                    accepted = Some(refine(&mut ev, &x, &d, f, slope, alpha, trial, ft, settings));
                    break;
                }
                let curvature = ft - f - slope * alpha;
                let interp = if curvature > 0.0 {
                    -slope * alpha * alpha / (2.0 * curvature)
                } else {
                    settings.backtrack * alpha
                };
                alpha = interp.clamp(0.1 * alpha, settings.backtrack * alpha);
            } else {
                alpha *= 0.5;
            }
        }
        let Some((x_new, f_new, alpha)) = accepted else {
            if saw_finite {
                break 'outer Termination::LineSearchStalled;
            }
            diagnostic = Some(format!(
                "objective non-finite for all {} backtracking trials",
                settings.max_backtracks
            ));
            break 'outer Termination::NonFinite;
        };

        let s = &x_new - &x;
        let g_new = ev.gradient(&x_new);
        let y = &g_new - &g;
        let sy = s.dot(&y);
        let update = sy > 1e-12 * s.norm() * y.norm();
        if update {
            if first_update {
                // Rescale the identity to the observed curvature before the
                // first update.
                h_inv *= sy / y.norm_squared();
                first_update = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
        } else {
            h_inv.fill_with_identity();
            first_update = true;
        }
        trace.push(IterationRecord {
            f_before: f,
            f_after: f_new,
            step_length: alpha,
            slope,
            grad_inf_norm: g.amax(),
            hessian_updated: update,
        });
        let step_inf = s.amax();
        x = x_new;
        f = f_new;
        g = g_new;
        if step_inf < settings.step_tol {
            break if g.amax() < settings.optimality_tol {
                Termination::GradientTol
            } else {
                Termination::StepTol
            };
        }
    };

    OptimizerResult {
        grad_inf_norm: g.amax(),
        iterations: trace.len(),
        termination,
        f_evals: ev.f_evals,
        g_evals: ev.g_evals,
        trace,
        diagnostic,
        p_star: x,
        f_star: f,
    }
}
