//! Periodic receding-horizon LCMPC.
//!
//! Once per fundamental period the controller minimizes the kernel cost of
//! the parameterized prediction `X(P) = Ψ x_k + Θ (M ⊗ I) P + Γ V` over the
//! Fourier coefficients `P`, then hands back the first period of the
//! expanded input sequence to be applied open loop.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fourier_param::{build_fourier_basis, expand_inputs, predict_states_param, FourierBasis, FourierCoeffs};
use crate::kernel_cost::{
    build_cost_matrices, cost_direct, cost_gradient_analytic, GradientMode, KernelCostMatrices, StackedStates,
};
use crate::linear_plant::{build_prediction_operator, expect_len, DiscreteStateSpace, PredictionOperator};
use crate::normal_forms::LimitCycleParams;
use crate::optimizer::{minimize, Objective, OptimizerResult, OptimizerSettings, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct LcmpcConfig {
    pub lc: LimitCycleParams,
    pub horizon: usize,
    pub harmonics: usize,
    /// Plant in normal-form coordinates, discretized at `lc.tau()`.
    pub plant: DiscreteStateSpace,
    pub settings: OptimizerSettings,
    pub gradient: GradientMode,
}

impl LcmpcConfig {
    pub fn new(lc: LimitCycleParams, horizon: usize, harmonics: usize, plant: DiscreteStateSpace) -> Self {
        Self {
            lc,
            horizon,
            harmonics,
            plant,
            settings: OptimizerSettings::default(),
            gradient: GradientMode::Analytic,
        }
    }

    /// `2π / (ωτ)`, required to be an integer.
    pub fn samples_per_period(&self) -> Result<usize> {
        samples_per_period(self.lc.omega(), self.lc.tau())
    }

    pub fn validate(&self) -> Result<usize> {
        let spp = self.samples_per_period()?;
        if self.horizon == 0 || !self.horizon.is_multiple_of(spp) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be a positive multiple of the {spp} samples per period",
                self.horizon
            )));
        }
        if self.plant.n_states() != 2 {
            return Err(Error::DimensionMismatch {
                context: "LCMPC plant must have two states",
                expected: 2,
                actual: self.plant.n_states(),
            });
        }
        if (self.plant.tau() - self.lc.tau()).abs() > 1e-12 * self.lc.tau() {
            return Err(Error::InvalidParameter(format!(
                "plant sampling time {} differs from limit-cycle tau {}",
                self.plant.tau(),
                self.lc.tau()
            )));
        }
        self.settings.validate().map_err(Error::InvalidParameter)?;
        Ok(spp)
    }
}

/// Integer samples per fundamental period, checked to `1e-9`.
pub fn samples_per_period(omega: f64, tau: f64) -> Result<usize> {
    let spp = TAU / (omega * tau);
    let rounded = spp.round();
    if !(rounded >= 1.0) || (spp - rounded).abs() > 1e-9 * rounded {
        return Err(Error::InvalidParameter(format!(
            "2π/(ωτ) = {spp} is not an integer number of samples per period"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlPlan {
    /// Inputs for one fundamental period, interleaved per sample.
    pub u_star: DVector<f64>,
    pub p_star: FourierCoeffs,
    pub objective_at_start: f64,
    pub result: OptimizerResult,
    /// The optimizer failed and the warm start was reused.
    pub fell_back: bool,
}

/// Kernel cost of the parameterized prediction, assembled from its parts.
#[allow(clippy::too_many_arguments)]
pub fn lcmpc_objective(
    p: &FourierCoeffs,
    x_k: &DVector<f64>,
    v: &DVector<f64>,
    op: &PredictionOperator,
    basis: &FourierBasis,
    matrices: &KernelCostMatrices,
    lc: &LimitCycleParams,
) -> Result<f64> {
    expect_len("cost horizon", matrices.horizon(), op.horizon())?;
    let x = predict_states_param(op, basis, x_k, p, v)?;
    Ok(cost_direct(&x, lc).total)
}

/// Tiles the most recent period of disturbance samples across the horizon.
///
/// `history` is interleaved per sample (`d` values each). Only the last
/// `samples_per_period` samples are used.
pub fn predict_disturbance(
    history: &[f64],
    channels: usize,
    horizon: usize,
    samples_per_period: usize,
) -> Result<DVector<f64>> {
    let needed = channels * samples_per_period;
    if history.len() < needed || channels == 0 {
        return Err(Error::InsufficientHistory {
            needed: samples_per_period,
            available: history.len() / channels.max(1),
        });
    }
    if !horizon.is_multiple_of(samples_per_period) {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a multiple of {samples_per_period}"
        )));
    }
    let last = &history[history.len() - needed..];
    Ok(DVector::from_iterator(
        channels * horizon,
        last.iter().copied().cycle().take(channels * horizon),
    ))
}

/// Prebuilt operators for repeated per-period solves.
#[derive(Debug, Clone)]
pub struct LcmpcController {
    cfg: LcmpcConfig,
    spp: usize,
    op: PredictionOperator,
    basis: FourierBasis,
    matrices: KernelCostMatrices,
    /// `Θ (M ⊗ I_m)`: sensitivity of the stacked states to `P`.
    input_map: DMatrix<f64>,
}

impl LcmpcController {
    pub fn new(cfg: LcmpcConfig) -> Result<Self> {
        let spp = cfg.validate()?;
        let op = build_prediction_operator(&cfg.plant, cfg.horizon)?;
        let basis = build_fourier_basis(cfg.lc.omega(), cfg.lc.tau(), cfg.horizon, cfg.harmonics)?;
        let matrices = build_cost_matrices(&cfg.lc, cfg.horizon)?;
        let input_map = op.theta() * basis.kron(cfg.plant.n_inputs());
        Ok(Self {
            cfg,
            spp,
            op,
            basis,
            matrices,
            input_map,
        })
    }

    pub fn config(&self) -> &LcmpcConfig {
        &self.cfg
    }

    pub fn samples_per_period(&self) -> usize {
        self.spp
    }

    pub fn operator(&self) -> &PredictionOperator {
        &self.op
    }

    pub fn basis(&self) -> &FourierBasis {
        &self.basis
    }

    pub fn matrices(&self) -> &KernelCostMatrices {
        &self.matrices
    }

    pub fn n_coeffs(&self) -> usize {
        2 * self.cfg.plant.n_inputs() * self.cfg.harmonics
    }

    /// Objective for one period with the affine part `Ψ x_k + Γ V` fixed.
    pub fn period_objective(&self, x_k: &DVector<f64>, v: &DVector<f64>) -> Result<PeriodObjective<'_>> {
        Ok(PeriodObjective {
            base: self.op.affine_part(x_k, v)?,
            input_map: &self.input_map,
            lc: &self.cfg.lc,
            analytic: self.cfg.gradient == GradientMode::Analytic,
        })
    }

    pub fn objective(&self, p: &FourierCoeffs, x_k: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        expect_len("Fourier coefficient vector", self.n_coeffs(), p.as_vector().len())?;
        Ok(self.period_objective(x_k, v)?.value(p.as_vector()))
    }

    /// Stacked prediction for the given coefficients.
    pub fn predict(&self, p: &FourierCoeffs, x_k: &DVector<f64>, v: &DVector<f64>) -> Result<StackedStates> {
        predict_states_param(&self.op, &self.basis, x_k, p, v)
    }

    pub fn solve_period(
        &self,
        x_k: &DVector<f64>,
        v: &DVector<f64>,
        warm_start: Option<&FourierCoeffs>,
    ) -> Result<ControlPlan> {
        let m = self.cfg.plant.n_inputs();
        let start = match warm_start {
            Some(p) => {
                expect_len("warm start", self.n_coeffs(), p.as_vector().len())?;
                p.clone()
            }
            None => FourierCoeffs::zeros(m, self.cfg.harmonics),
        };
        let objective = self.period_objective(x_k, v)?;
        let objective_at_start = objective.value(start.as_vector());
        let result = minimize(&objective, start.as_vector().clone(), &self.cfg.settings);

        let failed = !result.f_star.is_finite() || result.termination == Termination::NonFinite;
        let p_star = if failed {
            start
        } else {
            FourierCoeffs::new(result.p_star.clone(), m, self.cfg.harmonics)?
        };
        let u = expand_inputs(&self.basis, &p_star, m)?;
        Ok(ControlPlan {
            u_star: u.rows(0, m * self.spp).into_owned(),
            p_star,
            objective_at_start,
            result,
            fell_back: failed,
        })
    }
}

/// Kernel cost as a function of the Fourier coefficients only.
pub struct PeriodObjective<'a> {
    base: DVector<f64>,
    input_map: &'a DMatrix<f64>,
    lc: &'a LimitCycleParams,
    analytic: bool,
}

impl PeriodObjective<'_> {
    fn states(&self, p: &DVector<f64>) -> StackedStates {
        StackedStates::new(&self.base + self.input_map * p).expect("horizon >= 2 with two states")
    }
}

impl Objective for PeriodObjective<'_> {
    fn value(&self, p: &DVector<f64>) -> f64 {
        cost_direct(&self.states(p), self.lc).total
    }

    fn gradient(&self, p: &DVector<f64>) -> Option<DVector<f64>> {
        self.analytic
            .then(|| self.input_map.tr_mul(&cost_gradient_analytic(&self.states(p), self.lc)))
    }
}
