//! Closed-loop grid simulation.
//!
//! The plant is stepped in normal-form coordinates. The controller is
//! re-solved at every fundamental-period boundary and its plan applied open
//! loop for that period. Signals are logged in physical and normal-form
//! coordinates.

use std::io::{self, Write};
use std::ops::Range;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::controller::{predict_disturbance, samples_per_period, LcmpcConfig, LcmpcController};
use crate::error::{Error, Result};
use crate::fourier_param::FourierCoeffs;
use crate::grid_model::{
    build_grid_state_space, compute_normal_form_scaling, synthesize_disturbance, transform_to_normal_form,
    GridCircuitParams, HarmonicComponent, NormalFormScaling,
};
use crate::kernel_cost::GradientMode;
use crate::linear_plant::{zoh_discretize, ContinuousStateSpace, DiscreteStateSpace};
use crate::normal_forms::LimitCycleParams;
use crate::optimizer::{OptimizerSettings, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Compensated,
    Uncompensated,
}

/// Disturbance prediction used before one full period has been measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// The true configured disturbance.
    Oracle,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialState {
    /// Periodic steady state of the undisturbed, uncompensated sampled plant
    /// at supply phase zero.
    SteadyState,
    Zero,
}

/// Output channel of the grid model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputChannel {
    Vc,
    Il,
}

/// Additive harmonic disturbance on a logged output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputDisturbance {
    pub channel: OutputChannel,
    pub component: HarmonicComponent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub grid: GridCircuitParams,
    pub disturbance: Vec<HarmonicComponent>,
    pub output_disturbance: Vec<OutputDisturbance>,
    pub lc: LimitCycleParams,
    pub horizon: usize,
    pub harmonics: usize,
    pub tau: f64,
    pub total_time: f64,
    pub mode: Mode,
    pub bootstrap: Bootstrap,
    pub initial_state: InitialState,
    pub optimizer: OptimizerSettings,
    pub gradient: GradientMode,
}

impl SimulationConfig {
    /// 50 Hz, 400 V grid with 3rd and 5th harmonic distortion, τ = 0.2 ms,
    /// Hp = 200, h = 5, μ = 0.01, α = −0.01, 0.1 s, compensated.
    pub fn reference() -> Self {
        let grid = GridCircuitParams::default();
        let tau = 0.0002;
        Self {
            grid,
            disturbance: crate::grid_model::standard_distortion(),
            output_disturbance: Vec::new(),
            lc: LimitCycleParams::new(0.01, -0.01, grid.omega(), tau).expect("valid reference parameters"),
            horizon: 200,
            harmonics: 5,
            tau,
            total_time: 0.1,
            mode: Mode::Compensated,
            bootstrap: Bootstrap::Oracle,
            initial_state: InitialState::SteadyState,
            optimizer: OptimizerSettings::default(),
            gradient: GradientMode::Analytic,
        }
    }

    /// Number of simulated steps `total_time / τ`.
    pub fn n_steps(&self) -> Result<usize> {
        let n = self.total_time / self.tau;
        let r = n.round();
        if !(r >= 1.0) || (n - r).abs() > 1e-9 * r {
            return Err(Error::InvalidParameter(format!(
                "total_time / tau = {n} is not an integer"
            )));
        }
        Ok(r as usize)
    }

    /// Checks invariants; returns `(steps, samples per period)`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        self.grid.validate()?;
        if (self.lc.omega() - self.grid.omega()).abs() > 1e-12 * self.grid.omega()
            || (self.lc.tau() - self.tau).abs() > 1e-12 * self.tau
        {
            return Err(Error::InvalidParameter(
                "limit-cycle omega/tau must match the grid frequency and sampling time".into(),
            ));
        }
        let n = self.n_steps()?;
        let spp = samples_per_period(self.grid.omega(), self.tau)?;
        if n < 2 * spp {
            return Err(Error::InvalidParameter(format!(
                "simulation must cover at least two periods ({} samples), got {n}",
                2 * spp
            )));
        }
        Ok((n, spp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub k: usize,
    pub t: f64,
    pub v_c: f64,
    pub i_l: f64,
    pub i_c: f64,
    pub i_d: f64,
    pub v_s: f64,
    pub xt1: f64,
    pub xt2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub period: usize,
    pub objective: f64,
    pub objective_at_start: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub fell_back: bool,
    pub wall_ms: f64,
    pub p_star: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub samples: Vec<SampleRecord>,
    pub periods: Vec<PeriodRecord>,
    pub tau: f64,
    pub f: f64,
    pub samples_per_period: usize,
    pub scaling: NormalFormScaling,
}

impl SimulationLog {
    /// Sample indices of the last fully applied period, `[n − spp, n)`.
    pub fn final_period_window(&self) -> Range<usize> {
        let n = self.samples.len() - 1;
        n - self.samples_per_period..n
    }

    pub fn signal(&self, range: Range<usize>, pick: impl Fn(&SampleRecord) -> f64) -> Vec<f64> {
        self.samples[range].iter().map(pick).collect()
    }

    pub fn final_period(&self, pick: impl Fn(&SampleRecord) -> f64) -> Vec<f64> {
        self.signal(self.final_period_window(), pick)
    }

    pub fn write_samples_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,t,v_c,i_l,i_c,i_d,v_s,xt1,xt2")?;
        for r in &self.samples {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k, r.t, r.v_c, r.i_l, r.i_c, r.i_d, r.v_s, r.xt1, r.xt2
            )?;
        }
        Ok(())
    }

    pub fn write_periods_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "period,objective,iterations,wall_ms")?;
        for p in &self.periods {
            writeln!(w, "{},{:.16e},{},{:.3}", p.period, p.objective, p.iterations, p.wall_ms)?;
        }
        Ok(())
    }
}

/// Normal-form plant in both time domains plus its scaling.
#[derive(Debug, Clone)]
pub struct GridPlant {
    pub scaling: NormalFormScaling,
    pub continuous: ContinuousStateSpace,
    pub discrete: DiscreteStateSpace,
}

pub fn build_grid_plant(grid: &GridCircuitParams, tau: f64) -> Result<GridPlant> {
    let scaling = compute_normal_form_scaling(grid)?;
    let continuous = transform_to_normal_form(&build_grid_state_space(grid), &scaling)?;
    let discrete = zoh_discretize(&continuous, tau)?;
    Ok(GridPlant {
        scaling,
        continuous,
        discrete,
    })
}

/// Periodic solution `x₀ = (I − A^N)⁻¹ Σⱼ A^{N−1−j} F vⱼ` of the sampled plant
/// driven by the periodic disturbance sequence `v` (one period, interleaved).
pub fn periodic_steady_state(dss: &DiscreteStateSpace, v_period: &[f64]) -> Result<DVector<f64>> {
    let (n, d) = (dss.n_states(), dss.n_disturbances());
    let steps = v_period.len() / d;
    let u0 = DVector::zeros(dss.n_inputs());
    let mut forced = DVector::zeros(n);
    let mut a_n = DMatrix::identity(n, n);
    for j in 0..steps {
        let v = DVector::from_column_slice(&v_period[j * d..(j + 1) * d]);
        forced = dss.step(&forced, &u0, &v);
        a_n = dss.a() * a_n;
    }
    let lhs = DMatrix::identity(n, n) - a_n;
    lhs.lu()
        .solve(&forced)
        .ok_or_else(|| Error::InvalidParameter("plant has a unit-modulus mode; no periodic steady state".into()))
}

enum Stepper<'a> {
    Discrete(&'a DiscreteStateSpace),
    Rk4 {
        css: &'a ContinuousStateSpace,
        substeps: usize,
        tau: f64,
    },
}

impl Stepper<'_> {
    fn step(&self, x: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Stepper::Discrete(d) => d.step(x, u, v),
            Stepper::Rk4 { css, substeps, tau } => {
                let h = tau / *substeps as f64;
                let mut x = x.clone();
                for _ in 0..*substeps {
                    let k1 = css.derivative(&x, u, v);
                    let k2 = css.derivative(&(&x + &k1 * (h / 2.0)), u, v);
                    let k3 = css.derivative(&(&x + &k2 * (h / 2.0)), u, v);
                    let k4 = css.derivative(&(&x + &k3 * h), u, v);
                    x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                }
                x
            }
        }
    }
}

pub fn run_closed_loop(cfg: &SimulationConfig) -> Result<SimulationLog> {
    let plant = build_grid_plant(&cfg.grid, cfg.tau)?;
    simulate(cfg, &plant, Stepper::Discrete(&plant.discrete))
}

/// Same protocol as [`run_closed_loop`], with the plant advanced by fixed-step
/// RK4 on the continuous model at `τ / substeps`, inputs held over each
/// sample.
pub fn run_reference_integration(cfg: &SimulationConfig, substeps: usize) -> Result<SimulationLog> {
    if substeps < 10 {
        return Err(Error::InvalidParameter(format!(
            "reference integration needs >= 10 substeps, got {substeps}"
        )));
    }
    let plant = build_grid_plant(&cfg.grid, cfg.tau)?;
    simulate(
        cfg,
        &plant,
        Stepper::Rk4 {
            css: &plant.continuous,
            substeps,
            tau: cfg.tau,
        },
    )
}

fn output_disturbance(cfg: &SimulationConfig, k: usize) -> [f64; 2] {
    let mut w = [0.0; 2];
    for od in &cfg.output_disturbance {
        let (value, _) = synthesize_disturbance(&[od.component], 0.0, cfg.grid.f, k, cfg.tau);
        match od.channel {
            OutputChannel::Vc => w[0] += value,
            OutputChannel::Il => w[1] += value,
        }
    }
    w
}

fn simulate(cfg: &SimulationConfig, plant: &GridPlant, stepper: Stepper<'_>) -> Result<SimulationLog> {
    let (n_steps, spp) = cfg.validate()?;
    let dss = &plant.discrete;
    let d = dss.n_disturbances();
    let m = dss.n_inputs();

    // Interleaved (i_d, v_s) for k = 0 … n_steps + Hp so that oracle
    // predictions never run off the end.
    let horizon_pad = cfg.horizon.max(spp);
    let v_all: Vec<f64> = (0..=n_steps + horizon_pad)
        .flat_map(|k| {
            let (i_d, v_s) = synthesize_disturbance(&cfg.disturbance, cfg.grid.vs_amplitude, cfg.grid.f, k, cfg.tau);
            [i_d, v_s]
        })
        .collect();

    let mut x = match cfg.initial_state {
        InitialState::Zero => DVector::zeros(2),
        InitialState::SteadyState => {
            let supply_only: Vec<f64> = (0..spp)
                .flat_map(|k| {
                    let (_, v_s) = synthesize_disturbance(&[], cfg.grid.vs_amplitude, cfg.grid.f, k, cfg.tau);
                    [0.0, v_s]
                })
                .collect();
            periodic_steady_state(dss, &supply_only)?
        }
    };

    let controller = match cfg.mode {
        Mode::Compensated => {
            let mut lcfg = LcmpcConfig::new(cfg.lc, cfg.horizon, cfg.harmonics, dss.clone());
            lcfg.settings = cfg.optimizer;
            lcfg.gradient = cfg.gradient;
            Some(LcmpcController::new(lcfg)?)
        }
        Mode::Uncompensated => None,
    };

    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut periods = Vec::new();
    let mut plan_u = DVector::zeros(m * spp);
    let mut warm: Option<FourierCoeffs> = None;

    let record = |k: usize, x: &DVector<f64>, i_c: f64| {
        let w = output_disturbance(cfg, k);
        let y = dss.c() * x;
        SampleRecord {
            k,
            t: k as f64 * cfg.tau,
            v_c: y[0] + w[0],
            i_l: y[1] + w[1],
            i_c,
            i_d: v_all[2 * k],
            v_s: v_all[2 * k + 1],
            xt1: x[0],
            xt2: x[1],
        }
    };

    for k in 0..n_steps {
        let offset = k % spp;
        if offset == 0 {
            if let Some(ctl) = &controller {
                let period = k / spp;
                let v_pred = if period == 0 {
                    match cfg.bootstrap {
                        Bootstrap::Oracle => DVector::from_column_slice(&v_all[d * k..d * (k + cfg.horizon)]),
                        Bootstrap::Zero => DVector::zeros(d * cfg.horizon),
                    }
                } else {
                    predict_disturbance(&v_all[d * (k - spp)..d * k], d, cfg.horizon, spp)?
                };
                let started = Instant::now();
                let plan = ctl.solve_period(&x, &v_pred, warm.as_ref())?;
                let wall_ms = started.elapsed().as_secs_f64() * 1e3;
                periods.push(PeriodRecord {
                    period,
                    objective: if plan.fell_back {
                        plan.objective_at_start
                    } else {
                        plan.result.f_star
                    },
                    objective_at_start: plan.objective_at_start,
                    iterations: plan.result.iterations,
                    termination: plan.result.termination,
                    fell_back: plan.fell_back,
                    wall_ms,
                    p_star: plan.p_star.as_vector().iter().copied().collect(),
                });
                plan_u = plan.u_star;
                warm = Some(plan.p_star);
            }
        }
        let u = plan_u.rows(m * offset, m).into_owned();
        samples.push(record(k, &x, u[0]));
        let v = DVector::from_column_slice(&v_all[d * k..d * (k + 1)]);
        x = stepper.step(&x, &u, &v);
        if x.iter().any(|s| !s.is_finite()) {
            return Err(Error::Overflow { step: k + 1, bound: f64::MAX });
        }
    }
    // The plan is one period of a periodic input, so its continuation at the
    // end of the run is its first sample.
    samples.push(record(n_steps, &x, plan_u[(n_steps % spp) * m]));

    Ok(SimulationLog {
        samples,
        periods,
        tau: cfg.tau,
        f: cfg.grid.f,
        samples_per_period: spp,
        scaling: plant.scaling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(mode: Mode) -> SimulationConfig {
        SimulationConfig {
            total_time: 0.04,
            mode,
            ..SimulationConfig::reference()
        }
    }

    #[test]
    fn config_checks() {
        let cfg = SimulationConfig::reference();
        assert_eq!(cfg.validate().unwrap(), (500, 100));
        let bad = SimulationConfig {
            total_time: 0.01,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig {
            total_time: 0.04003,
            ..cfg.clone()
        };
        assert!(bad.validate().is_err());
        let bad = SimulationConfig {
            tau: 0.0001,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn record_count_and_uncompensated_input() {
        let log = run_closed_loop(&short(Mode::Uncompensated)).unwrap();
        assert_eq!(log.samples.len(), 201);
        assert!(log.periods.is_empty());
        assert!(log.samples.iter().all(|r| r.i_c == 0.0));
        assert_eq!(log.final_period_window(), 100..200);
    }

    #[test]
    fn steady_state_start_stays_on_unit_circle_without_distortion() {
        let cfg = SimulationConfig {
            disturbance: Vec::new(),
            ..short(Mode::Uncompensated)
        };
        let log = run_closed_loop(&cfg).unwrap();
        for r in &log.samples {
            let radius = (r.xt1 * r.xt1 + r.xt2 * r.xt2).sqrt();
            assert!((radius - 1.0).abs() < 0.01, "radius {radius} at k = {}", r.k);
        }
    }

    #[test]
    fn output_disturbance_only_touches_logged_output() {
        let base = short(Mode::Uncompensated);
        let mut noisy = base.clone();
        noisy.output_disturbance.push(OutputDisturbance {
            channel: OutputChannel::Vc,
            component: HarmonicComponent::new(7, 0.05, 0.0).unwrap(),
        });
        let a = run_closed_loop(&base).unwrap();
        let b = run_closed_loop(&noisy).unwrap();
        for (ra, rb) in a.samples.iter().zip(&b.samples) {
            assert_eq!(ra.xt1, rb.xt1);
            assert_eq!(ra.i_l, rb.i_l);
        }
        assert!(a.samples.iter().zip(&b.samples).any(|(ra, rb)| ra.v_c != rb.v_c));
    }

    #[test]
    fn rk4_needs_enough_substeps() {
        assert!(run_reference_integration(&short(Mode::Uncompensated), 5).is_err());
    }

    #[test]
    fn csv_headers() {
        let log = run_closed_loop(&short(Mode::Compensated)).unwrap();
        let mut buf = Vec::new();
        log.write_samples_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "k,t,v_c,i_l,i_c,i_d,v_s,xt1,xt2");
        assert_eq!(text.lines().count(), 202);
        let mut buf = Vec::new();
        log.write_periods_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "period,objective,iterations,wall_ms");
        assert_eq!(text.lines().count(), 3);
    }
}
