//! Self-checks runnable from the command line.

use std::f64::consts::TAU;

use clap::ValueEnum;
use lcmpc_core::analysis::{harmonic_spectrum, thd, thd_from_amplitudes, DEFAULT_THD_ORDER};
use lcmpc_core::grid_model::{build_grid_state_space, phasor_harmonic_amplitudes, GridCircuitParams};
use lcmpc_core::kernel_cost::{
    build_cost_matrices, cost_direct, cost_gradient, cost_vectorized, GradientMode, StackedStates,
};
use lcmpc_core::linear_plant::{build_prediction_operator, zoh_discretize, DiscreteStateSpace};
use lcmpc_core::normal_forms::{limit_cycle_radius, ns_map_step, LimitCycleParams, State2};
use lcmpc_core::optimizer::{minimize, FnObjective, OptimizerSettings};
use lcmpc_core::simulator::{run_closed_loop, run_reference_integration, Mode, SimulationConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Kernel,
    Plant,
    Optimizer,
    OracleThd,
    All,
}

pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: String) -> Check {
    Check { name, pass, detail }
}

fn lc() -> LimitCycleParams {
    LimitCycleParams::new(0.01, -0.01, TAU * 50.0, 0.0002).expect("valid parameters")
}

fn random_stack(rng: &mut ChaCha8Rng, horizon: usize) -> StackedStates {
    StackedStates::new(DVector::from_fn(2 * horizon, |_, _| rng.random_range(-2.0..2.0))).expect("even length")
}

fn kernel(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let p = lc();
    let mut worst: f64 = 0.0;
    let mut negative = 0;
    for hp in [2usize, 3, 5, 17, 200] {
        let m = build_cost_matrices(&p, hp).expect("horizon >= 2");
        for _ in 0..100 {
            let x = random_stack(rng, hp);
            let d = cost_direct(&x, &p).total;
            let v = cost_vectorized(&x, &m, &p).expect("matching dimension").total;
            worst = worst.max((d - v).abs() / (1.0 + d.abs()));
            negative += usize::from(d < 0.0);
        }
    }
    let oracle = check(
        "kernel: matrix form equals pairwise sum",
        worst <= 1e-10 && negative == 0,
        format!("worst scaled difference {worst:.2e}, negative costs {negative}"),
    );

    let rho = limit_cycle_radius(&p);
    let mut max_zero: f64 = 0.0;
    let mut min_bumped = f64::INFINITY;
    for i in 0..8 {
        let th = TAU * i as f64 / 8.0;
        let mut states = vec![State2::new(rho * th.cos(), rho * th.sin())];
        for _ in 1..50 {
            states.push(ns_map_step(states.last().expect("non-empty"), &p));
        }
        let x = StackedStates::from_states(&states).expect("two or more states");
        max_zero = max_zero.max(cost_direct(&x, &p).total);
        let mut bumped = x.into_vector();
        bumped[rng.random_range(0..100)] += 1e-3;
        min_bumped = min_bumped.min(cost_direct(&StackedStates::new(bumped).expect("even"), &p).total);
    }
    let zero = check(
        "kernel: zero exactly on map trajectories",
        max_zero < 1e-18 * 50.0 && min_bumped > 0.0,
        format!("max on-cycle cost {max_zero:.2e}, min perturbed {min_bumped:.2e}"),
    );

    let mut worst_g: f64 = 0.0;
    for hp in [4usize, 20] {
        let m = build_cost_matrices(&p, hp).expect("horizon >= 2");
        for _ in 0..100 {
            let x = random_stack(rng, hp);
            let a = cost_gradient(&x, &m, &p, GradientMode::Analytic).expect("dims");
            let f = cost_gradient(&x, &m, &p, GradientMode::FiniteDifference).expect("dims");
            worst_g = worst_g.max((&a - &f).amax() / f.amax().max(1e-12));
        }
    }
    let grad = check(
        "kernel: analytic gradient matches central differences",
        worst_g <= 1e-5,
        format!("worst relative error {worst_g:.2e}"),
    );
    vec![oracle, zero, grad]
}

fn plant(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let tau = 0.0002;
    let css = build_grid_state_space(&GridCircuitParams::default());
    let dss = zoh_discretize(&css, tau).expect("finite exponential");
    let eig = |a: &DMatrix<f64>| {
        let mut e: Vec<f64> = a.complex_eigenvalues().iter().map(|c| c.re).collect();
        e.sort_by(f64::total_cmp);
        e
    };
    let want: Vec<f64> = {
        let mut w: Vec<f64> = eig(css.a()).iter().map(|l| (l * tau).exp()).collect();
        w.sort_by(f64::total_cmp);
        w
    };
    let got = eig(dss.a());
    let eig_err = want.iter().zip(&got).map(|(w, g)| (w - g).abs() / w.abs()).fold(0.0, f64::max);
    let eigen = check(
        "plant: ZOH maps eigenvalues to exp(lambda tau)",
        eig_err <= 1e-10,
        format!("worst relative error {eig_err:.2e}"),
    );

    let mut lift_err: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..=3);
        let hp = [1usize, 2, 7, 50][rng.random_range(0..4)];
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let f = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let d = DiscreteStateSpace::new(a, b, f, DMatrix::identity(n, n), 1.0).expect("consistent dims");
        let op = build_prediction_operator(&d, hp).expect("horizon >= 1");
        let x0 = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let u = DVector::from_fn(hp, |_, _| rng.random_range(-3.0..3.0));
        let v = DVector::from_fn(2 * hp, |_, _| rng.random_range(-3.0..3.0));
        let lifted = op.predict(&x0, &u, &v).expect("dims");
        let mut x = x0;
        for i in 0..hp {
            x = d.step(&x, &u.rows(i, 1).into_owned(), &v.rows(2 * i, 2).into_owned());
            lift_err = lift_err.max((&x - lifted.rows(n * i, n)).amax() / x.amax().max(1.0));
        }
    }
    let lifted = check(
        "plant: lifted prediction equals step recursion",
        lift_err <= 1e-12,
        format!("worst relative error {lift_err:.2e}"),
    );

    let cfg = SimulationConfig {
        mode: Mode::Uncompensated,
        total_time: 0.04,
        ..SimulationConfig::reference()
    };
    let (zoh, rk) = (
        run_closed_loop(&cfg).expect("valid reference"),
        run_reference_integration(&cfg, 100).expect("valid reference"),
    );
    let traj_err = zoh
        .samples
        .iter()
        .zip(&rk.samples)
        .map(|(a, b)| {
            let d = State2::new(a.xt1 - b.xt1, a.xt2 - b.xt2).norm();
            d / State2::new(b.xt1, b.xt2).norm()
        })
        .fold(0.0, f64::max);
    let rk4 = check(
        "plant: sampled model matches RK4 at tau/100",
        traj_err <= 1e-6,
        format!("worst relative state error {traj_err:.2e}"),
    );
    vec![eigen, lifted, rk4]
}

fn optimizer(rng: &mut ChaCha8Rng) -> Vec<Check> {
    let s = OptimizerSettings {
        optimality_tol: 1e-10,
        step_tol: 1e-14,
        ..OptimizerSettings::default()
    };
    let rosen = FnObjective::with_gradient(
        |x: &DVector<f64>| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
        |x: &DVector<f64>| {
            DVector::from_vec(vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ])
        },
    );
    let r = minimize(&rosen, DVector::from_vec(vec![-1.2, 1.0]), &s);
    let err = (r.p_star[0] - 1.0).abs().max((r.p_star[1] - 1.0).abs());
    let rosenbrock = check(
        "optimizer: Rosenbrock from (-1.2, 1)",
        err <= 1e-4 && r.iterations <= 200,
        format!("{} iterations, error {err:.2e}", r.iterations),
    );

    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = q.transpose() * &q + DMatrix::identity(n, n);
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (h1, h2, b1, b2) = (h.clone(), h.clone(), b.clone(), b.clone());
        let obj = FnObjective::with_gradient(
            move |x: &DVector<f64>| 0.5 * x.dot(&(&h1 * x)) - b1.dot(x),
            move |x: &DVector<f64>| &h2 * x - &b2,
        );
        let settings = OptimizerSettings {
            optimality_tol: 1e-8 / (n as f64).sqrt(),
            step_tol: 0.0,
            ..OptimizerSettings::default()
        };
        let r = minimize(&obj, DVector::zeros(n), &settings);
        ok &= (&h * &r.p_star - &b).norm() < 1e-8 && r.iterations <= 3 * n;
        ok &= r
            .trace
            .iter()
            .all(|t| t.slope < 0.0 && t.f_after <= t.f_before + settings.armijo_c1 * t.step_length * t.slope);
        worst_ratio = worst_ratio.max(r.iterations as f64 / (3 * n) as f64);
    }
    let quadratics = check(
        "optimizer: convex quadratics within 3n iterations",
        ok,
        format!("worst iterations / 3n = {worst_ratio:.2}"),
    );
    vec![rosenbrock, quadratics]
}

fn oracle_thd() -> Vec<Check> {
    let cfg = SimulationConfig {
        mode: Mode::Uncompensated,
        ..SimulationConfig::reference()
    };
    let log = run_closed_loop(&cfg).expect("valid reference");
    let (a_il, a_vc) = phasor_harmonic_amplitudes(&cfg.grid, &cfg.disturbance, DEFAULT_THD_ORDER);
    let mut checks = Vec::new();
    let mut max_amp_err: f64 = 0.0;
    for (name, pick, oracle) in [
        ("v_c", (|r: &lcmpc_core::simulator::SampleRecord| r.v_c) as fn(&_) -> f64, &a_vc),
        ("i_l", |r: &lcmpc_core::simulator::SampleRecord| r.i_l, &a_il),
    ] {
        let spec = harmonic_spectrum(&log.final_period(pick), log.f, log.tau, DEFAULT_THD_ORDER).expect("coherent");
        let sim = thd(&spec, DEFAULT_THD_ORDER).expect("non-zero fundamental");
        let want = thd_from_amplitudes(oracle, DEFAULT_THD_ORDER).expect("non-zero fundamental");
        checks.push(check(
            if name == "v_c" {
                "oracle-thd: v_c simulation vs phasor"
            } else {
                "oracle-thd: i_l simulation vs phasor"
            },
            (sim - want).abs() <= 1.0,
            format!("simulated {sim:.3} %, phasor {want:.3} %"),
        ));
        for n in [1usize, 3, 5] {
            max_amp_err = max_amp_err.max((spec.amplitude(n) - oracle[n - 1]).abs() / oracle[n - 1]);
        }
    }
    checks.push(check(
        "oracle-thd: per-harmonic amplitudes within 1 %",
        max_amp_err <= 0.01,
        format!("worst relative error {max_amp_err:.2e}"),
    ));
    checks
}

pub fn run_suite(suite: Suite, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Kernel => kernel(&mut rng),
        Suite::Plant => plant(&mut rng),
        Suite::Optimizer => optimizer(&mut rng),
        Suite::OracleThd => oracle_thd(),
        Suite::All => [Suite::Kernel, Suite::Plant, Suite::Optimizer, Suite::OracleThd]
            .into_iter()
            .flat_map(|s| run_suite(s, seed))
            .collect(),
    }
}
