//! Fixtures shared by the benchmarks.

use lcmpc_core::controller::LcmpcController;
use lcmpc_core::grid_model::synthesize_disturbance;
use lcmpc_core::simulator::{build_grid_plant, GridPlant, SimulationConfig};
use lcmpc_core::{LcmpcConfig, StackedStates, State2};
use nalgebra::DVector;

/// Reference scenario with its plant and a ready controller.
pub struct Fixture {
    pub cfg: SimulationConfig,
    pub plant: GridPlant,
    pub controller: LcmpcController,
    /// Disturbance over one horizon, interleaved `(i_d, v_s)`.
    pub v: DVector<f64>,
    pub x0: DVector<f64>,
}

impl Fixture {
    pub fn reference() -> Self {
        let cfg = SimulationConfig::reference();
        let plant = build_grid_plant(&cfg.grid, cfg.tau).expect("reference plant");
        let mut lc = LcmpcConfig::new(cfg.lc, cfg.horizon, cfg.harmonics, plant.discrete.clone());
        lc.settings = cfg.optimizer;
        lc.gradient = cfg.gradient;
        let controller = LcmpcController::new(lc).expect("reference controller");
        let v = DVector::from_iterator(
            2 * cfg.horizon,
            (0..cfg.horizon).flat_map(|k| {
                let (i_d, v_s) =
                    synthesize_disturbance(&cfg.disturbance, cfg.grid.vs_amplitude, cfg.grid.f, k, cfg.tau);
                [i_d, v_s]
            }),
        );
        Self {
            cfg,
            plant,
            controller,
            v,
            x0: DVector::from_vec(vec![0.0, 1.0]),
        }
    }
}

/// States on the unit circle advanced by `2π/100` per sample, slightly perturbed.
pub fn circle_states(horizon: usize) -> StackedStates {
    let states: Vec<State2> = (0..horizon)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / 100.0;
            let r = 1.0 + 1e-3 * (j as f64 * 0.7).sin();
            State2::new(r * th.cos(), r * th.sin())
        })
        .collect();
    StackedStates::from_states(&states).expect("non-empty horizon")
}
