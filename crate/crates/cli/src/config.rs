//! Scenario files.
//!
//! A small sectioned `key = value` format:
//!
//! ```text
//! [grid]
//! R1_ohm = 100
//! [disturbance.1]
//! order = 3
//! phase_rad = atan(4/3)
//! ```
//!
//! Numeric values are arithmetic expressions (`+ - * / ^`, parentheses,
//! `pi`, `atan`, `sqrt`, ...). `#` starts a comment. Keys left out keep the
//! reference-scenario value, except that harmonic sources exist only when a
//! `[disturbance.N]` or `[output_disturbance.N]` section declares them.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use lcmpc_core::analysis::{DEFAULT_THD_ORDER, VOLTAGE_THD_LIMIT};
use lcmpc_core::grid_model::HarmonicComponent;
use lcmpc_core::kernel_cost::GradientMode;
use lcmpc_core::normal_forms::LimitCycleParams;
use lcmpc_core::simulator::{Bootstrap, InitialState, OutputChannel, OutputDisturbance, SimulationConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sim: SimulationConfig,
    pub thd_max_order: usize,
    pub vc_thd_limit_percent: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        let mut sim = SimulationConfig::reference();
        sim.disturbance.clear();
        Self {
            sim,
            thd_max_order: DEFAULT_THD_ORDER,
            vc_thd_limit_percent: VOLTAGE_THD_LIMIT,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Parser<'a> {
    origin: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> CliError {
        CliError::Config {
            origin: self.origin.to_string(),
            line,
            msg: msg.into(),
        }
    }

    fn sections(&self, text: &str) -> Result<Vec<Section>, CliError> {
        let mut sections: Vec<Section> = Vec::new();
        let mut names = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| self.err(line, "unterminated section header"))?
                    .trim()
                    .to_string();
                if !names.insert(name.clone()) {
                    return Err(self.err(line, format!("duplicate section [{name}]")));
                }
                sections.push(Section {
                    name,
                    line,
                    entries: BTreeMap::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| self.err(line, format!("expected `key = value`, got `{content}`")))?;
            let section = sections
                .last_mut()
                .ok_or_else(|| self.err(line, "key outside of any section"))?;
            let key = key.trim().to_string();
            if section.entries.contains_key(&key) {
                return Err(self.err(line, format!("duplicate key `{key}` in [{}]", section.name)));
            }
            section.entries.insert(
                key,
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(sections)
    }

    fn number(&self, e: &Entry) -> Result<f64, CliError> {
        let v = meval::eval_str(&e.value).map_err(|err| self.err(e.line, format!("cannot evaluate `{}`: {err}", e.value)))?;
        if !v.is_finite() {
            return Err(self.err(e.line, format!("`{}` is not finite", e.value)));
        }
        Ok(v)
    }

    fn count(&self, e: &Entry) -> Result<usize, CliError> {
        let v = self.number(e)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(self.err(e.line, format!("expected a non-negative integer, got `{}`", e.value)));
        }
        Ok(v as usize)
    }

    fn choice<T: Copy>(&self, e: &Entry, options: &[(&str, T)]) -> Result<T, CliError> {
        options
            .iter()
            .find(|(name, _)| *name == e.value)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                let names: Vec<_> = options.iter().map(|(n, _)| *n).collect();
                self.err(e.line, format!("expected one of {}, got `{}`", names.join(", "), e.value))
            })
    }

    fn harmonic(&self, s: &Section, amplitude_key: &str) -> Result<HarmonicComponent, CliError> {
        let get = |k: &str| {
            s.entries
                .get(k)
                .ok_or_else(|| self.err(s.line, format!("[{}] needs `{k}`", s.name)))
        };
        let order = self.count(get("order")?)?;
        let amplitude = self.number(get(amplitude_key)?)?;
        let phase = match s.entries.get("phase_rad") {
            Some(e) => self.number(e)?,
            None => 0.0,
        };
        HarmonicComponent::new(order, amplitude, phase).map_err(|e| self.err(s.line, e.to_string()))
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("grid", &["R1_ohm", "R2_ohm", "L2_H", "C2_F", "f_Hz", "vs_amplitude_V"]),
    ("limit_cycle", &["mu", "alpha"]),
    (
        "controller",
        &["horizon", "harmonics", "bootstrap", "gradient", "optimality_tol", "step_tol", "max_iters"],
    ),
    (
        "simulation",
        &["tau_s", "total_time_s", "initial_state", "thd_max_order", "vc_thd_limit_percent"],
    ),
    ("disturbance", &["order", "amplitude_A", "phase_rad"]),
    ("output_disturbance", &["signal", "order", "amplitude", "phase_rad"]),
];

const BOOTSTRAP: &[(&str, Bootstrap)] = &[("oracle", Bootstrap::Oracle), ("zero", Bootstrap::Zero)];
const GRADIENT: &[(&str, GradientMode)] = &[
    ("analytic", GradientMode::Analytic),
    ("finite_difference", GradientMode::FiniteDifference),
];
const INITIAL: &[(&str, InitialState)] = &[
    ("steady_state", InitialState::SteadyState),
    ("zero", InitialState::Zero),
];
const CHANNEL: &[(&str, OutputChannel)] = &[("v_c", OutputChannel::Vc), ("i_l", OutputChannel::Il)];

fn label<T: PartialEq>(options: &[(&'static str, T)], v: &T) -> &'static str {
    options.iter().find(|(_, o)| o == v).map(|(n, _)| *n).unwrap_or("?")
}

pub fn parse(text: &str, origin: &str) -> Result<Scenario, CliError> {
    let p = Parser { origin };
    let sections = p.sections(text)?;
    let mut sc = Scenario::default();
    let mut disturbances: BTreeMap<u64, HarmonicComponent> = BTreeMap::new();
    let mut outputs: BTreeMap<u64, OutputDisturbance> = BTreeMap::new();
    let (mut mu, mut alpha) = (sc.sim.lc.mu(), sc.sim.lc.alpha());

    for s in &sections {
        let (kind, index) = match s.name.split_once('.') {
            Some((k, idx)) => {
                let n = idx
                    .parse::<u64>()
                    .map_err(|_| p.err(s.line, format!("section index `{idx}` is not an integer")))?;
                (k, Some(n))
            }
            None => (s.name.as_str(), None),
        };
        let allowed = KEYS
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, keys)| *keys)
            .ok_or_else(|| p.err(s.line, format!("unknown section [{}]", s.name)))?;
        let indexed = matches!(kind, "disturbance" | "output_disturbance");
        if indexed != index.is_some() {
            return Err(p.err(
                s.line,
                if indexed {
                    format!("[{kind}] needs an index, e.g. [{kind}.1]")
                } else {
                    format!("[{kind}] takes no index")
                },
            ));
        }
        for (key, e) in &s.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(p.err(e.line, format!("unknown key `{key}` in [{}]", s.name)));
            }
        }

        let g = &mut sc.sim.grid;
        for (key, e) in &s.entries {
            match (kind, key.as_str()) {
                ("grid", "R1_ohm") => g.r1 = p.number(e)?,
                ("grid", "R2_ohm") => g.r2 = p.number(e)?,
                ("grid", "L2_H") => g.l2 = p.number(e)?,
                ("grid", "C2_F") => g.c2 = p.number(e)?,
                ("grid", "f_Hz") => g.f = p.number(e)?,
                ("grid", "vs_amplitude_V") => g.vs_amplitude = p.number(e)?,
                ("limit_cycle", "mu") => mu = p.number(e)?,
                ("limit_cycle", "alpha") => alpha = p.number(e)?,
                ("controller", "horizon") => sc.sim.horizon = p.count(e)?,
                ("controller", "harmonics") => sc.sim.harmonics = p.count(e)?,
                ("controller", "bootstrap") => sc.sim.bootstrap = p.choice(e, BOOTSTRAP)?,
                ("controller", "gradient") => sc.sim.gradient = p.choice(e, GRADIENT)?,
                ("controller", "optimality_tol") => sc.sim.optimizer.optimality_tol = p.number(e)?,
                ("controller", "step_tol") => sc.sim.optimizer.step_tol = p.number(e)?,
                ("controller", "max_iters") => sc.sim.optimizer.max_iters = p.count(e)?,
                ("simulation", "tau_s") => sc.sim.tau = p.number(e)?,
                ("simulation", "total_time_s") => sc.sim.total_time = p.number(e)?,
                ("simulation", "initial_state") => sc.sim.initial_state = p.choice(e, INITIAL)?,
                ("simulation", "thd_max_order") => sc.thd_max_order = p.count(e)?,
                ("simulation", "vc_thd_limit_percent") => sc.vc_thd_limit_percent = p.number(e)?,
                _ => {}
            }
        }
        match (kind, index) {
            ("disturbance", Some(n)) => {
                disturbances.insert(n, p.harmonic(s, "amplitude_A")?);
            }
            ("output_disturbance", Some(n)) => {
                let channel = s
                    .entries
                    .get("signal")
                    .ok_or_else(|| p.err(s.line, format!("[{}] needs `signal`", s.name)))?;
                outputs.insert(
                    n,
                    OutputDisturbance {
                        channel: p.choice(channel, CHANNEL)?,
                        component: p.harmonic(s, "amplitude")?,
                    },
                );
            }
            _ => {}
        }
    }

    sc.sim.disturbance = disturbances.into_values().collect();
    sc.sim.output_disturbance = outputs.into_values().collect();
    let at = |name: &str| sections.iter().find(|s| s.name == name).map_or(1, |s| s.line);
    sc.sim
        .grid
        .validate()
        .map_err(|e| p.err(at("grid"), e.to_string()))?;
    sc.sim.lc = LimitCycleParams::new(mu, alpha, sc.sim.grid.omega(), sc.sim.tau)
        .map_err(|e| p.err(at("limit_cycle"), e.to_string()))?;
    sc.sim
        .optimizer
        .validate()
        .map_err(|e| p.err(at("controller"), e))?;
    sc.sim.validate().map_err(|e| p.err(at("simulation"), e.to_string()))?;
    if sc.thd_max_order == 0 {
        return Err(p.err(at("simulation"), "thd_max_order must be >= 1"));
    }
    Ok(sc)
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

/// Writes a scenario back in the file format. Numbers use the shortest
/// representation that parses back to the same `f64`.
pub fn to_text(sc: &Scenario) -> String {
    let s = &sc.sim;
    let g = &s.grid;
    let mut out = String::new();
    let _ = writeln!(out, "[grid]");
    let _ = writeln!(out, "R1_ohm = {:?}", g.r1);
    let _ = writeln!(out, "R2_ohm = {:?}", g.r2);
    let _ = writeln!(out, "L2_H = {:?}", g.l2);
    let _ = writeln!(out, "C2_F = {:?}", g.c2);
    let _ = writeln!(out, "f_Hz = {:?}", g.f);
    let _ = writeln!(out, "vs_amplitude_V = {:?}", g.vs_amplitude);
    for (i, h) in s.disturbance.iter().enumerate() {
        let _ = writeln!(out, "\n[disturbance.{}]", i + 1);
        let _ = writeln!(out, "order = {}", h.order());
        let _ = writeln!(out, "amplitude_A = {:?}", h.amplitude());
        let _ = writeln!(out, "phase_rad = {:?}", h.phase());
    }
    for (i, od) in s.output_disturbance.iter().enumerate() {
        let _ = writeln!(out, "\n[output_disturbance.{}]", i + 1);
        let _ = writeln!(out, "signal = {}", label(CHANNEL, &od.channel));
        let _ = writeln!(out, "order = {}", od.component.order());
        let _ = writeln!(out, "amplitude = {:?}", od.component.amplitude());
        let _ = writeln!(out, "phase_rad = {:?}", od.component.phase());
    }
    let _ = writeln!(out, "\n[limit_cycle]");
    let _ = writeln!(out, "mu = {:?}", s.lc.mu());
    let _ = writeln!(out, "alpha = {:?}", s.lc.alpha());
    let _ = writeln!(out, "\n[controller]");
    let _ = writeln!(out, "horizon = {}", s.horizon);
    let _ = writeln!(out, "harmonics = {}", s.harmonics);
    let _ = writeln!(out, "bootstrap = {}", label(BOOTSTRAP, &s.bootstrap));
    let _ = writeln!(out, "gradient = {}", label(GRADIENT, &s.gradient));
    let _ = writeln!(out, "optimality_tol = {:?}", s.optimizer.optimality_tol);
    let _ = writeln!(out, "step_tol = {:?}", s.optimizer.step_tol);
    let _ = writeln!(out, "max_iters = {}", s.optimizer.max_iters);
    let _ = writeln!(out, "\n[simulation]");
    let _ = writeln!(out, "tau_s = {:?}", s.tau);
    let _ = writeln!(out, "total_time_s = {:?}", s.total_time);
    let _ = writeln!(out, "initial_state = {}", label(INITIAL, &s.initial_state));
    let _ = writeln!(out, "thd_max_order = {}", sc.thd_max_order);
    let _ = writeln!(out, "vc_thd_limit_percent = {:?}", sc.vc_thd_limit_percent);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER: &str = include_str!("../../../configs/paper.cfg");

    #[test]
    fn bundled_config_is_the_reference_scenario() {
        let sc = parse(PAPER, "paper.cfg").unwrap();
        assert_eq!(sc.sim, SimulationConfig::reference());
        assert_eq!(sc.thd_max_order, 25);
        assert_eq!(sc.vc_thd_limit_percent, 8.0);
    }

    #[test]
    fn round_trip_is_exact() {
        let sc = parse(PAPER, "paper.cfg").unwrap();
        let again = parse(&to_text(&sc), "effective.cfg").unwrap();
        assert_eq!(sc, again);
        assert_eq!(to_text(&sc), to_text(&again));
    }

    #[test]
    fn expressions_evaluate() {
        let sc = parse("[disturbance.1]\norder = 3\namplitude_A = 2*1.5\nphase_rad = atan(3/4) + pi/2\n", "t").unwrap();
        let h = sc.sim.disturbance[0];
        assert_eq!(h.amplitude(), 3.0);
        assert_eq!(h.phase(), (0.75f64).atan() + std::f64::consts::FRAC_PI_2);
    }

    fn line_of(text: &str) -> usize {
        match parse(text, "t") {
            Err(CliError::Config { line, .. }) => line,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("[grid]\nR1_ohm = 100\nR3_ohm = 1\n"), 3);
        assert_eq!(line_of("[grid]\n\nR1_ohm = 1/\n"), 3);
        assert_eq!(line_of("# c\nR1_ohm = 1\n"), 2);
        assert_eq!(line_of("[grid]\n[nonsense]\n"), 2);
        assert_eq!(line_of("[grid]\nR1_ohm = 1\nR1_ohm = 2\n"), 3);
        assert_eq!(line_of("[controller]\nbootstrap = maybe\n"), 2);
        assert_eq!(line_of("[disturbance]\norder = 3\n"), 1);
        assert_eq!(line_of("[controller]\nhorizon = 2.5\n"), 2);
        assert_eq!(line_of("[grid]\nR1_ohm = 1\n\n[limit_cycle]\nmu = -1\n"), 4);
        assert_eq!(line_of("[grid\n"), 1);
    }

    #[test]
    fn defaults_have_no_harmonic_sources() {
        let sc = parse("", "t").unwrap();
        assert!(sc.sim.disturbance.is_empty());
        assert_eq!(sc.sim.horizon, 200);
    }
}
