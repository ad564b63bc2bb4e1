use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use lcmpc_core::normal_forms::{
    integrate_hopf, iterate_trajectory, limit_cycle_radius, phase_portrait_seeds, write_phase_portrait_csv,
    HopfParams, LimitCycleParams, State2,
};

use crate::error::CliError;
use crate::manifest::RunManifest;

pub enum Source<'a> {
    Map {
        mu: f64,
        alpha: f64,
        omega: f64,
        tau: f64,
        steps: usize,
    },
    Hopf {
        mu_c: f64,
        alpha_c: f64,
        omega: f64,
        dt: f64,
        steps: usize,
    },
    Log(&'a Path),
}

fn radius_range(points: &[State2]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), x| {
        let r = x.norm();
        (lo.min(r), hi.max(r))
    })
}

fn read_log(path: &Path) -> Result<Vec<State2>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("{} has no `{name}` column", path.display())))
    };
    let (c1, c2) = (col("xt1")?, col("xt2")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::Usage(format!("{}: row {}: {e}", path.display(), i + 2)))
        };
        out.push(State2::new(num(c1)?, num(c2)?));
    }
    Ok(out)
}

pub fn run(source: Source<'_>, out: &Path) -> Result<ExitCode, CliError> {
    let invalid = |e: lcmpc_core::Error| CliError::Usage(e.to_string());
    let mut manifest = RunManifest::new(None, out);
    let trajectories: Vec<Vec<State2>> = match source {
        Source::Map {
            mu,
            alpha,
            omega,
            tau,
            steps,
        } => {
            let p = LimitCycleParams::new(mu, alpha, omega, tau).map_err(invalid)?;
            let rho = limit_cycle_radius(&p);
            let trajs: Vec<_> = manifest.time("iterate", || {
                phase_portrait_seeds(rho)
                    .into_iter()
                    .map(|x0| iterate_trajectory(x0, &p, steps).states)
                    .collect()
            });
            let ends: Vec<State2> = trajs.iter().map(|t: &Vec<State2>| *t.last().unwrap()).collect();
            let (lo, hi) = radius_range(&ends);
            println!("limit cycle radius {rho:.6}; final radii of {} trajectories in [{lo:.6}, {hi:.6}]", trajs.len());
            trajs
        }
        Source::Hopf {
            mu_c,
            alpha_c,
            omega,
            dt,
            steps,
        } => {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(CliError::Usage(format!("dt must be > 0, got {dt}")));
            }
            let p = HopfParams::new(alpha_c, mu_c, omega).map_err(invalid)?;
            let rho = p.radius();
            let trajs: Vec<_> = manifest.time("integrate", || {
                phase_portrait_seeds(rho)
                    .into_iter()
                    .map(|x0| integrate_hopf(x0, &p, dt, steps))
                    .collect()
            });
            let ends: Vec<State2> = trajs.iter().map(|t: &Vec<State2>| *t.last().unwrap()).collect();
            let (lo, hi) = radius_range(&ends);
            println!("limit cycle radius {rho:.6}; final radii of {} trajectories in [{lo:.6}, {hi:.6}]", trajs.len());
            trajs
        }
        Source::Log(path) => {
            manifest.config_path = Some(path.display().to_string());
            let states = read_log(path)?;
            let (lo, hi) = radius_range(&states);
            println!("{} normal-form states, radius in [{lo:.6}, {hi:.6}]", states.len());
            vec![states]
        }
    };
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("phase_portrait.csv"))?);
    write_phase_portrait_csv(&mut w, &trajectories)?;
    w.flush()?;
    manifest.write(out)?;
    Ok(ExitCode::SUCCESS)
}
