use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use lcmpc_core::analysis::{harmonic_spectrum, ThdReport};
use lcmpc_core::simulator::{run_closed_loop, Bootstrap, Mode, SimulationConfig, SimulationLog};

use crate::config::{self, Scenario};
use crate::error::CliError;
use crate::manifest::RunManifest;

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Compensated => "compensated",
        Mode::Uncompensated => "uncompensated",
    }
}

fn write_spectrum(log: &SimulationLog, max_order: usize, path: &Path) -> Result<(), CliError> {
    let window = log.final_period_window();
    let vc = harmonic_spectrum(&log.signal(window.clone(), |r| r.v_c), log.f, log.tau, max_order)?;
    let il = harmonic_spectrum(&log.signal(window, |r| r.i_l), log.f, log.tau, max_order)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "order,freq_Hz,v_c_amplitude,v_c_phase_rad,i_l_amplitude,i_l_phase_rad")?;
    for n in 1..=max_order {
        writeln!(
            w,
            "{n},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            n as f64 * log.f,
            vc.amplitude(n),
            vc.phase(n),
            il.amplitude(n),
            il.phase(n)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_log(log: &SimulationLog, dir: &Path, sc: &Scenario) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("samples.csv"))?);
    log.write_samples_csv(&mut w)?;
    w.flush()?;
    if !log.periods.is_empty() {
        let mut w = BufWriter::new(File::create(dir.join("periods.csv"))?);
        log.write_periods_csv(&mut w)?;
        w.flush()?;
    }
    write_spectrum(log, sc.thd_max_order, &dir.join("spectrum.csv"))
}

/// Runs the requested modes and returns the THD report plus solver
/// statistics of the compensated run.
pub fn run_modes(sc: &Scenario, modes: &[Mode], out: &Path, manifest: &mut RunManifest) -> Result<(ThdReport, Option<String>), CliError> {
    let mut report = ThdReport::default();
    let mut solver = None;
    for &mode in modes {
        let name = mode_name(mode);
        let cfg = SimulationConfig {
            mode,
            ..sc.sim.clone()
        };
        let log = manifest.time(name, || run_closed_loop(&cfg))?;
        write_log(&log, &out.join(name), sc)?;
        let vc = log.final_period(|r| r.v_c);
        let il = log.final_period(|r| r.i_l);
        report.analyse(&format!("{name}.v_c"), &vc, log.f, log.tau, sc.thd_max_order, Some(sc.vc_thd_limit_percent))?;
        report.analyse(&format!("{name}.i_l"), &il, log.f, log.tau, sc.thd_max_order, None)?;
        if !log.periods.is_empty() {
            let n = log.periods.len() as f64;
            let ms = log.periods.iter().map(|p| p.wall_ms).sum::<f64>() / n;
            let iters = log.periods.iter().map(|p| p.iterations).sum::<usize>() as f64 / n;
            let fallbacks = log.periods.iter().filter(|p| p.fell_back).count();
            solver = Some(format!(
                "{} periods optimized: {ms:.1} ms and {iters:.1} iterations per period on average, {fallbacks} fallbacks",
                log.periods.len()
            ));
        }
    }
    Ok((report, solver))
}

pub fn summary_table(report: &ThdReport, max_order: usize, solver: Option<&str>) -> String {
    let cell = |name: &str| {
        report
            .get(name)
            .map_or_else(|| "-".to_string(), |e| format!("{:.3} %", e.thd_percent))
    };
    let mut out = String::new();
    let _ = writeln!(out, "THD over the final fundamental period (orders 2..{max_order})");
    let _ = writeln!(out, "{:<8}{:>16}{:>16}{:>10}", "signal", "uncompensated", "compensated", "limit");
    for signal in ["v_c", "i_l"] {
        let limit = report
            .get(&format!("compensated.{signal}"))
            .or_else(|| report.get(&format!("uncompensated.{signal}")))
            .and_then(|e| e.limit_percent)
            .map_or_else(|| "-".to_string(), |l| format!("{l} %"));
        let _ = writeln!(
            out,
            "{signal:<8}{:>16}{:>16}{limit:>10}",
            cell(&format!("uncompensated.{signal}")),
            cell(&format!("compensated.{signal}"))
        );
    }
    if let Some(s) = solver {
        let _ = writeln!(out, "{s}");
    }
    out
}

pub fn run(config_path: &Path, out: &Path, modes: &[Mode], bootstrap: Option<Bootstrap>) -> Result<ExitCode, CliError> {
    let mut manifest = RunManifest::new(Some(config_path), out);
    let mut sc = manifest.time("parse", || config::load(config_path))?;
    if let Some(b) = bootstrap {
        sc.sim.bootstrap = b;
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("effective.cfg"), config::to_text(&sc))?;

    let (report, solver) = run_modes(&sc, modes, out, &mut manifest)?;
    fs::write(out.join("thd.csv"), report.to_csv())?;
    fs::write(out.join("thd.txt"), report.to_text())?;
    let summary = summary_table(&report, sc.thd_max_order, solver.as_deref());
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    manifest.write(out)?;

    let compensated_ok = ["compensated.v_c", "compensated.i_l"]
        .iter()
        .filter_map(|n| report.get(n))
        .all(|e| e.passes());
    Ok(if compensated_ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("compensated run exceeds the THD limit");
        ExitCode::from(1)
    })
}
