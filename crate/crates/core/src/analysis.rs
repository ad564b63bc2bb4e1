//! Coherent harmonic analysis and THD.
//!
//! Windows must span an integer number `q` of fundamental periods, so every
//! harmonic falls exactly on DFT bin `n·q` and no window function is needed.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default highest harmonic included in THD.
pub const DEFAULT_THD_ORDER: usize = 25;

/// Voltage THD limit used for pass/fail reporting, in percent.
pub const VOLTAGE_THD_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpectrum {
    pub fundamental_freq: f64,
    /// `amplitudes[n-1]` is the peak amplitude of harmonic `n`.
    pub amplitudes: Vec<f64>,
    /// Sine-convention phase of harmonic `n`: `a sin(nωt + phase)`.
    pub phases: Vec<f64>,
    /// Raw DFT values at the harmonic bins.
    pub bins: Vec<Complex64>,
    /// `(start sample, length)` of the analysed window.
    pub window: (usize, usize),
}

impl HarmonicSpectrum {
    pub fn amplitude(&self, n: usize) -> f64 {
        self.amplitudes[n - 1]
    }

    pub fn phase(&self, n: usize) -> f64 {
        self.phases[n - 1]
    }

    pub fn max_order(&self) -> usize {
        self.amplitudes.len()
    }
}

/// Number of whole periods in `len` samples; rejects fractional windows.
fn periods_in(len: usize, f: f64, tau: f64) -> Result<usize> {
    let per_period = 1.0 / (f * tau);
    let q = len as f64 / per_period;
    let qi = q.round();
    if len == 0 || qi < 1.0 || (q - qi).abs() > 1e-9 * q.max(1.0) {
        return Err(Error::IncoherentWindow {
            len,
            period: per_period,
        });
    }
    Ok(qi as usize)
}

fn dft_bin(signal: &[f64], bin: usize) -> Complex64 {
    let n = signal.len() as f64;
    signal
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let angle = -TAU * (bin * k) as f64 / n;
            Complex64::from_polar(s, angle)
        })
        .sum()
}

fn wrap_phase(p: f64) -> f64 {
    let w = (p + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

pub fn harmonic_spectrum(signal: &[f64], f: f64, tau: f64, max_order: usize) -> Result<HarmonicSpectrum> {
    harmonic_spectrum_at(signal, 0, f, tau, max_order)
}

/// As [`harmonic_spectrum`], recording `start` as the window offset.
pub fn harmonic_spectrum_at(
    signal: &[f64],
    start: usize,
    f: f64,
    tau: f64,
    max_order: usize,
) -> Result<HarmonicSpectrum> {
    if !(f > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency and sampling time must be > 0 (f = {f}, tau = {tau})"
        )));
    }
    if max_order as f64 * f >= 0.5 / tau {
        return Err(Error::Nyquist {
            order: max_order,
            phi: TAU * f * tau,
        });
    }
    let q = periods_in(signal.len(), f, tau)?;
    let scale = 2.0 / signal.len() as f64;
    let bins: Vec<Complex64> = (1..=max_order).map(|n| dft_bin(signal, n * q)).collect();
    Ok(HarmonicSpectrum {
        fundamental_freq: f,
        amplitudes: bins.iter().map(|b| scale * b.norm()).collect(),
        phases: bins.iter().map(|b| wrap_phase(b.arg() + FRAC_PI_2)).collect(),
        bins,
        window: (start, signal.len()),
    })
}

/// THD in percent, `100 · sqrt(Σ_{n=2}^{max_order} aₙ²) / a₁`.
pub fn thd(spectrum: &HarmonicSpectrum, max_order: usize) -> Result<f64> {
    thd_from_amplitudes(&spectrum.amplitudes, max_order)
}

/// THD from a list of amplitudes where index 0 is the fundamental.
pub fn thd_from_amplitudes(amplitudes: &[f64], max_order: usize) -> Result<f64> {
    let a1 = amplitudes.first().copied().unwrap_or(0.0);
    if !(a1 > 0.0) {
        return Err(Error::ZeroFundamental);
    }
    let upper = max_order.min(amplitudes.len());
    let harmonic: f64 = amplitudes[1.min(upper)..upper].iter().map(|a| a * a).sum();
    Ok(100.0 * harmonic.sqrt() / a1)
}

/// Fundamental amplitude and the frequency of the strongest non-DC bin.
pub fn amplitude_frequency_check(signal: &[f64], f: f64, tau: f64) -> Result<(f64, f64)> {
    let q = periods_in(signal.len(), f, tau)?;
    let n = signal.len();
    let scale = 2.0 / n as f64;
    let amplitude = scale * dft_bin(signal, q).norm();
    let (best, _) = (1..=n / 2)
        .map(|b| (b, dft_bin(signal, b).norm()))
        .fold((q, f64::NEG_INFINITY), |acc, (b, m)| if m > acc.1 { (b, m) } else { acc });
    Ok((amplitude, best as f64 / (n as f64 * tau)))
}

/// Last `periods` whole periods of `signal`, with the window start index.
pub fn final_periods(signal: &[f64], samples_per_period: usize, periods: usize) -> Result<(usize, &[f64])> {
    let len = samples_per_period * periods;
    if len == 0 || signal.len() < len {
        return Err(Error::InvalidParameter(format!(
            "signal of {} samples is shorter than {periods} period(s) of {samples_per_period}",
            signal.len()
        )));
    }
    let start = signal.len() - len;
    Ok((start, &signal[start..]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThdEntry {
    pub signal: String,
    pub thd_percent: f64,
    /// Harmonic amplitudes `a1 … a_max`.
    pub amplitudes: Vec<f64>,
    /// `None` when the signal has no limit to meet.
    pub limit_percent: Option<f64>,
}

impl ThdEntry {
    pub fn passes(&self) -> bool {
        self.limit_percent.is_none_or(|l| self.thd_percent <= l)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ThdReport {
    pub entries: Vec<ThdEntry>,
}

impl ThdReport {
    pub fn analyse(
        &mut self,
        name: &str,
        signal: &[f64],
        f: f64,
        tau: f64,
        max_order: usize,
        limit_percent: Option<f64>,
    ) -> Result<&ThdEntry> {
        let spectrum = harmonic_spectrum(signal, f, tau, max_order)?;
        let thd_percent = thd(&spectrum, max_order)?;
        self.entries.push(ThdEntry {
            signal: name.to_string(),
            thd_percent,
            amplitudes: spectrum.amplitudes,
            limit_percent,
        });
        Ok(self.entries.last().unwrap())
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(ThdEntry::passes)
    }

    pub fn get(&self, signal: &str) -> Option<&ThdEntry> {
        self.entries.iter().find(|e| e.signal == signal)
    }

    /// `signal,thd_percent,a1,a2,…` rows.
    pub fn to_csv(&self) -> String {
        let orders = self.entries.iter().map(|e| e.amplitudes.len()).max().unwrap_or(0);
        let mut out = String::from("signal,thd_percent");
        for n in 1..=orders {
            let _ = write!(out, ",a{n}");
        }
        out.push('\n');
        for e in &self.entries {
            let _ = write!(out, "{},{:.16e}", e.signal, e.thd_percent);
            for n in 0..orders {
                let _ = write!(out, ",{:.16e}", e.amplitudes.get(n).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>10} {:>12} {:>8}", "signal", "THD [%]", "a1", "status");
        for e in &self.entries {
            let status = match e.limit_percent {
                None => "-".to_string(),
                Some(l) if e.thd_percent <= l => format!("pass (<= {l}%)"),
                Some(l) => format!("FAIL (> {l}%)"),
            };
            let _ = writeln!(
                out,
                "{:<8} {:>10.3} {:>12.6} {:>8}",
                e.signal,
                e.thd_percent,
                e.amplitudes.first().copied().unwrap_or(0.0),
                status
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const F: f64 = 50.0;
    const TAU_S: f64 = 0.0002;

    fn tone(n: usize, a: f64, phase: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|k| a * (n as f64 * TAU * F * k as f64 * TAU_S + phase).sin())
            .collect()
    }

    #[test]
    fn single_tone() {
        let s = tone(1, 3.0, 0.0, 100);
        let sp = harmonic_spectrum(&s, F, TAU_S, 25).unwrap();
        assert!((sp.amplitude(1) - 3.0).abs() < 1e-9);
        for n in 2..=25 {
            assert!(sp.amplitude(n) < 1e-9);
        }
        assert!(sp.phase(1).abs() < 1e-9);
    }

    #[test]
    fn distortion_waveform() {
        let spec = crate::grid_model::standard_distortion();
        let s: Vec<f64> = (0..100)
            .map(|k| crate::grid_model::synthesize_disturbance(&spec, 400.0, F, k, TAU_S).0)
            .collect();
        let sp = harmonic_spectrum(&s, F, TAU_S, 10).unwrap();
        assert!((sp.amplitude(3) - 2.0).abs() < 1e-9);
        assert!((sp.amplitude(5) - 3.0).abs() < 1e-9);
        assert!((sp.phase(3) - (4.0f64 / 3.0).atan()).abs() < 1e-9);
        assert!((sp.phase(5) - ((3.0f64 / 4.0).atan() + FRAC_PI_2)).abs() < 1e-9);
        assert!(sp.amplitude(1) < 1e-9);
    }

    #[test]
    fn constant_signal_has_no_harmonics() {
        let sp = harmonic_spectrum(&[2.5; 200], F, TAU_S, 25).unwrap();
        assert!(sp.amplitudes.iter().all(|a| *a < 1e-12));
    }

    #[test]
    fn rejects_fractional_window_and_nyquist() {
        assert!(matches!(
            harmonic_spectrum(&[0.0; 150], F, TAU_S, 5),
            Err(Error::IncoherentWindow { .. })
        ));
        assert!(matches!(
            harmonic_spectrum(&[0.0; 100], F, TAU_S, 50),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn multi_period_window() {
        let s = tone(2, 1.5, 0.3, 300);
        let sp = harmonic_spectrum(&s, F, TAU_S, 5).unwrap();
        assert!((sp.amplitude(2) - 1.5).abs() < 1e-9);
        assert!((sp.phase(2) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn thd_examples() {
        let pure = harmonic_spectrum(&tone(1, 1.0, 0.0, 100), F, TAU_S, 25).unwrap();
        assert!(thd(&pure, 25).unwrap() < 1e-8);

        let i_l = thd_from_amplitudes(&[3.49, 0.0, 1.38, 0.0, 1.57], 25).unwrap();
        assert!((i_l - 59.8).abs() < 0.1, "{i_l}");
        let v_c = thd_from_amplitudes(&[1.11, 0.0, 0.146, 0.0, 0.100], 25).unwrap();
        assert!((v_c - 15.9).abs() < 0.05, "{v_c}");

        assert!(matches!(thd_from_amplitudes(&[0.0, 1.0], 25), Err(Error::ZeroFundamental)));
    }

    #[test]
    fn dominant_frequency() {
        let (a, fd) = amplitude_frequency_check(&tone(3, 0.7, 0.0, 100), F, TAU_S).unwrap();
        assert_eq!(fd, 150.0);
        assert!(a < 1e-9);
        let mut s = tone(1, 3.49, 0.1, 100);
        for (x, h) in s.iter_mut().zip(tone(3, 1.38, 0.0, 100)) {
            *x += h;
        }
        let (a, fd) = amplitude_frequency_check(&s, F, TAU_S).unwrap();
        assert_eq!(fd, 50.0);
        assert!((a - 3.49).abs() < 1e-9);
    }

    #[test]
    fn final_period_window() {
        let s: Vec<f64> = (0..501).map(|k| k as f64).collect();
        let (start, w) = final_periods(&s, 100, 1).unwrap();
        assert_eq!(start, 401);
        assert_eq!(w.len(), 100);
        assert!(final_periods(&s, 100, 6).is_err());
    }

    #[test]
    fn report_csv_and_limits() {
        let mut r = ThdReport::default();
        r.analyse("v_c", &tone(1, 1.0, 0.0, 100), F, TAU_S, 3, Some(8.0)).unwrap();
        let mut distorted = tone(1, 1.0, 0.0, 100);
        for (x, h) in distorted.iter_mut().zip(tone(3, 0.5, 0.0, 100)) {
            *x += h;
        }
        r.analyse("i_l", &distorted, F, TAU_S, 3, Some(8.0)).unwrap();
        assert!(!r.all_pass());
        assert_relative_eq!(r.get("i_l").unwrap().thd_percent, 50.0, max_relative = 1e-9);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "signal,thd_percent,a1,a2,a3");
        assert!(lines.next().unwrap().starts_with("v_c,"));
        assert!(r.to_text().contains("FAIL"));
    }
}
