use std::path::Path;
use std::process::ExitCode;

use lcmpc_core::analysis::ThdReport;

use crate::error::CliError;

pub struct ThdArgs<'a> {
    pub csv: &'a Path,
    pub columns: &'a [String],
    pub f: f64,
    pub tau: Option<f64>,
    pub max_order: usize,
    pub vc_limit: f64,
}

/// Reads the named numeric columns of a CSV file.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| CliError::Usage(format!("{} has no `{n}` column", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (c, &i) in idx.iter().enumerate() {
            let v = rec[i].trim().parse::<f64>().map_err(|e| {
                CliError::Usage(format!("{}: row {}, column `{}`: {e}", path.display(), row + 2, names[c]))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

/// Analyses the last full fundamental period of each column. When the row
/// count is one more than a whole number of periods (simulation logs end
/// with the post-step state), that trailing row is left out.
pub fn run(args: &ThdArgs<'_>) -> Result<ExitCode, CliError> {
    let names: Vec<&str> = args.columns.iter().map(String::as_str).collect();
    let tau = match args.tau {
        Some(t) => t,
        None => {
            let t = read_columns(args.csv, &["t"])?.remove(0);
            if t.len() < 2 {
                return Err(CliError::Usage("need at least two rows to infer the sampling time".into()));
            }
            (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
        }
    };
    if !(tau > 0.0 && args.f > 0.0) {
        return Err(CliError::Usage(format!("sampling time {tau} and frequency {} must be > 0", args.f)));
    }
    let spp_f = 1.0 / (args.f * tau);
    let spp = spp_f.round() as usize;
    if spp == 0 || (spp_f - spp as f64).abs() > 1e-6 * spp_f {
        return Err(CliError::Usage(format!(
            "one period at {} Hz spans {spp_f} samples of {tau} s; not an integer",
            args.f
        )));
    }
    let cols = read_columns(args.csv, &names)?;
    let rows = cols.first().map_or(0, Vec::len);
    if rows < spp {
        return Err(CliError::Usage(format!("{rows} rows hold less than one period ({spp} samples)")));
    }
    let end = if rows > spp && (rows - 1) % spp == 0 { rows - 1 } else { rows };
    let mut report = ThdReport::default();
    for (name, col) in names.iter().zip(&cols) {
        let limit = (*name == "v_c").then_some(args.vc_limit);
        report.analyse(name, &col[end - spp..end], args.f, tau, args.max_order, limit)?;
    }
    print!("{}", report.to_text());
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
