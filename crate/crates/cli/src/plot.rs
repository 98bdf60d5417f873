//! Plain-text data series for external plotting tools.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mvsde_core::{fit_loglog_slope, FitModel, MvsdeProblem, RunRecord};

use crate::error::{CliError, Result};
use crate::sweep::SweepRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RmseVsEps,
    GammaVsT,
    QueriesVsError,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RmseVsEps => "rmse_vs_eps",
            Self::GammaVsT => "gamma_vs_t",
            Self::QueriesVsError => "queries_vs_error",
        }
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        [Self::RmseVsEps, Self::GammaVsT, Self::QueriesVsError]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CliError::config(format!("unknown plot kind `{s}`")))
    }
}

/// A measured series and its companion: a fitted line or a reference curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub kind: PlotKind,
    pub data: Vec<(f64, f64)>,
    pub companion: Vec<(f64, f64)>,
}

impl PlotData {
    /// Writes `<kind>.dat` and `<kind>_fit.dat` (or `_exact.dat` for
    /// trajectories) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let suffix = if self.kind == PlotKind::GammaVsT { "exact" } else { "fit" };
        let files = [
            (dir.join(format!("{}.dat", self.kind.name())), &self.data),
            (dir.join(format!("{}_{suffix}.dat", self.kind.name())), &self.companion),
        ];
        for (path, series) in &files {
            std::fs::write(path, format_series(series)).map_err(CliError::io(path))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

pub fn format_series(series: &[(f64, f64)]) -> String {
    series.iter().fold(String::new(), |mut s, (x, y)| {
        let _ = writeln!(s, "{x:.12e} {y:.12e}");
        s
    })
}

/// Successful rows only, in their given order.
fn usable(rows: &[SweepRow]) -> Result<Vec<&SweepRow>> {
    let rows: Vec<_> = rows.iter().filter(|r| r.n_runs > 0 && r.rmse.is_finite()).collect();
    if rows.is_empty() {
        return Err(CliError::config("no sweep rows to plot"));
    }
    Ok(rows)
}

/// Endpoints of the fitted line over the range of `points`.
fn fitted_line(points: &[(f64, f64)], model: FitModel) -> Result<Vec<(f64, f64)>> {
    if points.len() < 2 || points.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Ok(Vec::new());
    }
    let fit = fit_loglog_slope(points, model)?;
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![(lo, fit.predict(lo)), (hi, fit.predict(hi))])
}

/// RMSE against accuracy with the least-squares line of slope one.
pub fn rmse_vs_eps(rows: &[SweepRow]) -> Result<PlotData> {
    let data: Vec<_> = usable(rows)?.iter().map(|r| (r.eps, r.rmse)).collect();
    Ok(PlotData {
        kind: PlotKind::RmseVsEps,
        companion: fitted_line(&data, FitModel::FixedSlope(1.0))?,
        data,
    })
}

/// Mean query count against RMSE with the fitted curve `a / x²`.
pub fn queries_vs_error(rows: &[SweepRow]) -> Result<PlotData> {
    let data: Vec<_> = usable(rows)?.iter().map(|r| (r.rmse, r.mean_queries)).collect();
    Ok(PlotData {
        kind: PlotKind::QueriesVsError,
        companion: fitted_line(&data, FitModel::INVERSE_SQUARE)?,
        data,
    })
}

/// Recorded `γ̂_k` against time with the analytic coupling.
pub fn gamma_vs_t(record: &RunRecord, problem: &MvsdeProblem, k: usize) -> Result<PlotData> {
    if record.gamma.is_empty() {
        return Err(CliError::config("run record has no trajectory"));
    }
    if k >= problem.basis_size() {
        return Err(CliError::config(format!("basis index {k} out of range")));
    }
    let data = record.gamma_series(k);
    let companion = match problem.analytic() {
        Some(a) => data.iter().map(|&(t, _)| (t, (a.gamma)(t)[k])).collect(),
        None => Vec::new(),
    };
    Ok(PlotData {
        kind: PlotKind::GammaVsT,
        data,
        companion,
    })
}

/// Dispatches on `kind`. Trajectories are taken from `record`, the other
/// kinds from `rows`.
pub fn emit_plot_data(
    kind: PlotKind,
    rows: &[SweepRow],
    record: Option<(&RunRecord, &MvsdeProblem)>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let data = match kind {
        PlotKind::RmseVsEps => rmse_vs_eps(rows)?,
        PlotKind::QueriesVsError => queries_vs_error(rows)?,
        PlotKind::GammaVsT => {
            let (rec, problem) = record.ok_or_else(|| CliError::config("gamma_vs_t needs a run record"))?;
            gamma_vs_t(rec, problem, problem.basis_size() - 1)?
        }
    };
    data.write(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64, rmse: f64, q: f64) -> SweepRow {
        SweepRow {
            eps,
            rmse,
            mean_queries: q,
            mean_wall_ms: 1.0,
            n_runs: 10,
            n_failed: 0,
        }
    }

    fn rows() -> Vec<SweepRow> {
        [0.5, 0.25, 0.125, 0.0625, 0.03125]
            .iter()
            .map(|&e| row(e, 0.1 * e, 3.0 / (0.1 * e * 0.1 * e)))
            .collect()
    }

    #[test]
    fn rmse_series_has_fit_endpoints() {
        let p = rmse_vs_eps(&rows()).unwrap();
        assert_eq!(p.data.len(), 5);
        assert_eq!(p.companion.len(), 2);
        assert!((p.companion[0].1 - 0.1 * 0.03125).abs() < 1e-14);
        assert!((p.companion[1].1 - 0.05).abs() < 1e-14);
    }

    #[test]
    fn queries_fit_recovers_coefficient() {
        let p = queries_vs_error(&rows()).unwrap();
        let (x, y) = p.companion[0];
        assert!((y * x * x - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_rows_are_rejected() {
        assert!(rmse_vs_eps(&[]).is_err());
        let mut failed = row(0.5, f64::NAN, f64::NAN);
        failed.n_runs = 0;
        assert!(queries_vs_error(&[failed]).is_err());
        assert!(emit_plot_data(PlotKind::GammaVsT, &rows(), None, Path::new(".")).is_err());
    }

    #[test]
    fn series_format_is_two_columns() {
        let text = format_series(&[(1.0, 2.0), (0.5, 1e-3)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.split_whitespace().count() == 2));
        let back: Vec<f64> = lines[1].split_whitespace().map(|v| v.parse().unwrap()).collect();
        assert_eq!(back, vec![0.5, 1e-3]);
    }

    #[test]
    fn kinds_parse() {
        for k in [PlotKind::RmseVsEps, PlotKind::GammaVsT, PlotKind::QueriesVsError] {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        assert!("histogram".parse::<PlotKind>().is_err());
    }
}
