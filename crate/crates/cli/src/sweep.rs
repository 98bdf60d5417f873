//! Repeated emulated runs over a list of accuracies.

use std::io::{Read, Write};

use mvsde_core::{builtin_problem, run_emulated, substream, MvsdeProblem, RunRecord, StreamKey};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_params, SweepConfig};
use crate::error::{CliError, Result};

/// Significant digits of every real written to CSV.
pub const CSV_DIGITS: usize = 12;

/// Aggregate over the repetitions at one accuracy. Reals are stored rounded
/// to [`CSV_DIGITS`] significant digits so that the CSV form is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    /// Root mean square deviation of the successful estimates from the
    /// analytic value.
    pub rmse: f64,
    pub mean_queries: f64,
    pub mean_wall_ms: f64,
    /// Successful runs.
    pub n_runs: usize,
    /// Failed runs; a nonzero value flags the row.
    pub n_failed: usize,
}

impl SweepRow {
    fn new(eps: f64, rmse: f64, mean_queries: f64, mean_wall_ms: f64, n_runs: usize, n_failed: usize) -> Self {
        Self {
            eps: round_sig(eps),
            rmse: round_sig(rmse),
            mean_queries: round_sig(mean_queries),
            mean_wall_ms: round_sig(mean_wall_ms),
            n_runs,
            n_failed,
        }
    }

    pub fn flagged(&self) -> bool {
        self.n_failed > 0
    }
}

/// One repetition at one accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub eps: f64,
    pub repetition: usize,
    pub seed: u64,
    pub estimate: Option<f64>,
    pub queries: Option<u64>,
    pub wall_ms: Option<f64>,
    /// `max_i |γ̂_{k,i} - γ_k(t_i)|` per basis index.
    pub gamma_max_dev: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// In decreasing order of accuracy parameter.
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunSummary>,
    pub exact: f64,
}

/// Seed of repetition `r` at sweep point `q`.
pub fn repetition_seed(seed_base: u64, q: usize, r: usize) -> u64 {
    StreamKey::new(seed_base, q as u64, r as u64, substream::SWEEP).derive_seed()
}

/// Runs every `(ε, repetition)` cell. Cells run one after another; each run
/// is parallel over particles.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let problem = builtin_problem(&cfg.model, cfg.x0)?;
    let exact = problem
        .analytic()
        .map(|a| (a.terminal_mean)(problem.horizon()))
        .ok_or_else(|| CliError::config(format!("model `{}` has no analytic terminal mean", cfg.model)))?;
    let mut eps_list = cfg.eps_list.clone();
    eps_list.sort_by(|a, b| b.total_cmp(a));

    let mut rows = Vec::with_capacity(eps_list.len());
    let mut runs = Vec::new();
    for (q, &eps) in eps_list.iter().enumerate() {
        // Parameter errors are the same for every repetition.
        resolve_params(&problem, cfg.x0, eps, 0, cfg.scheme, &cfg.overrides)?.validate()?;
        let cell: Vec<RunSummary> = (0..cfg.repetitions)
            .map(|r| {
                let seed = repetition_seed(cfg.seed_base, q, r);
                let outcome = resolve_params(&problem, cfg.x0, eps, seed, cfg.scheme, &cfg.overrides)
                    .and_then(|p| Ok(run_emulated(&problem, &p)?));
                summarize(&problem, eps, r, seed, outcome)
            })
            .collect();
        for s in cell.iter().filter(|s| s.failure.is_some()) {
            log::warn!("eps = {eps}, repetition {}: {}", s.repetition, s.failure.as_deref().unwrap_or(""));
        }
        rows.push(aggregate(eps, &cell, exact));
        runs.extend(cell);
    }
    Ok(SweepOutcome { rows, runs, exact })
}

fn summarize(problem: &MvsdeProblem, eps: f64, repetition: usize, seed: u64, outcome: Result<RunRecord>) -> RunSummary {
    match outcome {
        Ok(rec) => RunSummary {
            eps,
            repetition,
            seed,
            estimate: Some(rec.estimate),
            queries: Some(rec.queries),
            wall_ms: Some(rec.wall_ms),
            gamma_max_dev: gamma_max_deviation(problem, &rec),
            failure: None,
        },
        Err(e) => RunSummary {
            eps,
            repetition,
            seed,
            estimate: None,
            queries: None,
            wall_ms: None,
            gamma_max_dev: Vec::new(),
            failure: Some(e.to_string()),
        },
    }
}

/// Largest deviation of each recorded coupled mean from the analytic one.
pub fn gamma_max_deviation(problem: &MvsdeProblem, rec: &RunRecord) -> Vec<f64> {
    let Some(analytic) = problem.analytic() else {
        return Vec::new();
    };
    let mut dev = vec![0.0f64; problem.basis_size()];
    for row in &rec.gamma {
        let exact = (analytic.gamma)(row[0]);
        for (k, d) in dev.iter_mut().enumerate() {
            *d = d.max((row[k + 1] - exact[k]).abs());
        }
    }
    dev
}

fn aggregate(eps: f64, cell: &[RunSummary], exact: f64) -> SweepRow {
    let ok: Vec<&RunSummary> = cell.iter().filter(|s| s.failure.is_none()).collect();
    let n = ok.len();
    let mean = |f: &dyn Fn(&RunSummary) -> f64| ok.iter().map(|s| f(s)).sum::<f64>() / n as f64;
    let (rmse, queries, wall) = if n == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        (
            mean(&|s| (s.estimate.unwrap_or(f64::NAN) - exact).powi(2)).sqrt(),
            mean(&|s| s.queries.unwrap_or(0) as f64),
            mean(&|s| s.wall_ms.unwrap_or(0.0)),
        )
    };
    SweepRow::new(eps, rmse, queries, wall, n, cell.len() - n)
}

/// `x` rounded to [`CSV_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    format_real(x).parse().unwrap_or(x)
}

fn format_real(x: f64) -> String {
    format!("{:.*e}", CSV_DIGITS - 1, x)
}

const HEADER: [&str; 6] = ["eps", "rmse", "mean_queries", "mean_wall_ms", "n_runs", "n_failed"];

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            format_real(r.eps),
            format_real(r.rmse),
            format_real(r.mean_queries),
            format_real(r.mean_wall_ms),
            r.n_runs.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(HEADER) {
        return Err(CliError::config("unexpected sweep CSV header"));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_runs<W: Write>(runs: &[RunSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "repetition", "seed", "estimate", "queries", "wall_ms", "gamma_max_dev", "failure"])?;
    for s in runs {
        let opt = |v: Option<f64>| v.map(format_real).unwrap_or_default();
        w.write_record([
            format_real(s.eps),
            s.repetition.to_string(),
            s.seed.to_string(),
            opt(s.estimate),
            s.queries.map(|q| q.to_string()).unwrap_or_default(),
            opt(s.wall_ms),
            s.gamma_max_dev.iter().map(|d| format_real(*d)).collect::<Vec<_>>().join(";"),
            s.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seeds_are_distinct_and_not_sequential() {
        let seeds: Vec<u64> = (0..5).flat_map(|q| (0..10).map(move |r| repetition_seed(42, q, r))).collect();
        let mut sorted = seeds.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert!(seeds.windows(2).all(|w| w[1] != w[0].wrapping_add(1)));
        assert_eq!(repetition_seed(42, 1, 2), repetition_seed(42, 1, 2));
    }

    #[test]
    fn aggregate_skips_failures() {
        let ok = |e: f64| RunSummary {
            eps: 0.5,
            repetition: 0,
            seed: 0,
            estimate: Some(e),
            queries: Some(100),
            wall_ms: Some(2.0),
            gamma_max_dev: vec![],
            failure: None,
        };
        let bad = RunSummary {
            estimate: None,
            queries: None,
            wall_ms: None,
            failure: Some("boom".into()),
            ..ok(0.0)
        };
        let row = aggregate(0.5, &[ok(1.1), ok(0.9), bad], 1.0);
        assert!((row.rmse - 0.1).abs() < 1e-12);
        assert_eq!((row.mean_queries, row.n_runs, row.n_failed), (100.0, 2, 1));
        assert!(row.flagged());
    }

    #[test]
    fn rejects_bad_header() {
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn real() -> impl Strategy<Value = f64> {
        prop_oneof![1e-300f64..1e300, -1e6f64..1e6, Just(0.0), Just(f64::NAN)]
    }

    proptest! {
        #[test]
        fn csv_round_trip(raw in prop::collection::vec((real(), real(), real(), real(), 0usize..100, 0usize..100), 1..8)) {
            let rows: Vec<SweepRow> = raw
                .into_iter()
                .map(|(a, b, c, d, n, f)| SweepRow::new(a, b, c, d, n, f))
                .collect();
            let mut buf = Vec::new();
            write_rows(&rows, &mut buf).unwrap();
            let back = read_rows(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), rows.len());
            for (a, b) in rows.iter().zip(&back) {
                for (x, y) in [(a.eps, b.eps), (a.rmse, b.rmse), (a.mean_queries, b.mean_queries), (a.mean_wall_ms, b.mean_wall_ms)] {
                    prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
                }
                prop_assert_eq!((a.n_runs, a.n_failed), (b.n_runs, b.n_failed));
            }
            let mut again = Vec::new();
            write_rows(&back, &mut again).unwrap();
            prop_assert_eq!(buf, again);
        }

        #[test]
        fn rounding_is_idempotent(x in real()) {
            let once = round_sig(x);
            prop_assert!(round_sig(once).to_bits() == once.to_bits() || once.is_nan());
            if x.is_finite() && x != 0.0 {
                prop_assert!(((once - x) / x).abs() <= 5e-12);
            }
        }
    }
}
