//! Subcommand implementations. Each writes its artifacts into the
//! configured output directory and returns what it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mvsde_core::{
    check_perturbation_bound, estimate_weak_order, fit_loglog_slope, run_emulated, run_particle,
    theoretical_params, FitModel, FnField, LemmaCheck, LemmaInput, LogLogFit, RunRecord, TheoreticalParams,
    WeakOrderConfig, WeakOrderReport,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Method};
use crate::error::{CliError, Result};
use crate::plot::{gamma_vs_t, queries_vs_error, rmse_vs_eps};
use crate::sweep::{run_sweep, write_rows, write_runs, SweepOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub model: String,
    pub seed: u64,
    pub n_particles: usize,
    pub h: f64,
    pub estimate: f64,
    pub exact: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Emulated(Box<RunRecord>),
    Particle(ParticleRecord),
}

impl RunOutput {
    pub fn estimate(&self) -> f64 {
        match self {
            Self::Emulated(r) => r.estimate,
            Self::Particle(r) => r.estimate,
        }
    }
}

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

/// One run persisted as `run.json`; emulated runs also get trajectory data.
pub fn cmd_run(cfg: &Config) -> Result<(RunOutput, PathBuf)> {
    let problem = cfg.problem()?;
    create_out_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join("run.json");
    let output = match cfg.run.method {
        Method::Emulated => {
            let params = cfg.emulated_params(&problem, cfg.run.eps, cfg.seed)?;
            let rec = run_emulated(&problem, &params)?;
            write_json(&path, &rec)?;
            gamma_vs_t(&rec, &problem, problem.basis_size() - 1)?.write(&cfg.out_dir)?;
            RunOutput::Emulated(Box::new(rec))
        }
        Method::Particle => {
            let start = Instant::now();
            let n = cfg.particle_count();
            let estimate = run_particle(&problem, n, cfg.run.particle_h, cfg.seed)?;
            let rec = ParticleRecord {
                model: problem.name().to_owned(),
                seed: cfg.seed,
                n_particles: n,
                h: cfg.run.particle_h,
                estimate,
                exact: problem.analytic().map(|a| (a.terminal_mean)(problem.horizon())),
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            write_json(&path, &rec)?;
            RunOutput::Particle(rec)
        }
    };
    Ok((output, path))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub outcome: SweepOutcome,
    /// Power law of RMSE against accuracy.
    pub rmse_fit: Option<LogLogFit>,
    /// Power law of mean queries against RMSE.
    pub queries_fit: Option<LogLogFit>,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    exact: f64,
    rmse_vs_eps: &'a Option<LogLogFit>,
    queries_vs_error: &'a Option<LogLogFit>,
}

/// Writes `sweep.csv`, `runs.csv`, `fits.json` and the plot series.
pub fn cmd_sweep(cfg: &Config) -> Result<SweepReport> {
    let sweep = cfg.sweep_config();
    sweep.validate()?;
    create_out_dir(&sweep.out_dir)?;
    let outcome = run_sweep(&sweep)?;
    let dir = &sweep.out_dir;

    let path = dir.join("sweep.csv");
    write_rows(&outcome.rows, std::fs::File::create(&path).map_err(CliError::io(&path))?)?;
    let path = dir.join("runs.csv");
    write_runs(&outcome.runs, std::fs::File::create(&path).map_err(CliError::io(&path))?)?;

    let fit = |points: Vec<(f64, f64)>| {
        let points: Vec<_> = points.into_iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
        fit_loglog_slope(&points, FitModel::Power).ok()
    };
    let usable = outcome.rows.iter().filter(|r| r.n_runs > 0);
    let rmse_fit = fit(usable.clone().map(|r| (r.eps, r.rmse)).collect());
    let queries_fit = fit(usable.map(|r| (r.rmse, r.mean_queries)).collect());
    write_json(
        &dir.join("fits.json"),
        &FitSummary {
            exact: outcome.exact,
            rmse_vs_eps: &rmse_fit,
            queries_vs_error: &queries_fit,
        },
    )?;
    if outcome.rows.iter().any(|r| r.n_runs > 0) {
        rmse_vs_eps(&outcome.rows)?.write(dir)?;
        queries_vs_error(&outcome.rows)?.write(dir)?;
    }
    Ok(SweepReport {
        outcome,
        rmse_fit,
        queries_fit,
    })
}

/// `E[Y_T^moment]` for `dY = -Y dt + dW`, `Y_0 = y0`.
pub fn ou_moment(y0: f64, horizon: f64, moment: u32) -> Result<f64> {
    let decay = (-horizon).exp();
    match moment {
        1 => Ok(y0 * decay),
        2 => Ok(y0 * y0 * decay * decay + (1.0 - decay * decay) / 2.0),
        m => Err(CliError::config(format!("weak_order.moment must be 1 or 2, got {m}"))),
    }
}

/// Empirical weak order of the configured scheme on the Ornstein-Uhlenbeck
/// process, written to `weak_order.json`.
pub fn cmd_weak_order(cfg: &Config) -> Result<WeakOrderReport> {
    let w = &cfg.weak_order;
    let exact = ou_moment(w.y0, w.horizon, w.moment)?;
    let field = FnField::new(1, 1, |_, y: &[f64], a: &mut [f64]| a[0] = -y[0], |_, _, b: &mut [f64]| b[0] = 1.0);
    let wcfg = WeakOrderConfig {
        horizon: w.horizon,
        x0: vec![w.y0],
        h_list: w.h_list.clone(),
        n_paths: w.n_paths,
        seed: cfg.seed,
        variance_reduction: w.variance_reduction(cfg.scheme),
    };
    let moment = w.moment as i32;
    let report = estimate_weak_order(&cfg.scheme, &field, |y| y[0].powi(moment), exact, &wcfg)?;
    create_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("weak_order.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCase {
    pub delta: f64,
    pub t: f64,
    pub check: LemmaCheck,
}

/// Perturbs the last coupled mean by `δ cos 3t` and checks the stability
/// bound with `f(x) = x_1` for every configured `(δ, t)`; results go to
/// `lemma.json`.
pub fn cmd_check_lemma(cfg: &Config) -> Result<Vec<LemmaCase>> {
    let problem = cfg.problem()?;
    let analytic = problem
        .analytic()
        .ok_or_else(|| CliError::config(format!("model `{}` has no analytic coupling", cfg.model)))?;
    let l = &cfg.lemma;
    let last = problem.basis_size() - 1;
    let mut cases = Vec::new();
    for &delta in &l.delta {
        for &t in &l.t {
            let input = LemmaInput {
                delta,
                lipschitz: l.lipschitz,
                t,
                n_paths: l.n_paths,
                h: l.h,
                seed: cfg.seed,
            };
            let perturbed = |k: usize, s: f64| {
                let g = (analytic.gamma)(s)[k];
                if k == last { g + delta * (3.0 * s).cos() } else { g }
            };
            let check = check_perturbation_bound(&problem, &input, perturbed, |x| x[0])?;
            cases.push(LemmaCase { delta, t, check });
        }
    }
    create_out_dir(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("lemma.json"), &cases)?;
    Ok(cases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub model: String,
    pub params: TheoreticalParams,
    pub short_horizon_lhs: f64,
    pub short_horizon_holds: bool,
}

/// Step sizes and budgets guaranteeing the configured accuracy for the
/// configured model.
pub fn cmd_params(cfg: &Config) -> Result<ParamsReport> {
    let problem = cfg.problem()?;
    let p = &cfg.params;
    let params = theoretical_params(
        p.epsilon,
        p.eta,
        p.u,
        p.kappa_prime,
        problem.horizon(),
        p.p,
        problem.basis_size(),
    )?;
    let (lhs, holds) = TheoreticalParams::short_horizon_condition(
        problem.horizon(),
        problem.noise_dim(),
        problem.dim(),
        problem.basis_size(),
        p.u,
    );
    Ok(ParamsReport {
        model: problem.name().to_owned(),
        params,
        short_horizon_lhs: lhs,
        short_horizon_holds: holds,
    })
}
