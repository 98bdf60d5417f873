use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::model::MvsdeProblem;
use crate::par::map_particle_chunks;
use crate::qmci::{clip_and_rescale, grover_query_count, qmciml, rescale, GroverSchedule, QmciOutcome};
use crate::rng::{substream, NoiseDraw, StreamKey};
use crate::schedule::{build_schedule, GammaHistory, StepSchedule};
use crate::scheme::{Scheme, Workspace};

use super::params::{EmulatedRunParams, QmciMode};
use super::{affine_gamma, CoupledField};

/// One emulated amplitude estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmciCall {
    /// Index `i + 1` of the estimated time point.
    pub step: usize,
    /// Basis index, or `None` for the terminal functional.
    pub k: Option<usize>,
    /// One-step circuits chained in the state preparation.
    pub depth: u64,
    pub lower: f64,
    pub upper: f64,
    /// Rescaled clipped average handed to the estimator.
    pub input: f64,
    pub outcome: QmciOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub params: EmulatedRunParams,
    pub model: String,
    pub scheme: String,
    pub seed: u64,
    pub n_t: usize,
    /// Rows `[t_i, γ̂_{1,i}, …, γ̂_{K,i}]` for `i = 0, …, n_t - 1`.
    pub gamma: Vec<Vec<f64>>,
    pub estimate: f64,
    pub queries: u64,
    pub qmci: Vec<QmciCall>,
    pub wall_ms: f64,
}

impl RunRecord {
    /// Query total recomputed from the recorded calls.
    pub fn recount_queries(&self) -> Result<u64> {
        let s = GroverSchedule::new(self.params.m_g, self.params.n_shot)?;
        self.qmci
            .iter()
            .map(|c| grover_query_count(&s, c.depth))
            .sum()
    }

    /// `(t_i, γ̂_{k,i})` pairs.
    pub fn gamma_series(&self, k: usize) -> Vec<(f64, f64)> {
        self.gamma.iter().map(|r| (r[0], r[k + 1])).collect()
    }
}

/// Classical emulation of the quantum solver: particles are advanced with
/// the extrapolated coupling, each coupled mean is estimated from clipped
/// particle averages passed through the amplitude-estimation emulator, and
/// the terminal functional is estimated the same way.
pub fn run_emulated(problem: &MvsdeProblem, params: &EmulatedRunParams) -> Result<RunRecord> {
    let start = Instant::now();
    params.validate()?;
    let schedule = build_schedule(problem.horizon(), params.h_i, params.h_ii)?;
    let grover = params.grover_schedule()?;
    let bounds = params.clip_bounds();
    let (d, m, k_len) = (problem.dim(), problem.noise_dim(), problem.basis_size());
    let n = params.n_particles;
    let scheme = params.scheme;
    let iterated = scheme.spec().noise_requirements.needs_iterated();

    let x0 = problem.x0();
    let mut history = GammaHistory::new((0..k_len).map(|k| problem.phi_k(k, x0)).collect())?;
    let mut states: Vec<f64> = x0.repeat(n);
    let mut calls = Vec::new();
    let mut estimate = f64::NAN;

    for i in 0..schedule.n_t {
        let (t, h) = (schedule.t(i), schedule.h(i));
        let terminal = i + 1 == schedule.n_t;
        let (upper, lower) = bounds.at(schedule.t(i + 1));
        if !(upper > lower) {
            return Err(MvsdeError::param(
                "clip_width_sigmas",
                format!("empty clip window at step {}", i + 1),
            ));
        }
        let (anchor, slope) = history.segment_coefficients(i, &schedule)?;
        let field = CoupledField::new(problem, affine_gamma(&anchor, &slope, t));
        // Advance and accumulate clipped sums in a single pass.
        let n_sums = if terminal { 1 } else { k_len };
        let parts = map_particle_chunks(&mut states, d, |first, chunk| {
            let mut ws = Workspace::new(d, m);
            let mut noise = NoiseDraw::zeros(m);
            let mut y = vec![0.0; d];
            let mut sums = vec![0.0; n_sums];
            for (p, x) in chunk.chunks_exact_mut(d).enumerate() {
                let mut rng =
                    StreamKey::new(params.seed, (first + p) as u64, i as u64, substream::NOISE).stream();
                noise.resample(&mut rng, h, iterated);
                scheme.advance(&field, t, h, x, &noise, &mut ws, &mut y);
                if y.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                x.copy_from_slice(&y);
                if terminal {
                    sums[0] += problem.phi_terminal(x).clamp(lower, upper);
                } else {
                    for (k, s) in sums.iter_mut().enumerate() {
                        *s += problem.phi_k(k, x).clamp(lower, upper);
                    }
                }
            }
            Some(sums)
        });
        let mut totals = vec![0.0; n_sums];
        for part in parts {
            let part = part.ok_or(MvsdeError::NonFiniteState {
                step: Some(i),
                t: t + h,
            })?;
            for (a, b) in totals.iter_mut().zip(part) {
                *a += b;
            }
        }

        let mut next = Vec::with_capacity(n_sums);
        for (q, total) in totals.into_iter().enumerate() {
            let mean = total / n as f64;
            let k = (!terminal).then_some(q);
            let value = match params.qmci_mode {
                QmciMode::Exact => mean,
                QmciMode::MaximumLikelihood => {
                    let input = unit_input(mean, upper, lower, i + 1)?;
                    let key = StreamKey::new(params.seed, q as u64 + terminal as u64 * k_len as u64, (i + 1) as u64, substream::QMCI);
                    let outcome = qmciml(input, &grover, key)?;
                    let value = rescale(outcome.estimate, upper, lower)?;
                    calls.push(QmciCall {
                        step: i + 1,
                        k,
                        depth: (i + 1) as u64,
                        lower,
                        upper,
                        input,
                        outcome,
                    });
                    value
                }
            };
            next.push(value);
        }
        if terminal {
            estimate = next[0];
        } else {
            history.push(next)?;
        }
    }

    let queries = calls
        .iter()
        .map(|c| grover_query_count(&grover, c.depth))
        .sum::<Result<u64>>()?;
    Ok(RunRecord {
        params: params.clone(),
        model: problem.name().to_owned(),
        scheme: scheme.name().to_owned(),
        seed: params.seed,
        n_t: schedule.n_t,
        gamma: trajectory(&history, &schedule),
        estimate,
        queries,
        qmci: calls,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Rescales a clipped average into the estimator's input range. Values can
/// leave `[0, 1]` only through rounding, which is absorbed; anything larger
/// means the window is inconsistent.
fn unit_input(mean: f64, upper: f64, lower: f64, step: usize) -> Result<f64> {
    let raw = (mean - lower) / (upper - lower);
    if !(-1e-12..=1.0 + 1e-12).contains(&raw) {
        return Err(MvsdeError::QmciInput {
            step,
            value: raw,
            lower,
            upper,
        });
    }
    clip_and_rescale(mean, upper, lower)
}

fn trajectory(history: &GammaHistory, schedule: &StepSchedule) -> Vec<Vec<f64>> {
    history
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| std::iter::once(schedule.t(i)).chain(r.iter().copied()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{linear_mean, shimizu_yamada};
    use crate::scheme::SchemeKind;
    use crate::solvers::experiment_params;

    fn small(eps: f64, n: usize, seed: u64) -> EmulatedRunParams {
        let mut p = experiment_params(eps, 2.0, 1.0).unwrap();
        p.n_particles = n;
        p.seed = seed;
        p
    }

    #[test]
    fn record_is_consistent() {
        let problem = shimizu_yamada(1.0).unwrap();
        let params = small(0.25, 2_000, 7);
        let rec = run_emulated(&problem, &params).unwrap();
        assert_eq!(rec.n_t, 15);
        assert_eq!(rec.gamma.len(), rec.n_t);
        // K calls per intermediate step plus one terminal call.
        assert_eq!(rec.qmci.len(), 2 * (rec.n_t - 1) + 1);
        assert_eq!(rec.queries, rec.recount_queries().unwrap());
        assert_eq!(rec.qmci.last().unwrap().depth, rec.n_t as u64);
        for c in &rec.qmci {
            assert!((0.0..=1.0).contains(&c.input));
        }
        for (row, c) in rec.gamma.iter().skip(1).zip(rec.qmci.chunks(2)) {
            for k in 0..2 {
                assert!(row[k + 1] >= c[k].lower && row[k + 1] <= c[k].upper);
            }
        }
        assert_eq!(rec.scheme, "sri1w1");
        assert_eq!(rec.model, "shimizu_yamada");
    }

    #[test]
    fn deterministic_apart_from_wall_time() {
        let problem = shimizu_yamada(1.0).unwrap();
        let params = small(0.5, 3_000, 1);
        let mut a = run_emulated(&problem, &params).unwrap();
        let mut b = run_emulated(&problem, &params).unwrap();
        a.wall_ms = 0.0;
        b.wall_ms = 0.0;
        assert_eq!(a, b);
    }

    #[test]
    fn exact_mode_reduces_to_particle_estimate() {
        let problem = shimizu_yamada(1.0).unwrap();
        let mut params = small(0.25, 20_000, 3);
        params.qmci_mode = QmciMode::Exact;
        let rec = run_emulated(&problem, &params).unwrap();
        assert_eq!(rec.queries, 0);
        assert!(rec.qmci.is_empty());
        assert!((rec.estimate - (-2.0f64).exp()).abs() < 0.03, "{}", rec.estimate);
    }

    #[test]
    fn linear_coupling_has_no_extrapolation_bias() {
        // With γ linear in t and exact averages, stage II reproduces the
        // coupling up to sampling noise of the particle averages.
        let problem = linear_mean(0.2, 0.5).unwrap();
        let mut params = small(0.25, 20_000, 5);
        params.qmci_mode = QmciMode::Exact;
        params.clip_center = 0.0;
        params.clip_center_decay = 0.0;
        params.clip_width_sigmas = 100.0;
        let rec = run_emulated(&problem, &params).unwrap();
        for row in &rec.gamma {
            assert!((row[1] - 1.0).abs() < 1e-12);
            assert!((row[2] - (0.2 + 0.5 * row[0])).abs() < 0.04, "{row:?}");
        }
        assert!((rec.estimate - 1.2).abs() < 0.03);
    }

    #[test]
    fn euler_is_selectable() {
        let problem = shimizu_yamada(1.0).unwrap();
        let mut params = small(0.5, 500, 2);
        params.scheme = SchemeKind::Euler;
        assert_eq!(run_emulated(&problem, &params).unwrap().scheme, "euler");
    }

    #[test]
    fn rejects_invalid_params() {
        let problem = shimizu_yamada(1.0).unwrap();
        let mut params = small(0.5, 100, 0);
        params.h_i = 0.3;
        assert!(matches!(run_emulated(&problem, &params), Err(MvsdeError::Schedule { .. })));
        let mut params = small(0.5, 0, 0);
        params.n_particles = 0;
        assert!(run_emulated(&problem, &params).is_err());
    }

    #[test]
    fn inconsistent_window_is_reported() {
        assert!(matches!(
            unit_input(3.0, 2.0, 1.0, 4),
            Err(MvsdeError::QmciInput { step: 4, .. })
        ));
        assert_eq!(unit_input(1.5, 2.0, 1.0, 1).unwrap(), 0.5);
    }
}
