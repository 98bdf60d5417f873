use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::model::MvsdeProblem;
use crate::par::map_chunks;
use crate::rng::{substream, NoiseDraw, StreamKey};
use crate::scheme::{Scheme, Sri1w1, Workspace};

use super::CoupledField;

/// Points per unit time of the grid on which the perturbation's sup-norm
/// is verified.
const SUP_GRID_DENSITY: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaInput {
    pub delta: f64,
    /// Lipschitz constant of the functional.
    pub lipschitz: f64,
    pub t: f64,
    pub n_paths: usize,
    pub h: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub std_error: f64,
    /// Largest observed `|γ̃_k - γ_k|` on the verification grid.
    pub sup_error: f64,
    pub holds: bool,
}

/// `2 √((t+m) d) K L U δ exp(2 (t+m) t d² K² U⁴)`.
pub fn perturbation_bound_rhs(t: f64, m: usize, d: usize, k: usize, lipschitz: f64, u: f64, delta: f64) -> f64 {
    let (m, d, k) = (m as f64, d as f64, k as f64);
    2.0 * ((t + m) * d).sqrt()
        * k
        * lipschitz
        * u
        * delta
        * (2.0 * (t + m) * t * d * d * k * k * u.powi(4)).exp()
}

/// Compares `|E f(X̃_t) - E f(X_t)|`, where `X̃` is driven by a perturbed
/// coupling with `sup |γ̃_k - γ_k| ≤ δ`, against the stability bound. Both
/// systems share their Brownian paths.
pub fn check_perturbation_bound<P, F>(
    problem: &MvsdeProblem,
    input: &LemmaInput,
    perturbed: P,
    f: F,
) -> Result<LemmaCheck>
where
    P: Fn(usize, f64) -> f64 + Sync,
    F: Fn(&[f64]) -> f64 + Sync,
{
    let analytic = problem
        .analytic()
        .ok_or_else(|| MvsdeError::InvalidProblem("an analytic coupling is required".into()))?;
    if !(input.delta >= 0.0) || !input.delta.is_finite() {
        return Err(MvsdeError::param("delta", "must be finite and non-negative"));
    }
    if !(input.lipschitz >= 0.0) || !input.lipschitz.is_finite() {
        return Err(MvsdeError::param("L", "must be finite and non-negative"));
    }
    if !(input.t > 0.0 && input.t <= problem.horizon()) {
        return Err(MvsdeError::OutOfDomain {
            t: input.t,
            end: problem.horizon(),
        });
    }
    if input.n_paths < 2 {
        return Err(MvsdeError::param("n_paths", "at least two paths are required"));
    }
    let ratio = input.t / input.h;
    let n_steps = ratio.round();
    if !(input.h > 0.0) || (ratio - n_steps).abs() > 1e-9 * ratio.max(1.0) || n_steps < 1.0 {
        return Err(MvsdeError::param("h", "t/h must be a positive integer"));
    }
    let n_steps = n_steps as usize;
    let (d, m, k_len) = (problem.dim(), problem.noise_dim(), problem.basis_size());
    let h = input.h;

    let exact = |t: f64| (analytic.gamma)(t);
    let tilde = |t: f64| (0..k_len).map(|k| perturbed(k, t)).collect::<Vec<_>>();

    let n_grid = (input.t * SUP_GRID_DENSITY).ceil() as usize;
    let mut sup_error: f64 = 0.0;
    let probe = (0..=n_grid)
        .map(|q| input.t * q as f64 / n_grid as f64)
        .chain((0..n_steps).flat_map(|i| stage_times(i as f64 * h, h)));
    for s in probe {
        let (g, gt) = (exact(s), tilde(s));
        if g.len() != k_len {
            return Err(MvsdeError::InvalidProblem("analytic coupling has the wrong length".into()));
        }
        for (a, b) in g.iter().zip(&gt) {
            sup_error = sup_error.max((a - b).abs());
        }
    }
    if !(sup_error <= input.delta * (1.0 + 1e-12)) {
        return Err(MvsdeError::param(
            "perturbation",
            format!("sup-norm error {sup_error} exceeds delta = {}", input.delta),
        ));
    }

    // Couplings tabulated at every time the scheme evaluates.
    let table = |g: &dyn Fn(f64) -> Vec<f64>| -> Vec<[Vec<f64>; 4]> {
        (0..n_steps)
            .map(|i| stage_times(i as f64 * h, h).map(g))
            .collect()
    };
    let exact_tab = table(&exact);
    let tilde_tab = table(&tilde);
    let lookup = |tab: &[[Vec<f64>; 4]], t: f64, out: &mut [f64], fallback: &dyn Fn(f64) -> Vec<f64>| {
        let i = ((t / h).floor() as usize).min(n_steps - 1);
        for cand in [i.saturating_sub(1), i] {
            let times = stage_times(cand as f64 * h, h);
            if let Some(pos) = times.iter().position(|&s| s == t) {
                out.copy_from_slice(&tab[cand][pos]);
                return;
            }
        }
        out.copy_from_slice(&fallback(t));
    };
    let field = CoupledField::new(problem, |t, out: &mut [f64]| lookup(&exact_tab, t, out, &exact));
    let field_t = CoupledField::new(problem, |t, out: &mut [f64]| lookup(&tilde_tab, t, out, &tilde));

    let parts = map_chunks(input.n_paths, |range| {
        let mut ws = Workspace::new(d, m);
        let mut noise = NoiseDraw::zeros(m);
        let (mut x, mut xt, mut y) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
        let (mut s1, mut s2) = (0.0, 0.0);
        for p in range {
            x.copy_from_slice(problem.x0());
            xt.copy_from_slice(problem.x0());
            for i in 0..n_steps {
                let mut rng = StreamKey::new(input.seed, p as u64, i as u64, substream::NOISE).stream();
                noise.resample(&mut rng, h, true);
                let t = i as f64 * h;
                Sri1w1.advance(&field, t, h, &x, &noise, &mut ws, &mut y);
                std::mem::swap(&mut x, &mut y);
                Sri1w1.advance(&field_t, t, h, &xt, &noise, &mut ws, &mut y);
                std::mem::swap(&mut xt, &mut y);
            }
            let diff = f(&xt) - f(&x);
            s1 += diff;
            s2 += diff * diff;
        }
        (s1, s2)
    });
    let (s1, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = input.n_paths as f64;
    let mean = s1 / n;
    if !mean.is_finite() {
        return Err(MvsdeError::NonFiniteState { step: None, t: input.t });
    }
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let std_error = (var / n).sqrt();
    let lhs = mean.abs();
    let rhs = perturbation_bound_rhs(input.t, m, d, k_len, input.lipschitz, problem.bound_u(), input.delta);
    Ok(LemmaCheck {
        lhs,
        rhs,
        std_error,
        sup_error,
        holds: lhs <= rhs + 3.0 * std_error,
    })
}

/// Times at which one SRI1W1 step from `t` evaluates its coefficients,
/// computed with the same expressions as the scheme.
fn stage_times(t: f64, h: f64) -> [f64; 4] {
    [t, t + 0.25 * h, t + 0.75 * h, t + h]
}
