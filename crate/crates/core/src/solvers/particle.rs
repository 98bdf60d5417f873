use crate::error::{MvsdeError, Result};
use crate::model::MvsdeProblem;
use crate::par::map_particle_chunks;
use crate::rng::{substream, NoiseDraw, StreamKey};
use crate::scheme::{Euler, Scheme, Workspace};

use super::{affine_gamma, CoupledField};

/// Interacting particle system with Euler steps: at every step the coupled
/// means are replaced by averages over the `n_particles` current states.
/// Returns the average of the terminal functional.
pub fn run_particle(problem: &MvsdeProblem, n_particles: usize, h: f64, seed: u64) -> Result<f64> {
    if n_particles == 0 {
        return Err(MvsdeError::param("N", "at least one particle is required"));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(MvsdeError::param("h", "step size must be positive"));
    }
    let horizon = problem.horizon();
    let ratio = horizon / h;
    let n_steps = ratio.round();
    if (ratio - n_steps).abs() > 1e-9 * ratio.max(1.0) || n_steps < 1.0 {
        return Err(MvsdeError::param("h", format!("T/h = {ratio} is not an integer")));
    }
    let n_steps = n_steps as usize;
    let (d, m, k) = (problem.dim(), problem.noise_dim(), problem.basis_size());

    let mut states: Vec<f64> = problem.x0().repeat(n_particles);
    let zero_slope = vec![0.0; k];
    for i in 0..n_steps {
        let gamma = mean_basis(problem, &mut states)?;
        let t = i as f64 * h;
        let field = CoupledField::new(problem, affine_gamma(&gamma, &zero_slope, t));
        let ok = map_particle_chunks(&mut states, d, |first, chunk| {
            let mut ws = Workspace::new(d, m);
            let mut noise = NoiseDraw::zeros(m);
            let mut y = vec![0.0; d];
            for (p, x) in chunk.chunks_exact_mut(d).enumerate() {
                let mut rng = StreamKey::new(seed, (first + p) as u64, i as u64, substream::NOISE).stream();
                noise.resample(&mut rng, h, false);
                Euler.advance(&field, t, h, x, &noise, &mut ws, &mut y);
                x.copy_from_slice(&y);
            }
            chunk.iter().all(|v| v.is_finite())
        });
        if !ok.into_iter().all(|b| b) {
            return Err(MvsdeError::NonFiniteState {
                step: Some(i),
                t: t + h,
            });
        }
    }
    let parts = map_particle_chunks(&mut states, d, |_, chunk| {
        chunk.chunks_exact(d).map(|x| problem.phi_terminal(x)).sum::<f64>()
    });
    Ok(parts.into_iter().sum::<f64>() / n_particles as f64)
}

fn mean_basis(problem: &MvsdeProblem, states: &mut [f64]) -> Result<Vec<f64>> {
    let (d, k) = (problem.dim(), problem.basis_size());
    let n = (states.len() / d) as f64;
    let parts = map_particle_chunks(states, d, |_, chunk| {
        let mut s = vec![0.0; k];
        for x in chunk.chunks_exact(d) {
            for (q, sq) in s.iter_mut().enumerate() {
                *sq += problem.phi_k(q, x);
            }
        }
        s
    });
    let mut total = vec![0.0; k];
    for s in parts {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    total.iter_mut().for_each(|v| *v /= n);
    if total.iter().any(|v| !v.is_finite()) {
        return Err(MvsdeError::NonFiniteInput { what: "particle average" });
    }
    Ok(total)
}
