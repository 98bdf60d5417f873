//! Shared fixtures for the benchmarks.

use mvsde_core::{experiment_params, shimizu_yamada, EmulatedRunParams, FnField, MvsdeProblem, NoiseDraw};

/// `dY = -Y dt + dW`.
pub fn ou_field() -> impl mvsde_core::DriftDiffusionField {
    FnField::new(1, 1, |_, y: &[f64], a: &mut [f64]| a[0] = -y[0], |_, _, b: &mut [f64]| b[0] = 1.0)
}

/// A fixed noise draw for single-step timings.
pub fn fixed_noise() -> NoiseDraw {
    NoiseDraw::from_parts(&[0.1], &[0.02], 0.05)
}

pub fn problem() -> MvsdeProblem {
    shimizu_yamada(1.0).expect("built-in model")
}

/// Experiment parameters at `eps` with `n` particles.
pub fn emulated_params(eps: f64, n: usize) -> EmulatedRunParams {
    let mut p = experiment_params(eps, 2.0, 1.0).expect("valid accuracy");
    p.n_particles = n;
    p.seed = 1;
    p
}
