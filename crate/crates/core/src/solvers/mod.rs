//! End-to-end procedures: the particle method, the emulated solver, the
//! parameter calculators and the perturbation-bound check.

mod emulated;
mod lemma;
mod params;
mod particle;

pub use emulated::{run_emulated, QmciCall, RunRecord};
pub use lemma::{check_perturbation_bound, perturbation_bound_rhs, LemmaCheck, LemmaInput};
pub use params::{
    experiment_grover_exponent, experiment_params, theoretical_params, ClipBounds, EmulatedRunParams,
    QmciMode, TheoreticalParams, DEFAULT_PARTICLES,
};
pub use particle::run_particle;

use crate::model::{MvsdeProblem, Stack};
use crate::scheme::DriftDiffusionField;

/// `a(t, x) = Σ_k γ_k(t) α_k(x)` and `b(t, x) = Σ_k γ_k(t) β_k(x)` for a
/// given coupling `γ(t)`.
pub(crate) struct CoupledField<'a, G> {
    problem: &'a MvsdeProblem,
    gamma: G,
}

impl<'a, G> CoupledField<'a, G>
where
    G: Fn(f64, &mut [f64]) + Sync,
{
    pub(crate) fn new(problem: &'a MvsdeProblem, gamma: G) -> Self {
        Self { problem, gamma }
    }

    #[inline]
    fn gamma_at(&self, t: f64) -> Stack {
        let mut g = Stack::from_elem(0.0, self.problem.basis_size());
        (self.gamma)(t, &mut g);
        g
    }
}

impl<G> DriftDiffusionField for CoupledField<'_, G>
where
    G: Fn(f64, &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn noise_dim(&self) -> usize {
        self.problem.noise_dim()
    }

    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let g = self.gamma_at(t);
        self.problem.drift_into(&g, x, out);
    }

    #[inline]
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let g = self.gamma_at(t);
        self.problem.diffusion_into(&g, x, out);
    }
}

/// Coupling that is affine on one segment: `γ_k(t) = anchor_k + slope_k (t - t0)`.
pub(crate) fn affine_gamma<'a>(anchor: &'a [f64], slope: &'a [f64], t0: f64) -> impl Fn(f64, &mut [f64]) + Sync + 'a {
    move |t, out: &mut [f64]| {
        let dt = t - t0;
        for ((o, a), s) in out.iter_mut().zip(anchor).zip(slope) {
            *o = a + s * dt;
        }
    }
}
