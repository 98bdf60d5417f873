//! Solvers for expectation-coupled McKean-Vlasov SDEs
//!
//! ```text
//! dX_t = a(t, X_t) dt + b(t, X_t) dW_t,
//! a = Σ_k γ_k(t) α_k(X_t),   b = Σ_k γ_k(t) β_k(X_t),   γ_k(t) = E[φ_k(X_t)]
//! ```
//!
//! Two estimators of `E[φ(X_T)]` are provided: the interacting particle
//! method ([`run_particle`]) and a classical emulation of an
//! amplitude-estimation based solver ([`run_emulated`]) that advances
//! particles with a weak-order-2 stochastic Runge-Kutta scheme, extrapolates
//! the coupled means between estimation times, and perturbs every estimate
//! with the output distribution of maximum-likelihood amplitude estimation.
//!
//! All randomness comes from counter-based streams addressed by
//! [`StreamKey`], so results do not depend on the number of worker threads.

pub mod error;
pub mod fit;
pub mod model;
mod par;
pub mod qmci;
pub mod rng;
pub mod schedule;
pub mod scheme;
pub mod solvers;
pub mod weak_order;

pub use error::{MvsdeError, Result};
pub use fit::{fit_loglog_slope, FitModel, LogLogFit};
pub use model::{
    builtin_problem, eval_basis, eval_diffusion, eval_drift, linear_mean, shimizu_yamada,
    shimizu_yamada_exact_mean, AnalyticSolution, GammaVector, MvsdeProblem, ProblemBuilder, BUILTIN_MODELS,
};
pub use par::CHUNK;
pub use qmci::{
    clip_and_rescale, grover_query_count, mle_argmax, mle_argmax_weighted, qmciml, rescale, GroverSchedule,
    QmciOutcome, ShotCounts,
};
pub use rng::{gaussian, sample_noise, substream, NoiseDraw, PhiloxStream, StreamKey};
pub use schedule::{build_schedule, repair_steps, GammaHistory, StepSchedule};
pub use scheme::{
    euler_step, sri1w1_step, DriftDiffusionField, Euler, FnField, NoiseRequirement, Scheme, SchemeKind,
    SchemeSpec, Sri1w1, Workspace,
};
pub use solvers::{
    check_perturbation_bound, experiment_grover_exponent, experiment_params, perturbation_bound_rhs,
    run_emulated, run_particle, theoretical_params, ClipBounds, EmulatedRunParams, LemmaCheck, LemmaInput,
    QmciCall, QmciMode, RunRecord, TheoreticalParams, DEFAULT_PARTICLES,
};
pub use weak_order::{
    estimate_weak_order, VarianceReduction, WeakOrderConfig, WeakOrderPoint, WeakOrderReport,
};
