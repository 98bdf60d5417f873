//! Expectation-coupled McKean-Vlasov SDEs.
//!
//! The coefficients depend on the law of the solution only through the
//! moments `γ_k(t) = E[φ_k(X_t)]`:
//!
//! ```text
//! dX_t = Σ_k γ_k(t) α_k(X_t) dt + Σ_k γ_k(t) β_k(X_t) dW_t
//! ```
//!
//! A [`MvsdeProblem`] stores the basis functions `α_k`, `β_k`, `φ_k` as
//! black-box callables together with the terminal functional, the initial
//! state, the horizon and the common bound `U`.

use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::error::{MvsdeError, Result};

/// `α_k : R^d → R^d` (or `β_k : R^d → R^{d×m}`, row-major), written into `out`.
pub type VectorFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `φ_k : R^d → R`.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Time-indexed analytic quantity.
pub type TimeFn<T> = Arc<dyn Fn(f64) -> T + Send + Sync>;

pub(crate) type Stack = SmallVec<[f64; 16]>;

/// The moment vector `(γ_1, …, γ_K)` at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaVector(Vec<f64>);

impl GammaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MvsdeError::NonFiniteInput { what: "gamma" });
        }
        Ok(Self(values))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// One basis term `(α_k, β_k, φ_k)`.
#[derive(Clone)]
pub struct BasisTerm {
    pub alpha: VectorFn,
    pub beta: VectorFn,
    pub phi: ScalarFn,
}

/// Closed-form moments, available for test models only.
#[derive(Clone)]
pub struct AnalyticSolution {
    /// `t ↦ (γ_1(t), …, γ_K(t))`
    pub gamma: TimeFn<Vec<f64>>,
    /// `t ↦ E[φ(X_t)]`
    pub terminal_mean: TimeFn<f64>,
}

#[derive(Clone)]
pub struct MvsdeProblem {
    name: String,
    dim: usize,
    noise_dim: usize,
    terms: Vec<BasisTerm>,
    terminal: ScalarFn,
    x0: Vec<f64>,
    horizon: f64,
    bound_u: f64,
    analytic: Option<AnalyticSolution>,
}

impl fmt::Debug for MvsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MvsdeProblem")
            .field("name", &self.name)
            .field("d", &self.dim)
            .field("m", &self.noise_dim)
            .field("K", &self.terms.len())
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("bound_u", &self.bound_u)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl MvsdeProblem {
    pub fn builder(dim: usize, noise_dim: usize) -> ProblemBuilder {
        ProblemBuilder {
            name: "custom".to_owned(),
            dim,
            noise_dim,
            terms: Vec::new(),
            terminal: None,
            x0: None,
            horizon: None,
            bound_u: None,
            analytic: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Brownian dimension `m`.
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Basis size `K`.
    pub fn basis_size(&self) -> usize {
        self.terms.len()
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn bound_u(&self) -> f64 {
        self.bound_u
    }

    pub fn analytic(&self) -> Option<&AnalyticSolution> {
        self.analytic.as_ref()
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    /// Same problem with a different horizon.
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(MvsdeError::param("horizon", "must be positive and finite"));
        }
        self.horizon = horizon;
        Ok(self)
    }

    /// `Σ_k γ_k α_k(x)` into `out`; no validation.
    #[inline]
    pub fn drift_into(&self, gamma: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp: Stack = SmallVec::from_elem(0.0, self.dim);
        for (term, &g) in self.terms.iter().zip(gamma) {
            (term.alpha)(x, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += g * v;
            }
        }
    }

    /// `Σ_k γ_k β_k(x)` (row-major `d×m`) into `out`; no validation.
    #[inline]
    pub fn diffusion_into(&self, gamma: &[f64], x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut tmp: Stack = SmallVec::from_elem(0.0, self.dim * self.noise_dim);
        for (term, &g) in self.terms.iter().zip(gamma) {
            (term.beta)(x, &mut tmp);
            for (o, v) in out.iter_mut().zip(&tmp) {
                *o += g * v;
            }
        }
    }

    #[inline]
    pub fn phi_k(&self, k: usize, x: &[f64]) -> f64 {
        (self.terms[k].phi)(x)
    }

    #[inline]
    pub fn phi_terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    fn check_args(&self, gamma: &GammaVector, x: &[f64]) -> Result<()> {
        if gamma.len() != self.basis_size() {
            return Err(MvsdeError::param(
                "gamma",
                format!("expected {} entries, got {}", self.basis_size(), gamma.len()),
            ));
        }
        check_state(self.dim, x)
    }
}

fn check_state(dim: usize, x: &[f64]) -> Result<()> {
    if x.len() != dim {
        return Err(MvsdeError::param(
            "x",
            format!("expected dimension {dim}, got {}", x.len()),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MvsdeError::NonFiniteInput { what: "state" });
    }
    Ok(())
}

/// Drift `a = Σ_k γ_k α_k(x)`.
pub fn eval_drift(problem: &MvsdeProblem, gamma: &GammaVector, x: &[f64]) -> Result<Vec<f64>> {
    problem.check_args(gamma, x)?;
    let mut out = vec![0.0; problem.dim];
    problem.drift_into(gamma.as_slice(), x, &mut out);
    Ok(out)
}

/// Diffusion `b = Σ_k γ_k β_k(x)` as a row-major `d×m` matrix.
pub fn eval_diffusion(
    problem: &MvsdeProblem,
    gamma: &GammaVector,
    x: &[f64],
) -> Result<Vec<f64>> {
    problem.check_args(gamma, x)?;
    let mut out = vec![0.0; problem.dim * problem.noise_dim];
    problem.diffusion_into(gamma.as_slice(), x, &mut out);
    Ok(out)
}

/// `(φ_1(x), …, φ_K(x))`.
pub fn eval_basis(problem: &MvsdeProblem, x: &[f64]) -> Result<GammaVector> {
    check_state(problem.dim, x)?;
    GammaVector::new(problem.terms.iter().map(|t| (t.phi)(x)).collect())
}

pub struct ProblemBuilder {
    name: String,
    dim: usize,
    noise_dim: usize,
    terms: Vec<BasisTerm>,
    terminal: Option<ScalarFn>,
    x0: Option<Vec<f64>>,
    horizon: Option<f64>,
    bound_u: Option<f64>,
    analytic: Option<AnalyticSolution>,
}

impl ProblemBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn term<A, B, P>(mut self, alpha: A, beta: B, phi: P) -> Self
    where
        A: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        B: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.terms.push(BasisTerm {
            alpha: Arc::new(alpha),
            beta: Arc::new(beta),
            phi: Arc::new(phi),
        });
        self
    }

    pub fn terminal<P>(mut self, phi: P) -> Self
    where
        P: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.terminal = Some(Arc::new(phi));
        self
    }

    pub fn x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn bound(mut self, bound_u: f64) -> Self {
        self.bound_u = Some(bound_u);
        self
    }

    pub fn analytic(mut self, analytic: AnalyticSolution) -> Self {
        self.analytic = Some(analytic);
        self
    }

    /// Validates dimensions and spot-checks `|α_k|, |β_k| ≤ U` and finiteness
    /// of all basis functions around `x0`.
    pub fn build(self) -> Result<MvsdeProblem> {
        let invalid = |msg: &str| Err(MvsdeError::InvalidProblem(msg.to_owned()));
        if self.dim == 0 || self.noise_dim == 0 {
            return invalid("dimensions d and m must be at least 1");
        }
        if self.terms.is_empty() {
            return invalid("basis size K must be at least 1");
        }
        let Some(terminal) = self.terminal else {
            return invalid("terminal functional missing");
        };
        let Some(x0) = self.x0 else {
            return invalid("initial value missing");
        };
        let horizon = self.horizon.unwrap_or(1.0);
        let bound_u = self.bound_u.unwrap_or(2.0);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid("horizon must be positive");
        }
        if !(bound_u > 1.0 && bound_u.is_finite()) {
            return invalid("bound U must exceed 1");
        }
        check_state(self.dim, &x0).map_err(|e| MvsdeError::InvalidProblem(e.to_string()))?;

        let problem = MvsdeProblem {
            name: self.name,
            dim: self.dim,
            noise_dim: self.noise_dim,
            terms: self.terms,
            terminal,
            x0,
            horizon,
            bound_u,
            analytic: self.analytic,
        };
        problem.spot_check()?;
        Ok(problem)
    }
}

impl MvsdeProblem {
    fn spot_check(&self) -> Result<()> {
        let d = self.dim;
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d * self.noise_dim];
        for offset in [0.0, 0.5, -0.5, 1.0, -1.0, 3.0, -3.0] {
            for axis in 0..d {
                let mut x = self.x0.clone();
                x[axis] += offset;
                for (k, term) in self.terms.iter().enumerate() {
                    (term.alpha)(&x, &mut a);
                    (term.beta)(&x, &mut b);
                    let phi = (term.phi)(&x);
                    let na = norm(&a);
                    let nb = norm(&b);
                    if !(na.is_finite() && nb.is_finite() && phi.is_finite()) {
                        return Err(MvsdeError::InvalidProblem(format!(
                            "basis term {k} is not finite at {x:?}"
                        )));
                    }
                    if na > self.bound_u || nb > self.bound_u {
                        return Err(MvsdeError::InvalidProblem(format!(
                            "basis term {k} exceeds U = {} at {x:?} (|α| = {na}, |β| = {nb})",
                            self.bound_u
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `E[X_t] = x0·e^{−t}` for the Shimizu-Yamada model.
pub fn shimizu_yamada_exact_mean(t: f64, x0: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MvsdeError::param("t", "must be a finite non-negative time"));
    }
    Ok(x0 * (-t).exp())
}

/// Shimizu-Yamada: `d = m = 1`, `K = 2`, `φ_1 = 1`, `φ_2 = φ = x`,
/// drift `−γ_2(t)`, diffusion `γ_1(t) = 1`, horizon `T = 2`.
///
/// Exact solution `X_t = x0·e^{−t} + W_t`.
pub fn shimizu_yamada(x0: f64) -> Result<MvsdeProblem> {
    MvsdeProblem::builder(1, 1)
        .name("shimizu_yamada")
        // k = 1: φ_1 = 1 carries the diffusion
        .term(|_, a| a[0] = 0.0, |_, b| b[0] = 1.0, |_| 1.0)
        // k = 2: φ_2 = x carries the mean-reverting drift
        .term(|_, a| a[0] = -1.0, |_, b| b[0] = 0.0, |x| x[0])
        .terminal(|x| x[0])
        .x0(vec![x0])
        .horizon(2.0)
        .bound(x0.abs().max(2.0))
        .analytic(AnalyticSolution {
            gamma: Arc::new(move |t| vec![1.0, x0 * (-t).exp()]),
            terminal_mean: Arc::new(move |t| x0 * (-t).exp()),
        })
        .build()
}

/// Brownian motion with constant drift `c`: `dX = c·γ_1 dt + γ_1 dW`,
/// `φ_1 = 1`, `φ_2 = x`. Both moments are linear in `t`.
pub fn linear_mean(x0: f64, drift: f64) -> Result<MvsdeProblem> {
    MvsdeProblem::builder(1, 1)
        .name("linear_mean")
        .term(move |_, a| a[0] = drift, |_, b| b[0] = 1.0, |_| 1.0)
        .term(|_, a| a[0] = 0.0, |_, b| b[0] = 0.0, |x| x[0])
        .terminal(|x| x[0])
        .x0(vec![x0])
        .horizon(2.0)
        .bound(x0.abs().max(drift.abs()).max(2.0))
        .analytic(AnalyticSolution {
            gamma: Arc::new(move |t| vec![1.0, x0 + drift * t]),
            terminal_mean: Arc::new(move |t| x0 + drift * t),
        })
        .build()
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_MODELS: &[&str] = &["shimizu_yamada", "linear_mean"];

pub fn builtin_problem(name: &str, x0: f64) -> Result<MvsdeProblem> {
    match name {
        "shimizu_yamada" => shimizu_yamada(x0),
        "linear_mean" => linear_mean(x0, 0.5),
        other => Err(MvsdeError::Unknown {
            kind: "model",
            name: other.to_owned(),
        }),
    }
}
