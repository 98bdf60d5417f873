//! One-step maps `X_{i+1} = F^{h}_{a,b,t}(X_i, Z_i)`.
//!
//! Two schemes are built in: Euler-Maruyama (weak order 1) and the
//! stochastic Runge-Kutta scheme SRI1W1 of Rößler (weak order 2, strong
//! order 1.5 for scalar/diagonal noise), which additionally consumes the
//! iterated integrals `I_(j,0)`. New schemes implement [`Scheme`].
//!
//! Both built-ins handle scalar noise (`m = 1`, any `d`) and diagonal noise
//! (`d = m`, diagonal `b`). General non-commutative noise is not supported.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::rng::NoiseDraw;

/// Time-dependent coefficients `a(t, x) ∈ R^d` and `b(t, x) ∈ R^{d×m}`.
/// Implementations must be pure.
pub trait DriftDiffusionField: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    /// Row-major `d×m`.
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// Field built from two closures.
pub struct FnField<A, B> {
    dim: usize,
    noise_dim: usize,
    drift: A,
    diffusion: B,
}

impl<A, B> FnField<A, B>
where
    A: Fn(f64, &[f64], &mut [f64]) + Sync,
    B: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    pub fn new(dim: usize, noise_dim: usize, drift: A, diffusion: B) -> Self {
        Self {
            dim,
            noise_dim,
            drift,
            diffusion,
        }
    }
}

impl<A, B> DriftDiffusionField for FnField<A, B>
where
    A: Fn(f64, &[f64], &mut [f64]) + Sync,
    B: Fn(f64, &[f64], &mut [f64]) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    #[inline]
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }
    #[inline]
    fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(t, x, out)
    }
}

/// Which parts of a [`NoiseDraw`] a scheme reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseRequirement {
    Increments,
    IncrementsAndIteratedIntegrals,
}

impl NoiseRequirement {
    pub fn needs_iterated(self) -> bool {
        self == Self::IncrementsAndIteratedIntegrals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: String,
    pub weak_order_p: f64,
    pub noise_requirements: NoiseRequirement,
}

/// Scratch buffers for one worker.
#[derive(Debug, Clone)]
pub struct Workspace {
    d: usize,
    m: usize,
    a1: Vec<f64>,
    a2: Vec<f64>,
    g: [Vec<f64>; 4],
    stage: Vec<f64>,
    ones: Vec<f64>,
    chi: [Vec<f64>; 3],
}

impl Workspace {
    pub fn new(d: usize, m: usize) -> Self {
        let mat = || vec![0.0; d * m];
        Self {
            d,
            m,
            a1: vec![0.0; d],
            a2: vec![0.0; d],
            g: [mat(), mat(), mat(), mat()],
            stage: vec![0.0; d],
            ones: vec![1.0; m],
            chi: [vec![0.0; m], vec![0.0; m], vec![0.0; m]],
        }
    }

    pub fn for_field<F: DriftDiffusionField + ?Sized>(field: &F) -> Self {
        Self::new(field.dim(), field.noise_dim())
    }
}

/// `out += c · G v` for row-major `G` (`d×m`).
#[inline(always)]
fn add_mat_vec(out: &mut [f64], c: f64, g: &[f64], v: &[f64], m: usize) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = &g[i * m..(i + 1) * m];
        let mut s = 0.0;
        for (gij, vj) in row.iter().zip(v) {
            s += gij * vj;
        }
        *o += c * s;
    }
}

pub trait Scheme: Sync {
    fn spec(&self) -> SchemeSpec;

    /// Advances `x` over `[t, t + h]` into `out`. No validation; callers
    /// check finiteness of the result.
    fn advance<F: DriftDiffusionField + ?Sized>(
        &self,
        field: &F,
        t: f64,
        h: f64,
        x: &[f64],
        noise: &NoiseDraw,
        ws: &mut Workspace,
        out: &mut [f64],
    );
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Euler;

impl Scheme for Euler {
    fn spec(&self) -> SchemeSpec {
        SchemeSpec {
            name: "euler".into(),
            weak_order_p: 1.0,
            noise_requirements: NoiseRequirement::Increments,
        }
    }

    #[inline]
    fn advance<F: DriftDiffusionField + ?Sized>(
        &self,
        field: &F,
        t: f64,
        h: f64,
        x: &[f64],
        noise: &NoiseDraw,
        ws: &mut Workspace,
        out: &mut [f64],
    ) {
        field.drift(t, x, &mut ws.a1);
        field.diffusion(t, x, &mut ws.g[0]);
        for i in 0..ws.d {
            out[i] = x[i] + h * ws.a1[i];
        }
        add_mat_vec(out, 1.0, &ws.g[0], &noise.dw, ws.m);
    }
}

/// SRI1W1 (Rößler 2010), as in the `SRIW1` tableau of DifferentialEquations.jl.
///
/// ```text
/// c0 = (0, 3/4)            A0[2,1] = 3/4      B0[2,1] = 3/2
/// c1 = (0, 1/4, 1, 1/4)    A1[.,1] = (1/4, 1, 1/4)
///                          B1 rows = (1/2), (-1), (-5, 3, 1/2)
/// α  = (1/3, 2/3)
/// β1 = (-1, 4/3,  2/3, 0)  β2 = (-1,  4/3, -1/3, 0)
/// β3 = ( 2,-4/3, -2/3, 0)  β4 = (-2,  5/3, -2/3, 1)
/// ```
///
/// with the random weights `ΔW`, `I_(1,1)/√h`, `I_(1,0)/h`, `I_(1,1,1)/h`
/// multiplying the β rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Sri1w1;

impl Scheme for Sri1w1 {
    fn spec(&self) -> SchemeSpec {
        SchemeSpec {
            name: "sri1w1".into(),
            weak_order_p: 2.0,
            noise_requirements: NoiseRequirement::IncrementsAndIteratedIntegrals,
        }
    }

    #[inline]
    fn advance<F: DriftDiffusionField + ?Sized>(
        &self,
        field: &F,
        t: f64,
        h: f64,
        x: &[f64],
        noise: &NoiseDraw,
        ws: &mut Workspace,
        out: &mut [f64],
    ) {
        let (d, m) = (ws.d, ws.m);
        let sqh = h.sqrt();
        for j in 0..m {
            let w = noise.dw[j];
            ws.chi[0][j] = (w * w - h) / (2.0 * sqh);
            ws.chi[1][j] = noise.i10[j] / h;
            ws.chi[2][j] = (w * w * w - 3.0 * w * h) / (6.0 * h);
        }
        let [g1, g2, g3, g4] = &mut ws.g;

        field.drift(t, x, &mut ws.a1);
        field.diffusion(t, x, g1);

        // H^(1)_2 = x + h/4 a1 + √h/2 g1·1
        for i in 0..d {
            ws.stage[i] = x[i] + 0.25 * h * ws.a1[i];
        }
        add_mat_vec(&mut ws.stage, 0.5 * sqh, g1, &ws.ones, m);
        field.diffusion(t + 0.25 * h, &ws.stage, g2);

        // H^(1)_3 = x + h a1 − √h g1·1
        for i in 0..d {
            ws.stage[i] = x[i] + h * ws.a1[i];
        }
        add_mat_vec(&mut ws.stage, -sqh, g1, &ws.ones, m);
        field.diffusion(t + h, &ws.stage, g3);

        // H^(1)_4 = x + h/4 a1 + √h (−5 g1 + 3 g2 + g3/2)·1
        for i in 0..d {
            ws.stage[i] = x[i] + 0.25 * h * ws.a1[i];
        }
        add_mat_vec(&mut ws.stage, -5.0 * sqh, g1, &ws.ones, m);
        add_mat_vec(&mut ws.stage, 3.0 * sqh, g2, &ws.ones, m);
        add_mat_vec(&mut ws.stage, 0.5 * sqh, g3, &ws.ones, m);
        field.diffusion(t + 0.25 * h, &ws.stage, g4);

        // H^(0)_2 = x + 3h/4 a1 + 3/2 g1·(I10/h)
        for i in 0..d {
            ws.stage[i] = x[i] + 0.75 * h * ws.a1[i];
        }
        add_mat_vec(&mut ws.stage, 1.5, g1, &ws.chi[1], m);
        field.drift(t + 0.75 * h, &ws.stage, &mut ws.a2);

        for i in 0..d {
            out[i] = x[i] + h * (ws.a1[i] + 2.0 * ws.a2[i]) / 3.0;
        }
        let dw = &noise.dw;
        let [chi1, chi2, chi3] = &ws.chi;
        add_mat_vec(out, -1.0, g1, dw, m);
        add_mat_vec(out, 4.0 / 3.0, g2, dw, m);
        add_mat_vec(out, 2.0 / 3.0, g3, dw, m);

        add_mat_vec(out, -1.0, g1, chi1, m);
        add_mat_vec(out, 4.0 / 3.0, g2, chi1, m);
        add_mat_vec(out, -1.0 / 3.0, g3, chi1, m);

        add_mat_vec(out, 2.0, g1, chi2, m);
        add_mat_vec(out, -4.0 / 3.0, g2, chi2, m);
        add_mat_vec(out, -2.0 / 3.0, g3, chi2, m);

        add_mat_vec(out, -2.0, g1, chi3, m);
        add_mat_vec(out, 5.0 / 3.0, g2, chi3, m);
        add_mat_vec(out, -2.0 / 3.0, g3, chi3, m);
        add_mat_vec(out, 1.0, g4, chi3, m);
    }
}

/// Built-in schemes, selectable by name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Euler,
    #[default]
    Sri1w1,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Sri1w1 => "sri1w1",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = MvsdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "sri1w1" | "sriw1" => Ok(Self::Sri1w1),
            _ => Err(MvsdeError::Unknown {
                kind: "scheme",
                name: s.to_owned(),
            }),
        }
    }
}

impl Scheme for SchemeKind {
    fn spec(&self) -> SchemeSpec {
        match self {
            Self::Euler => Euler.spec(),
            Self::Sri1w1 => Sri1w1.spec(),
        }
    }

    #[inline]
    fn advance<F: DriftDiffusionField + ?Sized>(
        &self,
        field: &F,
        t: f64,
        h: f64,
        x: &[f64],
        noise: &NoiseDraw,
        ws: &mut Workspace,
        out: &mut [f64],
    ) {
        match self {
            Self::Euler => Euler.advance(field, t, h, x, noise, ws, out),
            Self::Sri1w1 => Sri1w1.advance(field, t, h, x, noise, ws, out),
        }
    }
}

fn checked_step<S: Scheme, F: DriftDiffusionField + ?Sized>(
    scheme: &S,
    field: &F,
    t: f64,
    h: f64,
    x: &[f64],
    noise: &NoiseDraw,
) -> Result<Vec<f64>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(MvsdeError::param("h", "step size must be positive"));
    }
    if x.len() != field.dim() || noise.noise_dim() != field.noise_dim() {
        return Err(MvsdeError::param("x", "dimension mismatch with field"));
    }
    let mut ws = Workspace::for_field(field);
    let mut out = vec![0.0; x.len()];
    scheme.advance(field, t, h, x, noise, &mut ws, &mut out);
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(MvsdeError::NonFiniteState { step: None, t })
    }
}

/// `x + a(t,x) h + b(t,x) ΔW`.
pub fn euler_step<F: DriftDiffusionField + ?Sized>(
    field: &F,
    t: f64,
    h: f64,
    x: &[f64],
    noise: &NoiseDraw,
) -> Result<Vec<f64>> {
    checked_step(&Euler, field, t, h, x, noise)
}

/// One SRI1W1 step.
pub fn sri1w1_step<F: DriftDiffusionField + ?Sized>(
    field: &F,
    t: f64,
    h: f64,
    x: &[f64],
    noise: &NoiseDraw,
) -> Result<Vec<f64>> {
    checked_step(&Sri1w1, field, t, h, x, noise)
}
