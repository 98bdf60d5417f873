//! Empirical weak order: Monte Carlo errors `|E[f(Y_T^h)] - E[f(Y_T)]|`
//! for several step sizes and their log-log slope.

use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::fit::{fit_loglog_slope, FitModel, LogLogFit};
use crate::par::map_chunks;
use crate::rng::{substream, NoiseDraw, StreamKey};
use crate::scheme::{DriftDiffusionField, Scheme, Workspace};

/// Points whose error is below this many standard errors are excluded.
pub const NOISE_FLOOR_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VarianceReduction {
    /// Independent samples for every step size.
    None,
    /// Every coarse path shares its Brownian path with a reference path of
    /// step `min(h) / refinement`; the difference `f(Y^h) - f(Y^ref)` is
    /// averaged and the reference expectation is replaced by the exact
    /// value. Adds a bias of the reference's own weak error.
    CoupledReference { refinement: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakOrderConfig {
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub h_list: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
    pub variance_reduction: VarianceReduction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakOrderPoint {
    pub h: f64,
    pub estimate: f64,
    pub error: f64,
    pub std_error: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakOrderReport {
    pub scheme: String,
    pub points: Vec<WeakOrderPoint>,
    /// `None` when fewer than two points lie above the noise floor.
    pub fit: Option<LogLogFit>,
}

impl WeakOrderReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn excluded(&self) -> impl Iterator<Item = &WeakOrderPoint> {
        self.points.iter().filter(|p| p.excluded)
    }
}

fn steps_in(span: f64, h: f64) -> Option<usize> {
    let r = span / h;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * r.max(1.0) && n >= 1.0).then_some(n as usize)
}

/// Running sums of `v` and `v²` per step size.
#[derive(Clone)]
struct Moments {
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            s1: vec![0.0; n],
            s2: vec![0.0; n],
        }
    }

    #[inline]
    fn add(&mut self, q: usize, v: f64) {
        self.s1[q] += v;
        self.s2[q] += v * v;
    }

    fn merge(mut self, o: &Self) -> Self {
        for q in 0..self.s1.len() {
            self.s1[q] += o.s1[q];
            self.s2[q] += o.s2[q];
        }
        self
    }
}

pub fn estimate_weak_order<S, F, G>(
    scheme: &S,
    field: &F,
    f: G,
    exact_expectation: f64,
    cfg: &WeakOrderConfig,
) -> Result<WeakOrderReport>
where
    S: Scheme,
    F: DriftDiffusionField,
    G: Fn(&[f64]) -> f64 + Sync,
{
    if cfg.h_list.len() < 3 {
        return Err(MvsdeError::param("h_list", "at least three step sizes are required"));
    }
    if cfg.n_paths < 2 {
        return Err(MvsdeError::param("n_paths", "at least two paths are required"));
    }
    if !exact_expectation.is_finite() {
        return Err(MvsdeError::NonFiniteInput { what: "exact expectation" });
    }
    if cfg.x0.len() != field.dim() {
        return Err(MvsdeError::param("x0", "dimension mismatch with field"));
    }
    let steps: Vec<usize> = cfg
        .h_list
        .iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(MvsdeError::param("h_list", "step sizes must be positive"));
            }
            steps_in(cfg.horizon, h)
                .ok_or_else(|| MvsdeError::param("h_list", format!("T/h is not an integer for h = {h}")))
        })
        .collect::<Result<_>>()?;

    let totals = match cfg.variance_reduction {
        VarianceReduction::None => plain(scheme, field, &f, cfg, &steps),
        VarianceReduction::CoupledReference { refinement } => {
            coupled(scheme, field, &f, cfg, &steps, refinement)?
        }
    };

    let n = cfg.n_paths as f64;
    let offset = match cfg.variance_reduction {
        VarianceReduction::None => 0.0,
        VarianceReduction::CoupledReference { .. } => exact_expectation,
    };
    let points: Vec<WeakOrderPoint> = cfg
        .h_list
        .iter()
        .enumerate()
        .map(|(q, &h)| {
            let mean = totals.s1[q] / n;
            let var = ((totals.s2[q] - n * mean * mean) / (n - 1.0)).max(0.0);
            let std_error = (var / n).sqrt();
            let estimate = mean + offset;
            let error = (estimate - exact_expectation).abs();
            WeakOrderPoint {
                h,
                estimate,
                error,
                std_error,
                excluded: error < NOISE_FLOOR_SIGMAS * std_error || error == 0.0,
            }
        })
        .collect();
    for p in points.iter().filter(|p| p.excluded) {
        log::info!(
            "h = {}: error {:.3e} is below {} standard errors ({:.3e}); point excluded",
            p.h,
            p.error,
            NOISE_FLOOR_SIGMAS,
            p.std_error
        );
    }

    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| !p.excluded)
        .map(|p| (p.h, p.error))
        .collect();
    let fit = if kept.len() >= 2 {
        Some(fit_loglog_slope(&kept, FitModel::Power)?)
    } else {
        None
    };
    Ok(WeakOrderReport {
        scheme: scheme.spec().name,
        points,
        fit,
    })
}

fn plain<S, F, G>(scheme: &S, field: &F, f: &G, cfg: &WeakOrderConfig, steps: &[usize]) -> Moments
where
    S: Scheme,
    F: DriftDiffusionField,
    G: Fn(&[f64]) -> f64 + Sync,
{
    let (d, m) = (field.dim(), field.noise_dim());
    let iterated = scheme.spec().noise_requirements.needs_iterated();
    let parts = map_chunks(cfg.n_paths, |range| {
        let mut acc = Moments::new(steps.len());
        let mut ws = Workspace::new(d, m);
        let mut noise = NoiseDraw::zeros(m);
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        for p in range {
            for (q, (&h, &n_steps)) in cfg.h_list.iter().zip(steps).enumerate() {
                let mut rng = StreamKey::new(cfg.seed, p as u64, q as u64, substream::NOISE).stream();
                x.copy_from_slice(&cfg.x0);
                for i in 0..n_steps {
                    noise.resample(&mut rng, h, iterated);
                    scheme.advance(field, i as f64 * h, h, &x, &noise, &mut ws, &mut y);
                    std::mem::swap(&mut x, &mut y);
                }
                acc.add(q, f(&x));
            }
        }
        acc
    });
    parts
        .iter()
        .fold(Moments::new(steps.len()), |a, b| a.merge(b))
}

fn coupled<S, F, G>(
    scheme: &S,
    field: &F,
    f: &G,
    cfg: &WeakOrderConfig,
    steps: &[usize],
    refinement: usize,
) -> Result<Moments>
where
    S: Scheme,
    F: DriftDiffusionField,
    G: Fn(&[f64]) -> f64 + Sync,
{
    if refinement < 1 {
        return Err(MvsdeError::param("refinement", "must be at least 1"));
    }
    let h_min = cfg.h_list.iter().copied().fold(f64::INFINITY, f64::min);
    let h_ref = h_min / refinement as f64;
    let n_ref = steps_in(cfg.horizon, h_ref)
        .ok_or_else(|| MvsdeError::param("refinement", "reference step does not divide T"))?;
    let ratios: Vec<usize> = steps
        .iter()
        .map(|&n| {
            (n_ref % n == 0)
                .then_some(n_ref / n)
                .ok_or_else(|| MvsdeError::param("h_list", "step sizes must share a common refinement"))
        })
        .collect::<Result<_>>()?;

    let (d, m) = (field.dim(), field.noise_dim());
    let parts = map_chunks(cfg.n_paths, |range| {
        let mut acc = Moments::new(steps.len());
        let mut ws = Workspace::new(d, m);
        let mut fine = vec![NoiseDraw::zeros(m); n_ref];
        let mut coarse = NoiseDraw::zeros(m);
        let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
        for p in range {
            let mut rng = StreamKey::new(cfg.seed, p as u64, 0, substream::NOISE).stream();
            for draw in fine.iter_mut() {
                draw.resample(&mut rng, h_ref, true);
            }
            x.copy_from_slice(&cfg.x0);
            for (i, draw) in fine.iter().enumerate() {
                scheme.advance(field, i as f64 * h_ref, h_ref, &x, draw, &mut ws, &mut y);
                std::mem::swap(&mut x, &mut y);
            }
            let reference = f(&x);

            for (q, (&h, &r)) in cfg.h_list.iter().zip(&ratios).enumerate() {
                x.copy_from_slice(&cfg.x0);
                for (i, block) in fine.chunks(r).enumerate() {
                    aggregate(block, h_ref, &mut coarse);
                    scheme.advance(field, i as f64 * h, h, &x, &coarse, &mut ws, &mut y);
                    std::mem::swap(&mut x, &mut y);
                }
                acc.add(q, f(&x) - reference);
            }
        }
        acc
    });
    Ok(parts
        .iter()
        .fold(Moments::new(steps.len()), |a, b| a.merge(b)))
}

/// Increment and `I_(j,0)` over the union of consecutive fine steps of size
/// `dt`: `ΔW = Σ ΔW_k` and `I = Σ_k [(W_{s_k} - W_{s_0}) dt + I_k]`.
fn aggregate(block: &[NoiseDraw], dt: f64, out: &mut NoiseDraw) {
    for j in 0..out.noise_dim() {
        let (mut w, mut i10) = (0.0, 0.0);
        for draw in block {
            i10 += w * dt + draw.i10[j];
            w += draw.dw[j];
        }
        out.dw[j] = w;
        out.i10[j] = i10;
    }
}
