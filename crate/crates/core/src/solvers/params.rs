use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::qmci::{GroverSchedule, MAX_GROVER_EXPONENT};
use crate::schedule::repair_steps;
use crate::scheme::SchemeKind;

/// Desk-scale particle count.
pub const DEFAULT_PARTICLES: usize = 100_000;

/// How the coupled means are estimated from the particle averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QmciMode {
    /// Replace each clipped average by an emulated amplitude-estimation
    /// outcome.
    #[default]
    MaximumLikelihood,
    /// Use the clipped averages directly; no oracle queries are counted.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatedRunParams {
    pub h_i: f64,
    pub h_ii: f64,
    pub n_particles: usize,
    pub m_g: u32,
    pub n_shot: u32,
    /// Centre of the clip window at `t = 0`.
    pub clip_center: f64,
    /// Exponential rate of the window centre, `center · e^{rate t}`.
    pub clip_center_decay: f64,
    /// Half-width of the window in units of `√t`.
    pub clip_width_sigmas: f64,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub qmci_mode: QmciMode,
}

impl EmulatedRunParams {
    pub fn grover_schedule(&self) -> Result<GroverSchedule> {
        GroverSchedule::new(self.m_g, self.n_shot)
    }

    pub fn clip_bounds(&self) -> ClipBounds {
        ClipBounds {
            center: self.clip_center,
            decay: self.clip_center_decay,
            width_sigmas: self.clip_width_sigmas,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(MvsdeError::param("N", "at least one particle is required"));
        }
        if self.qmci_mode == QmciMode::MaximumLikelihood && self.n_shot == 0 {
            return Err(MvsdeError::param("n_shot", "must be at least 1"));
        }
        if !(self.clip_width_sigmas > 0.0) || !self.clip_width_sigmas.is_finite() {
            return Err(MvsdeError::param("clip_width_sigmas", "must be positive"));
        }
        if !self.clip_center.is_finite() || !self.clip_center_decay.is_finite() {
            return Err(MvsdeError::NonFiniteInput { what: "clip parameters" });
        }
        self.grover_schedule().map(|_| ())
    }
}

/// Window `center · e^{decay t} ± width_sigmas · √t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    pub center: f64,
    pub decay: f64,
    pub width_sigmas: f64,
}

impl ClipBounds {
    /// `(upper, lower)` at time `t > 0`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        assert!(t > 0.0, "clip bounds are only used at positive times");
        let c = self.center * (self.decay * t).exp();
        let w = self.width_sigmas * t.sqrt();
        (c + w, c - w)
    }
}

/// `M_G`: `log₂(128/ε)` rounded to the nearest integer.
pub fn experiment_grover_exponent(eps_aux: f64) -> u32 {
    ((128.0 / eps_aux).log2() + 0.5).floor() as u32
}

/// Experiment settings for auxiliary accuracy `eps_aux`:
/// `h_I = T ε/16`, `h_II = T √ε / 4`, `N_G = 2^{M_G}`, `n_shot = 30`,
/// clip window `x0 e^{-t} ± 5√t`.
pub fn experiment_params(eps_aux: f64, horizon: f64, x0: f64) -> Result<EmulatedRunParams> {
    if !(eps_aux > 0.0 && eps_aux <= 1.0) {
        return Err(MvsdeError::param("eps", format!("{eps_aux} is outside (0, 1]")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(MvsdeError::param("T", "must be positive"));
    }
    if !x0.is_finite() {
        return Err(MvsdeError::NonFiniteInput { what: "x0" });
    }
    let raw_i = horizon * eps_aux / 16.0;
    let raw_ii = horizon / 4.0 * eps_aux.sqrt();
    let (h_i, h_ii) = repair_steps(horizon, raw_i, raw_ii)?;
    if (h_i - raw_i).abs() > 1e-12 * raw_i || (h_ii - raw_ii).abs() > 1e-12 * raw_ii {
        log::info!("eps = {eps_aux}: step sizes ({raw_i}, {raw_ii}) repaired to ({h_i}, {h_ii})");
    }
    let m_g = experiment_grover_exponent(eps_aux);
    if m_g > MAX_GROVER_EXPONENT {
        return Err(MvsdeError::param("eps", format!("M_G = {m_g} exceeds the supported maximum")));
    }
    Ok(EmulatedRunParams {
        h_i,
        h_ii,
        n_particles: DEFAULT_PARTICLES,
        m_g,
        n_shot: 30,
        clip_center: x0,
        clip_center_decay: -1.0,
        clip_width_sigmas: 5.0,
        seed: 0,
        scheme: SchemeKind::Sri1w1,
        qmci_mode: QmciMode::MaximumLikelihood,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalParams {
    pub epsilon: f64,
    pub eta: f64,
    pub eps_qmci: f64,
    pub h_i_max: f64,
    pub h_ii_max: f64,
    pub h_i: f64,
    pub h_ii: f64,
    pub n_t: usize,
    pub eta_prime: f64,
    pub kappa_prime: f64,
    pub p: f64,
}

impl TheoreticalParams {
    /// Left-hand side of the short-horizon hypothesis
    /// `2 √(T+m) d K U² exp(2 (T+m) T d² K² U⁴) ≤ 1/12` and whether it holds.
    pub fn short_horizon_condition(horizon: f64, m: usize, d: usize, k: usize, u: f64) -> (f64, bool) {
        let (m, d, k) = (m as f64, d as f64, k as f64);
        let lhs = 2.0
            * (horizon + m).sqrt()
            * d
            * k
            * u.powi(2)
            * (2.0 * (horizon + m) * horizon * d * d * k * k * u.powi(4)).exp();
        (lhs, lhs <= 1.0 / 12.0)
    }
}

/// Accuracy budget and step sizes guaranteeing error `ε` with probability
/// `1 - η` for a scheme of weak order `p`.
pub fn theoretical_params(
    epsilon: f64,
    eta: f64,
    u: f64,
    kappa_prime: f64,
    horizon: f64,
    p: f64,
    k: usize,
) -> Result<TheoreticalParams> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(MvsdeError::param("epsilon", "must be positive"));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(MvsdeError::param("eta", "must lie in (0, 1)"));
    }
    if !(u > 1.0) || !u.is_finite() {
        return Err(MvsdeError::param("U", "must exceed 1"));
    }
    if !(kappa_prime > 0.0) || !kappa_prime.is_finite() {
        return Err(MvsdeError::param("kappa_prime", "must be positive"));
    }
    if !(p > 1.0 && p <= 2.0) {
        return Err(MvsdeError::param("p", "must lie in (1, 2]"));
    }
    if k == 0 {
        return Err(MvsdeError::param("K", "must be at least 1"));
    }
    let h_i_max = 3.0 * epsilon / (4.0 * u);
    let h_ii_max = (epsilon / (4.0 * u).max(24.0 * kappa_prime * horizon)).powf(1.0 / p);
    let (h_i, h_ii) = repair_steps(horizon, h_i_max, h_ii_max)?;
    let n_t = (h_ii / h_i).round() as usize + (horizon / h_ii).round() as usize - 1;
    let eta_prime = eta / (k * (n_t - 1) + 1) as f64;
    Ok(TheoreticalParams {
        epsilon,
        eta,
        eps_qmci: epsilon / 12.0,
        h_i_max,
        h_ii_max,
        h_i,
        h_ii,
        n_t,
        eta_prime,
        kappa_prime,
        p,
    })
}
