//! Classical emulation of maximum-likelihood amplitude estimation.
//!
//! For each Grover power `j ∈ {0, 1, 2, 4, …, 2^M_G}` the measurement is a
//! Bernoulli draw with success probability `sin²((2j+1)θ_μ)`,
//! `θ_μ = arcsin √μ`. The estimate is `sin² θ̂` with `θ̂` maximising the
//! joint likelihood on `[0, π/2]`.

use std::f64::consts::FRAC_PI_2;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};
use crate::rng::StreamKey;

/// Points of the global search grid over `[0, π/2]`. Resolves the fastest
/// likelihood oscillation for `M_G ≤ 14`.
pub const MLE_GRID_POINTS: usize = 1 << 17;

/// Largest supported `M_G`.
pub const MAX_GROVER_EXPONENT: u32 = 14;

const GOLDEN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroverSchedule {
    pub m_g: u32,
    pub n_shot: u32,
}

impl GroverSchedule {
    pub fn new(m_g: u32, n_shot: u32) -> Result<Self> {
        if m_g > MAX_GROVER_EXPONENT {
            return Err(MvsdeError::param(
                "M_G",
                format!("at most {MAX_GROVER_EXPONENT} is supported, got {m_g}"),
            ));
        }
        Ok(Self { m_g, n_shot })
    }

    /// `N_G = 2^M_G`.
    pub fn max_power(&self) -> u64 {
        1 << self.m_g
    }

    /// `{0, 2^0, 2^1, …, 2^M_G}`, sorted, length `M_G + 2`.
    pub fn powers(&self) -> Vec<u64> {
        std::iter::once(0).chain((0..=self.m_g).map(|i| 1u64 << i)).collect()
    }

    /// `Σ_j (2j+1) = 2^(M_G+2) + M_G`.
    pub fn amplification_sum(&self) -> u64 {
        (1u64 << (self.m_g + 2)) + self.m_g as u64
    }

    fn require_shots(&self) -> Result<()> {
        if self.n_shot == 0 {
            return Err(MvsdeError::param("n_shot", "must be at least 1"));
        }
        Ok(())
    }
}

/// Measurement counts `(n_0, n_1)` per Grover power, in schedule order.
pub type ShotCounts = Vec<[u32; 2]>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmciOutcome {
    pub estimate: f64,
    pub theta_hat: f64,
    pub counts: ShotCounts,
    pub grover_applications: u64,
}

/// Oracle queries of one estimation whose state preparation chains `depth`
/// one-step circuits: `depth · n_shot · Σ_j (2j+1)`.
pub fn grover_query_count(schedule: &GroverSchedule, depth: u64) -> Result<u64> {
    if depth == 0 {
        return Err(MvsdeError::param("depth", "must be at least 1"));
    }
    Ok(depth * schedule.n_shot as u64 * schedule.amplification_sum())
}

/// Draws the measurement record for amplitude `mu` and returns the
/// maximum-likelihood estimate.
pub fn qmciml(mu: f64, schedule: &GroverSchedule, key: StreamKey) -> Result<QmciOutcome> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(MvsdeError::param("mu", format!("{mu} is outside [0, 1]")));
    }
    schedule.require_shots()?;
    let theta = mu.sqrt().asin();
    let mut rng = key.stream();
    let counts: ShotCounts = schedule
        .powers()
        .into_iter()
        .map(|j| {
            let p = ((2 * j + 1) as f64 * theta).sin().powi(2);
            let ones = (0..schedule.n_shot)
                .filter(|_| unit_uniform(&mut rng) < p)
                .count() as u32;
            [schedule.n_shot - ones, ones]
        })
        .collect();
    let theta_hat = mle_argmax(&counts, schedule)?;
    Ok(QmciOutcome {
        estimate: theta_hat.sin().powi(2),
        theta_hat,
        counts,
        grover_applications: schedule.n_shot as u64 * schedule.amplification_sum(),
    })
}

#[inline]
fn unit_uniform<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Maximiser of the log-likelihood over `[0, π/2]`.
pub fn mle_argmax(counts: &[[u32; 2]], schedule: &GroverSchedule) -> Result<f64> {
    schedule.require_shots()?;
    if counts.len() != schedule.powers().len() {
        return Err(MvsdeError::param(
            "counts",
            format!("expected {} entries, got {}", schedule.powers().len(), counts.len()),
        ));
    }
    if let Some(c) = counts.iter().find(|c| c[0] + c[1] != schedule.n_shot) {
        return Err(MvsdeError::param(
            "counts",
            format!("{} + {} does not equal n_shot = {}", c[0], c[1], schedule.n_shot),
        ));
    }
    let weighted: Vec<[f64; 2]> = counts.iter().map(|c| [c[0] as f64, c[1] as f64]).collect();
    mle_argmax_weighted(&weighted, schedule)
}

/// As [`mle_argmax`] with real-valued (e.g. expected) counts.
pub fn mle_argmax_weighted(counts: &[[f64; 2]], schedule: &GroverSchedule) -> Result<f64> {
    let powers = schedule.powers();
    if counts.len() != powers.len() {
        return Err(MvsdeError::param(
            "counts",
            format!("expected {} entries, got {}", powers.len(), counts.len()),
        ));
    }
    if counts.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(MvsdeError::param("counts", "must be finite and non-negative"));
    }
    if counts.iter().flatten().all(|&c| c == 0.0) {
        return Err(MvsdeError::param("counts", "all counts are zero"));
    }
    let lik = Likelihood::new(counts);
    let exact = |theta: f64| lik.exact(theta);

    let last = MLE_GRID_POINTS - 1;
    let spacing = FRAC_PI_2 / last as f64;
    let grid_point = |i: usize| if i == last { FRAC_PI_2 } else { i as f64 * spacing };

    // A coarse pass supplies a threshold; the full pass then abandons every
    // point whose partial sum plus the best attainable remainder falls
    // below it. Both passes share one evaluator, so ties resolve as in a
    // plain scan.
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in (0..MLE_GRID_POINTS).step_by(64) {
        if let Some(v) = lik.scan(grid_point(i), f64::NEG_INFINITY) {
            if v > best.1 {
                best = (i, v);
            }
        }
    }
    let threshold = best.1;
    for i in 0..MLE_GRID_POINTS {
        if let Some(v) = lik.scan(grid_point(i), threshold) {
            if v > best.1 || (v == best.1 && i < best.0) {
                best = (i, v);
            }
        }
    }
    if best.1 == f64::NEG_INFINITY {
        // Every grid point has a vanishing factor; fall back to the left end.
        return Ok(0.0);
    }

    let theta0 = grid_point(best.0);
    let lo = grid_point(best.0.saturating_sub(1));
    let hi = grid_point((best.0 + 1).min(last));
    let cand = golden_max(&exact, lo, hi);
    Ok(if exact(cand) > exact(theta0) { cand } else { theta0 })
}

/// Log-likelihood `Σ_j n_{1,j} ln sin²((2j+1)θ) + n_{0,j} ln cos²((2j+1)θ)`
/// for the schedule `j ∈ {0, 1, 2, 4, …}`.
struct Likelihood {
    /// `(n_0, n_1)` in schedule order.
    counts: Vec<[f64; 2]>,
    /// `suffix[q]`: sum of the per-term maxima over terms `q..`.
    suffix: Vec<f64>,
}

impl Likelihood {
    fn new(counts: &[[f64; 2]]) -> Self {
        let term_max = |c: &[f64; 2]| {
            let n = c[0] + c[1];
            c.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * (v / n).ln())
                .sum::<f64>()
        };
        let mut suffix = vec![0.0; counts.len() + 1];
        for q in (0..counts.len()).rev() {
            suffix[q] = suffix[q + 1] + term_max(&counts[q]);
        }
        Self {
            counts: counts.to_vec(),
            suffix,
        }
    }

    #[inline(always)]
    fn term(c: &[f64; 2], sn: f64, cs: f64) -> f64 {
        let mut v = 0.0;
        if c[1] > 0.0 {
            v += c[1] * (sn * sn).ln();
        }
        if c[0] > 0.0 {
            v += c[0] * (cs * cs).ln();
        }
        v
    }

    fn exact(&self, theta: f64) -> f64 {
        let weights = std::iter::once(1.0).chain((0..).map(|i| (2u64 << i) as f64 + 1.0));
        self.counts
            .iter()
            .zip(weights)
            .map(|(c, w)| {
                let (sn, cs) = (w * theta).sin_cos();
                Self::term(c, sn, cs)
            })
            .sum()
    }

    /// Grid evaluation: angles `(2^(i+1) + 1)θ` come from repeated doubling
    /// and one angle addition. Returns `None` once the value provably lies
    /// below `threshold`.
    #[inline]
    fn scan(&self, theta: f64, threshold: f64) -> Option<f64> {
        let slack = 1e-9 * (threshold.abs() + 1.0);
        let (s1, c1) = theta.sin_cos();
        let mut acc = Self::term(&self.counts[0], s1, c1);
        // sin/cos of 2θ, 4θ, …
        let (mut sd, mut cd) = (2.0 * s1 * c1, 1.0 - 2.0 * s1 * s1);
        for q in 1..self.counts.len() {
            if acc + self.suffix[q] < threshold - slack {
                return None;
            }
            if q > 1 {
                let s = 2.0 * sd * cd;
                cd = 1.0 - 2.0 * sd * sd;
                sd = s;
            }
            let sn = sd * c1 + cd * s1;
            let cs = cd * c1 - sd * s1;
            acc += Self::term(&self.counts[q], sn, cs);
        }
        (acc >= threshold - slack).then_some(acc)
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `(clamp(x, l, u) - l) / (u - l)`.
pub fn clip_and_rescale(value: f64, upper: f64, lower: f64) -> Result<f64> {
    check_bounds(upper, lower)?;
    if value.is_nan() {
        return Err(MvsdeError::NonFiniteInput { what: "clip value" });
    }
    Ok((value.clamp(lower, upper) - lower) / (upper - lower))
}

/// Inverse of [`clip_and_rescale`] on `[0, 1]`: `est (u - l) + l`.
pub fn rescale(estimate: f64, upper: f64, lower: f64) -> Result<f64> {
    check_bounds(upper, lower)?;
    Ok(estimate * (upper - lower) + lower)
}

fn check_bounds(upper: f64, lower: f64) -> Result<()> {
    if !(upper > lower) || !upper.is_finite() || !lower.is_finite() {
        return Err(MvsdeError::param(
            "bounds",
            format!("need finite u > l, got u = {upper}, l = {lower}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_6;

    fn key(path: u64) -> StreamKey {
        StreamKey::new(11, path, 0, substream::QMCI)
    }

    #[test]
    fn schedule_shape() {
        let s = GroverSchedule::new(3, 30).unwrap();
        assert_eq!(s.powers(), vec![0, 1, 2, 4, 8]);
        assert_eq!(s.amplification_sum(), s.powers().iter().map(|j| 2 * j + 1).sum::<u64>());
        assert!(GroverSchedule::new(15, 1).is_err());
    }

    #[test]
    fn query_counts() {
        let q = |m, n, d| grover_query_count(&GroverSchedule::new(m, n).unwrap(), d).unwrap();
        assert_eq!(q(0, 1, 1), 4);
        assert_eq!(q(3, 0, 1), 0);
        assert_eq!(q(3, 30, 5), 5250);
        let explicit: u64 = [0u64, 1, 2, 4, 8].iter().map(|j| 2 * j + 1).sum::<u64>() * 30 * 5;
        assert_eq!(q(3, 30, 5), explicit);
        assert!(grover_query_count(&GroverSchedule::new(3, 30).unwrap(), 0).is_err());
    }

    #[test]
    fn degenerate_amplitudes() {
        let s = GroverSchedule::new(5, 30).unwrap();
        let zero = qmciml(0.0, &s, key(0)).unwrap();
        assert!(zero.counts.iter().all(|c| c[1] == 0));
        assert_eq!(zero.theta_hat, 0.0);
        assert_eq!(zero.estimate, 0.0);
        let one = qmciml(1.0, &s, key(0)).unwrap();
        assert_eq!(one.counts[0], [0, 30]);
        assert_abs_diff_eq!(one.theta_hat, FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(one.estimate, 1.0, epsilon = 1e-15);
        assert!(qmciml(1.2, &s, key(0)).is_err());
        assert!(qmciml(-0.1, &s, key(0)).is_err());
        assert!(qmciml(0.5, &GroverSchedule::new(2, 0).unwrap(), key(0)).is_err());
    }

    #[test]
    fn rejects_inconsistent_counts() {
        let s = GroverSchedule::new(1, 10).unwrap();
        assert!(mle_argmax(&[[10, 0], [10, 0]], &s).is_err());
        assert!(mle_argmax(&[[10, 0], [9, 0], [10, 0]], &s).is_err());
        assert!(mle_argmax(&[[0, 0]; 3], &GroverSchedule::new(1, 0).unwrap()).is_err());
    }

    #[test]
    fn boundary_maximisers() {
        let s = GroverSchedule::new(0, 20).unwrap();
        assert_eq!(mle_argmax(&[[20, 0], [20, 0]], &s).unwrap(), 0.0);
        let w = mle_argmax_weighted(&[[0.0, 20.0], [0.0, 0.0]], &s).unwrap();
        assert_abs_diff_eq!(w, FRAC_PI_2, epsilon = 1e-12);
    }

    fn expected_counts(theta: f64, s: &GroverSchedule, n: f64) -> Vec<[f64; 2]> {
        s.powers()
            .iter()
            .map(|&j| {
                let p = ((2 * j + 1) as f64 * theta).sin().powi(2);
                [n * (1.0 - p), n * p]
            })
            .collect()
    }

    #[test]
    fn expected_counts_recover_theta() {
        let s = GroverSchedule::new(6, 10_000).unwrap();
        let got = mle_argmax_weighted(&expected_counts(FRAC_PI_6, &s, 1e4), &s).unwrap();
        assert!((got - FRAC_PI_6).abs() < 0.01);
        // Agreement with a brute-force dense search.
        let ll = |t: f64| -> f64 {
            expected_counts(FRAC_PI_6, &s, 1e4)
                .iter()
                .zip(s.powers())
                .map(|(c, j)| {
                    let (sn, cs) = ((2 * j + 1) as f64 * t).sin_cos();
                    c[1] * (sn * sn).ln() + c[0] * (cs * cs).ln()
                })
                .sum()
        };
        let brute = (0..=400_000)
            .map(|i| i as f64 * FRAC_PI_2 / 400_000.0)
            .fold((0.0, f64::NEG_INFINITY), |b, t| if ll(t) > b.1 { (t, ll(t)) } else { b })
            .0;
        assert!((got - brute).abs() < 1e-5);
    }

    #[test]
    fn unbiased_with_exact_counts() {
        let s = GroverSchedule::new(8, 30).unwrap();
        for theta in [0.1, 0.5, 1.0, 1.4] {
            let got = mle_argmax_weighted(&expected_counts(theta, &s, 30.0), &s).unwrap();
            assert!((got - theta).abs() < 1e-8, "theta {theta} -> {got}");
        }
    }

    #[test]
    fn rmse_at_moderate_depth() {
        let s = GroverSchedule::new(8, 30).unwrap();
        let mu = 0.3;
        let mse = (0..100)
            .map(|r| (qmciml(mu, &s, key(r)).unwrap().estimate - mu).powi(2))
            .sum::<f64>()
            / 100.0;
        assert!(mse.sqrt() <= 0.01, "rmse {}", mse.sqrt());
    }

    #[test]
    fn deterministic_outcome() {
        let s = GroverSchedule::new(4, 30).unwrap();
        assert_eq!(qmciml(0.42, &s, key(3)).unwrap(), qmciml(0.42, &s, key(3)).unwrap());
    }

    #[test]
    fn clipping_endpoints_and_round_trip() {
        let (u, l) = (3.0, -1.0);
        assert_eq!(clip_and_rescale(l, u, l).unwrap(), 0.0);
        assert_eq!(clip_and_rescale(u, u, l).unwrap(), 1.0);
        assert_eq!(clip_and_rescale(1.0, u, l).unwrap(), 0.5);
        for x in [l - 1.0, 0.5 * (u + l), u + 1.0] {
            let back = rescale(clip_and_rescale(x, u, l).unwrap(), u, l).unwrap();
            assert_abs_diff_eq!(back, x.clamp(l, u), epsilon = 1e-15);
        }
        assert!(clip_and_rescale(0.0, 1.0, 1.0).is_err());
        assert!(rescale(0.5, 0.0, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn outcome_ranges(mu in 0.0f64..=1.0, m_g in 0u32..5, n_shot in 1u32..40, seed in any::<u64>()) {
            let s = GroverSchedule::new(m_g, n_shot).unwrap();
            let o = qmciml(mu, &s, StreamKey::new(seed, 0, 0, substream::QMCI)).unwrap();
            prop_assert!((0.0..=1.0).contains(&o.estimate));
            prop_assert!((0.0..=FRAC_PI_2).contains(&o.theta_hat));
            prop_assert!(o.counts.iter().all(|c| c[0] + c[1] == n_shot));
            prop_assert_eq!(o.counts.len(), m_g as usize + 2);
            prop_assert_eq!(o.grover_applications, grover_query_count(&s, 1).unwrap());
        }

        #[test]
        fn pruned_scan_matches_plain_scan(mu in 0.0f64..=1.0, m_g in 0u32..7, n_shot in 1u32..12, seed in any::<u64>()) {
            let s = GroverSchedule::new(m_g, n_shot).unwrap();
            let o = qmciml(mu, &s, StreamKey::new(seed, 1, 0, substream::QMCI)).unwrap();
            let w: Vec<[f64; 2]> = o.counts.iter().map(|c| [c[0] as f64, c[1] as f64]).collect();
            let lik = Likelihood::new(&w);
            let last = MLE_GRID_POINTS - 1;
            let plain = (0..MLE_GRID_POINTS)
                .map(|i| lik.exact(if i == last { FRAC_PI_2 } else { i as f64 * FRAC_PI_2 / last as f64 }))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lik.exact(o.theta_hat) >= plain - 1e-7 * (plain.abs() + 1.0));
        }
    }

    proptest! {
        #[test]
        fn query_cost_is_monotone(m_g in 0u32..14, n_shot in 1u32..100, depth in 1u64..100) {
            let q = |m, n, d| grover_query_count(&GroverSchedule::new(m, n).unwrap(), d).unwrap();
            prop_assert!(q(m_g + 1, n_shot, depth) > q(m_g, n_shot, depth));
            prop_assert!(q(m_g, n_shot + 1, depth) > q(m_g, n_shot, depth));
            prop_assert!(q(m_g, n_shot, depth + 1) > q(m_g, n_shot, depth));
        }

        #[test]
        fn clip_lands_in_unit_interval(x in -1e6f64..1e6, l in -10.0f64..10.0, w in 1e-3f64..10.0) {
            let v = clip_and_rescale(x, l + w, l).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
