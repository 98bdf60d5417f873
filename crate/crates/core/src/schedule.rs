//! Two-stage time grid and the piecewise extrapolant of the coupled means.
//!
//! Stage I takes `n_t_I = h_II/h_I` steps of size `h_I` with constant
//! extrapolation; stage II takes `n_t_II = T/h_II - 1` steps of size `h_II`
//! with linear extrapolation through the two latest estimates.

use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};

/// Relative tolerance used when checking that a ratio of step sizes is an
/// integer.
const RATIO_TOL: f64 = 1e-9;

fn integer_ratio(num: f64, den: f64) -> Option<u64> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= RATIO_TOL * r.max(1.0) && n >= 1.0).then_some(n as u64)
}

/// `⌈x⌉`, treating values within rounding noise of an integer as that integer.
fn ceil_tol(x: f64) -> f64 {
    let n = x.round();
    if (x - n).abs() <= RATIO_TOL * x.abs().max(1.0) {
        n
    } else {
        x.ceil()
    }
}

/// Nearest admissible step sizes not larger than the requested ones:
/// `h_II' = T / max(⌈T/h_II⌉, 2)` and `h_I' = h_II' / ⌈h_II'/h_I⌉`.
pub fn repair_steps(horizon: f64, h_i: f64, h_ii: f64) -> Result<(f64, f64)> {
    for (name, v) in [("T", horizon), ("h_I", h_i), ("h_II", h_ii)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(MvsdeError::param(name, "must be positive and finite"));
        }
    }
    let h_ii = horizon / ceil_tol(horizon / h_ii).max(2.0);
    let h_i = h_ii / ceil_tol(h_ii / h_i).max(1.0);
    Ok((h_i, h_ii))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub horizon: f64,
    pub h_i: f64,
    pub h_ii: f64,
    pub n_t_i: usize,
    pub n_t_ii: usize,
    pub n_t: usize,
    /// `t_0, …, t_{n_t}`.
    pub grid: Vec<f64>,
    /// `h_0, …, h_{n_t - 1}`.
    pub steps: Vec<f64>,
}

impl StepSchedule {
    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.grid[i]
    }

    #[inline]
    pub fn h(&self, i: usize) -> f64 {
        self.steps[i]
    }

    /// True for steps taken with constant extrapolation.
    #[inline]
    pub fn in_first_stage(&self, i: usize) -> bool {
        i < self.n_t_i
    }
}

/// Builds the grid `t_i = i h_I` for `i ≤ n_t_I`, then
/// `t_i = (i - n_t_I + 1) h_II`. Rejects step sizes that do not divide.
pub fn build_schedule(horizon: f64, h_i: f64, h_ii: f64) -> Result<StepSchedule> {
    let (sug_i, sug_ii) = repair_steps(horizon, h_i, h_ii)?;
    let fail = |reason: String| MvsdeError::Schedule {
        reason,
        suggested_h_i: sug_i,
        suggested_h_ii: sug_ii,
    };
    let n_t_i = integer_ratio(h_ii, h_i)
        .ok_or_else(|| fail(format!("h_II/h_I = {} is not a positive integer", h_ii / h_i)))?
        as usize;
    let blocks = integer_ratio(horizon, h_ii)
        .filter(|&b| b >= 2)
        .ok_or_else(|| fail(format!("T/h_II - 1 = {} is not a positive integer", horizon / h_ii - 1.0)))?
        as usize;
    let n_t_ii = blocks - 1;
    let n_t = n_t_i + n_t_ii;

    let mut grid = Vec::with_capacity(n_t + 1);
    grid.extend((0..n_t_i).map(|i| i as f64 * h_i));
    grid.extend((n_t_i..n_t).map(|i| (i - n_t_i + 1) as f64 * h_ii));
    grid.push(horizon);
    let steps = (0..n_t)
        .map(|i| if i < n_t_i { h_i } else { h_ii })
        .collect();

    Ok(StepSchedule {
        horizon,
        h_i,
        h_ii,
        n_t_i,
        n_t_ii,
        n_t,
        grid,
        steps,
    })
}

/// Append-only table of estimates `γ̂_{k,i}`; row 0 holds `φ_k(X_0)`.
/// Slopes are derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaHistory {
    k: usize,
    rows: Vec<Vec<f64>>,
}

impl GammaHistory {
    pub fn new(initial: Vec<f64>) -> Result<Self> {
        if initial.is_empty() {
            return Err(MvsdeError::param("gamma", "basis size must be at least 1"));
        }
        let mut h = Self {
            k: initial.len(),
            rows: Vec::new(),
        };
        h.push(initial)?;
        Ok(h)
    }

    pub fn basis_size(&self) -> usize {
        self.k
    }

    /// Number of filled rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.k {
            return Err(MvsdeError::param(
                "gamma",
                format!("expected {} entries, got {}", self.k, row.len()),
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(MvsdeError::NonFiniteInput { what: "gamma estimate" });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.rows.get(i).map(Vec::as_slice)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn estimate(&self, k: usize, i: usize) -> Result<f64> {
        self.check_k(k)?;
        self.rows
            .get(i)
            .map(|r| r[k])
            .ok_or_else(|| MvsdeError::param("j", format!("row {i} not yet filled")))
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k >= self.k {
            return Err(MvsdeError::param("k", format!("index {k} out of range for K = {}", self.k)));
        }
        Ok(())
    }

    /// `γ̂'_{k,j}`: zero in stage I, the difference to row 0 at `j = n_t_I`,
    /// and the backward difference afterwards, all divided by `h_II`.
    pub fn slope_at(&self, k: usize, j: usize, schedule: &StepSchedule) -> Result<f64> {
        let cur = self.estimate(k, j)?;
        let n1 = schedule.n_t_i;
        Ok(if j < n1 {
            0.0
        } else if j == n1 {
            (cur - self.rows[0][k]) / schedule.h_ii
        } else {
            (cur - self.rows[j - 1][k]) / schedule.h_ii
        })
    }

    /// Index `j ≤ i` of the segment `[t_j, t_{j+1})` containing `t`; the
    /// last segment `[t_i, t_{i+1}]` is closed.
    pub fn segment(&self, i: usize, t: f64, schedule: &StepSchedule) -> Result<usize> {
        if i >= schedule.n_t {
            return Err(MvsdeError::param("i", format!("step {i} beyond n_t = {}", schedule.n_t)));
        }
        let end = schedule.grid[i + 1];
        if !(0.0..=end).contains(&t) {
            return Err(MvsdeError::OutOfDomain { t, end });
        }
        // Number of grid points t_1..t_i that are ≤ t.
        let j = schedule.grid[1..=i].partition_point(|&s| s <= t);
        Ok(j)
    }

    /// `γ̃_{k,i}(t) = γ̂'_{k,j}(t - t_j) + γ̂_{k,j}` on the segment `j` holding `t`.
    pub fn extrapolate(&self, i: usize, k: usize, t: f64, schedule: &StepSchedule) -> Result<f64> {
        self.check_k(k)?;
        if i >= self.rows.len() {
            return Err(MvsdeError::param("i", format!("row {i} not yet filled")));
        }
        let j = self.segment(i, t, schedule)?;
        Ok(self.slope_at(k, j, schedule)? * (t - schedule.grid[j]) + self.rows[j][k])
    }

    /// Anchor values and slopes of segment `i`, i.e. the coefficients of
    /// `γ̃_{·,i}` on `[t_i, t_{i+1}]`.
    pub fn segment_coefficients(&self, i: usize, schedule: &StepSchedule) -> Result<(Vec<f64>, Vec<f64>)> {
        let anchor = self
            .row(i)
            .ok_or_else(|| MvsdeError::param("i", format!("row {i} not yet filled")))?
            .to_vec();
        let slopes = (0..self.k)
            .map(|k| self.slope_at(k, i, schedule))
            .collect::<Result<Vec<_>>>()?;
        Ok((anchor, slopes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn two_stage_grid() {
        let s = build_schedule(2.0, 0.25, 0.5).unwrap();
        assert_eq!((s.n_t_i, s.n_t_ii, s.n_t), (2, 3, 5));
        assert_eq!(s.grid, vec![0.0, 0.25, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(s.steps, vec![0.25, 0.25, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn minimal_grid() {
        let s = build_schedule(2.0, 1.0, 1.0).unwrap();
        assert_eq!((s.n_t_i, s.n_t_ii, s.n_t), (1, 1, 2));
        assert_eq!(s.grid, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn non_integral_ratio_suggests_repair() {
        match build_schedule(2.0, 0.3, 0.5) {
            Err(MvsdeError::Schedule {
                suggested_h_i,
                suggested_h_ii,
                ..
            }) => {
                assert_abs_diff_eq!(suggested_h_ii, 0.5, epsilon = 1e-15);
                assert_abs_diff_eq!(suggested_h_i, 0.25, epsilon = 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_schedule(2.0, 1.0, 2.0).is_err());
        assert!(build_schedule(2.0, 0.5, 0.8).is_err());
    }

    #[test]
    fn repair_rule() {
        let (hi, hii) = repair_steps(2.0, 0.3, 0.5).unwrap();
        assert_eq!((hi, hii), (0.25, 0.5));
        let (_, hii) = repair_steps(2.0, 0.1, 5.0).unwrap();
        assert_eq!(hii, 1.0);
        let (hi, hii) = repair_steps(2.0, 1.0 / 128.0, 0.125).unwrap();
        assert_eq!((hi, hii), (1.0 / 128.0, 0.125));
        let (hi, hii) = repair_steps(2.0, 1.0 / 16.0, 0.5 * 0.5f64.sqrt()).unwrap();
        assert_abs_diff_eq!(hii, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(hi, 1.0 / 18.0, epsilon = 1e-15);
    }

    fn history(rows: &[&[f64]]) -> GammaHistory {
        let mut h = GammaHistory::new(rows[0].to_vec()).unwrap();
        for r in &rows[1..] {
            h.push(r.to_vec()).unwrap();
        }
        h
    }

    #[test]
    fn slope_cases() {
        let s = build_schedule(2.0, 0.25, 0.5).unwrap();
        let h = history(&[&[1.0], &[0.9], &[0.8], &[0.7]]);
        assert_eq!(h.slope_at(0, 0, &s).unwrap(), 0.0);
        assert_eq!(h.slope_at(0, 1, &s).unwrap(), 0.0);
        assert_abs_diff_eq!(h.slope_at(0, 2, &s).unwrap(), -0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(h.slope_at(0, 3, &s).unwrap(), -0.2, epsilon = 1e-15);
        assert!(h.slope_at(0, 4, &s).is_err());
        assert!(h.slope_at(1, 0, &s).is_err());
    }

    #[test]
    fn constant_history_has_flat_slopes() {
        let s = build_schedule(2.0, 0.25, 0.5).unwrap();
        let h = history(&[&[0.3, 1.0][..]; 6]);
        for j in 0..6 {
            for k in 0..2 {
                assert_eq!(h.slope_at(k, j, &s).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn extrapolation_values() {
        let s = build_schedule(2.0, 0.25, 0.5).unwrap();
        let h = history(&[&[1.0], &[0.9], &[0.8], &[0.6]]);
        // Anchors.
        for j in 0..4 {
            assert_eq!(h.extrapolate(3, 0, s.t(j), &s).unwrap(), h.estimate(0, j).unwrap());
        }
        // Stage I is piecewise constant.
        assert_eq!(h.extrapolate(3, 0, 0.1, &s).unwrap(), 1.0);
        assert_eq!(h.extrapolate(3, 0, 0.3, &s).unwrap(), 0.9);
        // Stage II: 0.6 + (-0.4)(0.25).
        assert_abs_diff_eq!(h.extrapolate(3, 0, 1.25, &s).unwrap(), 0.5, epsilon = 1e-15);
        // Closed right end of the current segment.
        assert_abs_diff_eq!(h.extrapolate(3, 0, 1.5, &s).unwrap(), 0.4, epsilon = 1e-15);
        assert!(matches!(
            h.extrapolate(3, 0, 1.51, &s),
            Err(MvsdeError::OutOfDomain { .. })
        ));
        assert!(h.extrapolate(3, 0, -0.01, &s).is_err());
        assert!(h.extrapolate(4, 0, 0.0, &s).is_err());
    }

    #[test]
    fn shared_endpoints_belong_to_the_right_segment() {
        let s = build_schedule(2.0, 0.25, 0.5).unwrap();
        let h = history(&[&[1.0], &[0.9], &[0.8], &[0.6], &[0.5]]);
        assert_eq!(h.segment(4, 0.25, &s).unwrap(), 1);
        assert_eq!(h.segment(4, 1.0, &s).unwrap(), 3);
        assert_eq!(h.segment(4, 2.0, &s).unwrap(), 4);
        assert_eq!(h.segment(2, 1.0, &s).unwrap(), 2);
    }

    #[test]
    fn linear_truth_is_reproduced_in_stage_two() {
        let s = build_schedule(2.0, 0.125, 0.5).unwrap();
        let g = |t: f64| 0.7 - 0.3 * t;
        let mut h = GammaHistory::new(vec![g(0.0)]).unwrap();
        for i in 1..s.n_t {
            h.push(vec![g(s.t(i))]).unwrap();
        }
        let i = s.n_t - 1;
        let mut t = s.t(s.n_t_i);
        while t <= 2.0 {
            assert_abs_diff_eq!(h.extrapolate(i, 0, t, &s).unwrap(), g(t), epsilon = 1e-14);
            t += 0.01;
        }
    }

    #[test]
    fn constant_extrapolation_error_peaks_at_segment_end() {
        let s = build_schedule(2.0, 0.125, 0.5).unwrap();
        let g = |t: f64| (-t).exp();
        let mut h = GammaHistory::new(vec![1.0]).unwrap();
        for i in 1..=s.n_t_i {
            h.push(vec![g(s.t(i))]).unwrap();
        }
        for j in 0..s.n_t_i {
            let (a, b) = (s.t(j), s.t(j + 1));
            let end_err = (g(a) - g(b)).abs();
            for q in 0..=20 {
                let t = a + (b - a) * q as f64 / 20.0;
                let err = (h.extrapolate(s.n_t_i, 0, t, &s).unwrap() - g(t)).abs();
                assert!(err <= end_err + 1e-15);
            }
        }
    }

    proptest! {
        #[test]
        fn grid_invariants(horizon in 0.5f64..5.0, blocks in 2usize..20, ratio in 1usize..20) {
            let h_ii = horizon / blocks as f64;
            let h_i = h_ii / ratio as f64;
            let s = build_schedule(horizon, h_i, h_ii).unwrap();
            prop_assert_eq!(s.n_t, ratio + blocks - 1);
            prop_assert_eq!(s.grid.len(), s.n_t + 1);
            prop_assert_eq!(s.grid[0], 0.0);
            prop_assert_eq!(s.grid[s.n_t], horizon);
            for i in 0..s.n_t {
                prop_assert!(s.grid[i + 1] > s.grid[i]);
                prop_assert!((s.grid[i + 1] - s.grid[i] - s.steps[i]).abs() < 1e-12 * horizon);
            }
        }

        #[test]
        fn repaired_steps_always_build(horizon in 0.1f64..10.0, h_i in 0.001f64..1.0, h_ii in 0.001f64..5.0) {
            let (a, b) = repair_steps(horizon, h_i, h_ii).unwrap();
            prop_assert!(b <= h_ii * (1.0 + 1e-9) || b == horizon / 2.0);
            prop_assert!(a <= h_i * (1.0 + 1e-9) || a == b);
            prop_assert!(build_schedule(horizon, a, b).is_ok());
        }

        #[test]
        fn segments_partition(ratio in 1usize..6, blocks in 2usize..6, i_frac in 0.0f64..1.0, u in 0.0f64..1.0) {
            let s = build_schedule(1.0, 1.0 / (blocks * ratio) as f64, 1.0 / blocks as f64).unwrap();
            let i = ((s.n_t as f64 - 1.0) * i_frac) as usize;
            let h = history(&vec![&[0.0][..]; i + 1]);
            let t = u * s.t(i + 1);
            let j = h.segment(i, t, &s).unwrap();
            prop_assert!(j <= i);
            prop_assert!(s.t(j) <= t);
            prop_assert!(t < s.t(j + 1) || (j == i && t <= s.t(i + 1)));
        }
    }
}
