//! Least-squares line fits in log-log space.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MvsdeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FitModel {
    /// `y = c x^s` with free `s`.
    Power,
    /// `y = c x^s` with `s` given.
    FixedSlope(f64),
}

impl FitModel {
    /// `y = a / x²`.
    pub const INVERSE_SQUARE: Self = Self::FixedSlope(-2.0);
}

impl FromStr for FitModel {
    type Err = MvsdeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Self::Power),
            "inverse-square" => Ok(Self::INVERSE_SQUARE),
            "unit-slope" => Ok(Self::FixedSlope(1.0)),
            _ => Err(MvsdeError::Unknown {
                kind: "fit model",
                name: s.to_owned(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    /// Natural-log intercept.
    pub intercept: f64,
    pub r2: f64,
}

impl LogLogFit {
    /// Prefactor `c = exp(intercept)`.
    pub fn coefficient(&self) -> f64 {
        self.intercept.exp()
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.coefficient() * x.powf(self.slope)
    }
}

/// Fits `log y = intercept + slope · log x`.
pub fn fit_loglog_slope(points: &[(f64, f64)], model: FitModel) -> Result<LogLogFit> {
    if points.len() < 2 {
        return Err(MvsdeError::param("points", "at least two points are required"));
    }
    if points
        .iter()
        .any(|&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite())
    {
        return Err(MvsdeError::param("points", "coordinates must be positive and finite"));
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = points.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;

    let slope = match model {
        FitModel::Power => {
            let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
            if sxx == 0.0 {
                return Err(MvsdeError::param("points", "all x values coincide"));
            }
            let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
            sxy / sxx
        }
        FitModel::FixedSlope(s) => s,
    };
    let intercept = my - slope * mx;

    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(LogLogFit { slope, intercept, r2 })
}
