//! JSON configuration with environment and command-line overrides.
//!
//! Precedence, lowest first: built-in defaults, the config file, `MVSDE_*`
//! environment variables, command-line flags. An environment variable names
//! a field path with `__` between levels, e.g. `MVSDE_SWEEP__REPETITIONS=3`
//! or `MVSDE_RUN__EMULATION__N_PARTICLES=1000`. Its value is parsed as JSON
//! and taken as a string if that fails.

use std::path::{Path, PathBuf};

use mvsde_core::{
    builtin_problem, experiment_params, EmulatedRunParams, MvsdeProblem, QmciMode, SchemeKind,
    VarianceReduction, DEFAULT_PARTICLES,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

pub const ENV_PREFIX: &str = "MVSDE_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: String,
    pub x0: f64,
    pub seed: u64,
    pub scheme: SchemeKind,
    pub out_dir: PathBuf,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub weak_order: WeakOrderSection,
    pub lemma: LemmaSection,
    pub params: ParamsSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: "shimizu_yamada".into(),
            x0: 1.0,
            seed: 42,
            scheme: SchemeKind::Sri1w1,
            out_dir: PathBuf::from("out"),
            run: RunSection::default(),
            sweep: SweepSection::default(),
            weak_order: WeakOrderSection::default(),
            lemma: LemmaSection::default(),
            params: ParamsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Emulated,
    Particle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: Method,
    /// Auxiliary accuracy selecting the experiment parameters.
    pub eps: f64,
    pub emulation: EmulationOverrides,
    /// Step of the particle method.
    pub particle_h: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: Method::Emulated,
            eps: 1.0 / 16.0,
            emulation: EmulationOverrides::default(),
            particle_h: 0.01,
        }
    }
}

/// Replacements for individual experiment parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmulationOverrides {
    pub h_i: Option<f64>,
    pub h_ii: Option<f64>,
    pub n_particles: Option<usize>,
    pub m_g: Option<u32>,
    pub n_shot: Option<u32>,
    pub clip_center: Option<f64>,
    pub clip_center_decay: Option<f64>,
    pub clip_width_sigmas: Option<f64>,
    pub qmci_mode: Option<QmciMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps_list: Vec<f64>,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            eps_list: vec![0.5, 0.25, 0.125, 0.0625, 0.03125],
            repetitions: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceChoice {
    /// Plain sampling for Euler, a coupled reference for SRI1W1.
    #[default]
    Auto,
    None,
    CoupledReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakOrderSection {
    pub horizon: f64,
    pub y0: f64,
    pub h_list: Vec<f64>,
    pub n_paths: usize,
    /// Test function `y^moment`, 1 or 2.
    pub moment: u32,
    pub variance_reduction: VarianceChoice,
    pub refinement: usize,
}

impl Default for WeakOrderSection {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            y0: 1.0,
            h_list: vec![0.2, 0.1, 0.05],
            n_paths: 1_000_000,
            moment: 2,
            variance_reduction: VarianceChoice::Auto,
            refinement: 8,
        }
    }
}

impl WeakOrderSection {
    pub fn variance_reduction(&self, scheme: SchemeKind) -> VarianceReduction {
        let coupled = VarianceReduction::CoupledReference {
            refinement: self.refinement,
        };
        match (self.variance_reduction, scheme) {
            (VarianceChoice::None, _) | (VarianceChoice::Auto, SchemeKind::Euler) => VarianceReduction::None,
            _ => coupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaSection {
    pub delta: Vec<f64>,
    pub t: Vec<f64>,
    pub lipschitz: f64,
    pub n_paths: usize,
    pub h: f64,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            delta: vec![0.01, 0.05],
            t: vec![0.25, 0.5],
            lipschitz: 1.0,
            n_paths: 1_000_000,
            h: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub epsilon: f64,
    pub eta: f64,
    pub u: f64,
    pub kappa_prime: f64,
    pub p: f64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            eta: 0.05,
            u: 2.0,
            kappa_prime: 1.0,
            p: 2.0,
        }
    }
}

/// Resolved settings of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub model: String,
    pub x0: f64,
    pub eps_list: Vec<f64>,
    pub repetitions: usize,
    pub overrides: EmulationOverrides,
    pub seed_base: u64,
    pub scheme: SchemeKind,
    pub out_dir: PathBuf,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(CliError::config("sweep.eps_list is empty"));
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(CliError::config(format!("sweep.eps_list entry {e} is outside (0, 1]")));
        }
        if self.repetitions < 2 {
            return Err(CliError::config("sweep.repetitions must be at least 2 for an RMSE"));
        }
        Ok(())
    }
}

/// Command-line values that take precedence over file and environment.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub scheme: Option<SchemeKind>,
    pub model: Option<String>,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    /// Reads `path` (or starts from defaults), then applies `env` and
    /// `flags`.
    pub fn load<I>(path: Option<&Path>, env: I, flags: &FlagOverrides) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        let mut cfg = base.with_env(env)?;
        if let Some(s) = flags.seed {
            cfg.seed = s;
        }
        if let Some(o) = &flags.out_dir {
            cfg.out_dir = o.clone();
        }
        if let Some(s) = flags.scheme {
            cfg.scheme = s;
        }
        if let Some(m) = &flags.model {
            cfg.model = m.clone();
        }
        Ok(cfg)
    }

    pub fn with_env<I>(self, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut doc = serde_json::to_value(&self)?;
        let mut vars: Vec<_> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        vars.sort();
        for (key, raw) in vars {
            let path: Vec<&str> = key.split("__").collect();
            let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
            set_path(&mut doc, &path, value).map_err(|e| CliError::config(format!("{ENV_PREFIX}{}: {e}", key.to_ascii_uppercase())))?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn problem(&self) -> Result<MvsdeProblem> {
        Ok(builtin_problem(&self.model, self.x0)?)
    }

    /// Experiment parameters for `eps` with the configured overrides.
    pub fn emulated_params(&self, problem: &MvsdeProblem, eps: f64, seed: u64) -> Result<EmulatedRunParams> {
        resolve_params(problem, self.x0, eps, seed, self.scheme, &self.run.emulation)
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            model: self.model.clone(),
            x0: self.x0,
            eps_list: self.sweep.eps_list.clone(),
            repetitions: self.sweep.repetitions,
            overrides: self.run.emulation.clone(),
            seed_base: self.seed,
            scheme: self.scheme,
            out_dir: self.out_dir.clone(),
        }
    }

    pub fn particle_count(&self) -> usize {
        self.run.emulation.n_particles.unwrap_or(DEFAULT_PARTICLES)
    }
}

pub(crate) fn resolve_params(
    problem: &MvsdeProblem,
    x0: f64,
    eps: f64,
    seed: u64,
    scheme: SchemeKind,
    o: &EmulationOverrides,
) -> Result<EmulatedRunParams> {
    let mut p = experiment_params(eps, problem.horizon(), x0)?;
    p.seed = seed;
    p.scheme = scheme;
    p.h_i = o.h_i.unwrap_or(p.h_i);
    p.h_ii = o.h_ii.unwrap_or(p.h_ii);
    p.n_particles = o.n_particles.unwrap_or(p.n_particles);
    p.m_g = o.m_g.unwrap_or(p.m_g);
    p.n_shot = o.n_shot.unwrap_or(p.n_shot);
    p.clip_center = o.clip_center.unwrap_or(p.clip_center);
    p.clip_center_decay = o.clip_center_decay.unwrap_or(p.clip_center_decay);
    p.clip_width_sigmas = o.clip_width_sigmas.unwrap_or(p.clip_width_sigmas);
    p.qmci_mode = o.qmci_mode.unwrap_or(p.qmci_mode);
    Ok(p)
}

fn set_path(doc: &mut Value, path: &[&str], value: Value) -> std::result::Result<(), String> {
    let (last, parents) = path.split_last().ok_or("empty key")?;
    let mut node = doc;
    for key in parents {
        node = node
            .get_mut(*key)
            .filter(|v| v.is_object())
            .ok_or_else(|| format!("no section `{key}`"))?;
    }
    let obj = node.as_object_mut().ok_or("not a section")?;
    if !obj.contains_key(*last) {
        return Err(format!("no field `{last}`"));
    }
    // Strings that look like numbers stay strings where a string is expected.
    let value = match (&obj[*last], value) {
        (Value::String(_), v @ Value::Number(_)) => Value::String(v.to_string()),
        (_, v) => v,
    };
    obj.insert((*last).to_owned(), value);
    Ok(())
}
