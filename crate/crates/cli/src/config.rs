use std::fs;
use std::path::Path;

use entop_core::opalg::ComplexVector;
use entop_core::operators::product_ket;
use entop_core::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

/// One scenario: an operator, an input state, a phase grid and the
/// acquisition parameters.  Unknown keys are rejected so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub operator_spec: String,
    /// Ket tokens such as "HH", or explicit amplitudes as [re, im] pairs.
    /// Optional for `decompose` and `qpt`, which never touch a state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_state: Option<InputState>,
    #[serde(default = "default_phi_list")]
    pub phi_list: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_counts")]
    pub counts_per_setting: f64,
    #[serde(default = "default_true")]
    pub poisson: bool,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Artifact selectors ("state", "counts", "chi", "truthTable").
    /// Omitted means every artifact the command knows how to emit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NoiseConfig {
    /// Phase-noise width per source, in radians.
    pub sigma: f64,
    #[serde(default = "default_one")]
    pub source_count: usize,
    /// Analytic Gaussian averaging when true, per-shot sampling when false.
    #[serde(default = "default_true")]
    pub analytic: bool,
    /// Shots for sampled averaging; ignored in analytic mode.
    #[serde(default = "default_shots")]
    pub shots: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputState {
    Tokens(String),
    Amplitudes(Vec<[f64; 2]>),
}

fn default_phi_list() -> Vec<f64> {
    vec![0.0]
}

fn default_counts() -> f64 {
    1.0e4
}

fn default_true() -> bool {
    true
}

fn default_repeats() -> usize {
    100
}

fn default_one() -> usize {
    1
}

fn default_shots() -> usize {
    4096
}

impl InputState {
    /// Builds the normalized input ket, checking the dimension against the
    /// operator's party count.  Explicit amplitude lists must already be
    /// normalized to within 1e-6; the residual rounding is then divided out.
    pub fn to_ket(&self, dim: usize) -> Result<ComplexVector, AppError> {
        match self {
            InputState::Tokens(tokens) => {
                let ket = product_ket(tokens)?;
                if ket.dim() != dim {
                    return Err(AppError::Config(format!(
                        "inputState {tokens:?} has dimension {}, operator needs {dim}",
                        ket.dim()
                    )));
                }
                Ok(ket)
            }
            InputState::Amplitudes(entries) => {
                if entries.len() != dim {
                    return Err(AppError::Config(format!(
                        "inputState lists {} amplitudes, operator needs {dim}",
                        entries.len()
                    )));
                }
                let mut ket = ComplexVector::zeros(dim);
                for (i, [re, im]) in entries.iter().enumerate() {
                    if !re.is_finite() || !im.is_finite() {
                        return Err(AppError::Config(format!("amplitude {i} is not finite")));
                    }
                    ket[i] = C64::new(*re, *im);
                }
                let norm = ket.norm();
                if (norm - 1.0).abs() > 1.0e-6 {
                    return Err(AppError::Config(format!(
                        "inputState amplitudes have norm {norm:.9}, expected 1"
                    )));
                }
                Ok(ket.scaled(C64::new(1.0 / norm, 0.0)))
            }
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ScenarioConfig = serde_json::from_str(&text)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "._-".contains(c))
        {
            return Err(AppError::Config(format!(
                "name {:?} must be nonempty and use only [A-Za-z0-9._-]",
                self.name
            )));
        }
        if self.phi_list.is_empty() || self.phi_list.iter().any(|p| !p.is_finite()) {
            return Err(AppError::Config("phiList must be a nonempty list of finite phases".into()));
        }
        if !self.counts_per_setting.is_finite() || self.counts_per_setting <= 0.0 {
            return Err(AppError::Config(format!(
                "countsPerSetting must be positive, got {}",
                self.counts_per_setting
            )));
        }
        if self.repeats == 0 {
            return Err(AppError::Config("repeats must be at least 1".into()));
        }
        if let Some(noise) = &self.noise {
            if !noise.sigma.is_finite() || noise.sigma < 0.0 {
                return Err(AppError::Config(format!(
                    "noise.sigma must be nonnegative, got {}",
                    noise.sigma
                )));
            }
            if noise.source_count == 0 {
                return Err(AppError::Config("noise.sourceCount must be at least 1".into()));
            }
            if noise.shots == 0 {
                return Err(AppError::Config("noise.shots must be at least 1".into()));
            }
        }
        if let Some(outputs) = &self.outputs {
            for token in outputs {
                if !matches!(token.as_str(), "state" | "counts" | "chi" | "truthTable") {
                    return Err(AppError::Config(format!(
                        "unknown outputs entry {token:?}; expected state, counts, chi or truthTable"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when any part of the run draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        self.poisson
            || self.noise.as_ref().is_some_and(|n| n.sigma > 0.0 && !n.analytic)
    }

    pub fn wants(&self, artifact: &str) -> bool {
        match &self.outputs {
            None => true,
            Some(list) => list.iter().any(|t| t == artifact),
        }
    }
}
