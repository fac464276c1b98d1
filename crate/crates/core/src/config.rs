//! Experiment configuration: a TOML key-value schema covering the
//! integrator settings and the `model.*` table. Unknown keys are rejected
//! with the offending name; omitted keys take documented defaults.
//!
//! ```toml
//! name = "default"       # experiment label
//! dt = 0.001             # step size; omitted -> min(0.01, 0.1/gamma, 0.1/sqrt(alpha))
//! t_final = 10.0
//! n = 100                # particles
//! seed = 42
//! h = 1.0                # delay cut-off; `inf` for the full history
//! stride = 10            # output every stride steps
//! history = "windowed"   # or "full"
//!
//! [model]
//! d = 1
//! alpha = 1.0
//! gamma = 1.0
//! sigma = 1.0
//! potential = "quadratic"          # quadratic | quadratic+cosine | quartic
//! kappa = 0.0                      # ripple amplitude / quartic coefficient
//! box_radius = 6.0                 # audit box half-width
//! interaction = "none"             # none | quadratic | gaussian
//! interaction_strength = 0.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriftModel, ModelConfig};
use crate::simulator::{default_dt, HistoryPolicy, SimConfig};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub name: String,
    /// Omitted: derived from the model as min(0.01, 0.1/gamma, 0.1/sqrt(alpha)).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub t_final: f64,
    pub n: usize,
    pub seed: u64,
    /// Delay cut-off H; `inf` selects the full-history regime.
    pub h: f64,
    pub stride: usize,
    /// History retention: "windowed" or "full".
    pub history: String,
    pub model: ModelConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "default".into(),
            dt: None,
            t_final: 10.0,
            n: 100,
            seed: 42,
            h: 0.0,
            stride: 10,
            history: "windowed".into(),
            model: ModelConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization; `dump(load(x))` is the normal form of `x`.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.h.is_nan() || self.h < 0.0 {
            return Err(Error::Config(format!(
                "h must lie in [0, inf], got {}",
                self.h
            )));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Config(format!("dt must be positive, got {dt}")));
            }
        }
        match self.history.as_str() {
            "windowed" | "full" => {}
            other => {
                return Err(Error::Config(format!(
                    "history must be \"windowed\" or \"full\", got {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn history_policy(&self) -> HistoryPolicy {
        match self.history.as_str() {
            "full" => HistoryPolicy::Full,
            _ => HistoryPolicy::Windowed,
        }
    }

    pub fn build_model(&self) -> Result<DriftModel> {
        self.model.build(self.h)
    }

    /// The integrator configuration, with dt defaulted from the model.
    pub fn sim_config(&self, model: &DriftModel) -> Result<SimConfig> {
        let dt = self.dt.unwrap_or_else(|| default_dt(model));
        let cfg = SimConfig {
            dt,
            t_final: self.t_final,
            n: self.n,
            seed: self.seed,
            stride: self.stride,
            history: self.history_policy(),
            record_snapshots: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
