//! Run configuration files.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::contraction::VerifySettings;
use crate::controller::{state_from_errors, ControllerConfig, ControllerSpec, ErrorCoords, Reference, SinusoidReference};
use crate::error::{Error, Result};
use crate::fjr::{FjrModel, FjrParams};
use crate::ph::State;
use crate::sim::{SimConfig, DEFAULT_DT, DEFAULT_T_END};

/// How the initial link offset is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    /// Robot at rest with unloaded springs, links displaced from the reference.
    #[default]
    Rest,
    /// Link position error only; every other error coordinate is zero.
    Errors,
}

impl InitialCondition {
    pub fn label(self) -> &'static str {
        match self {
            InitialCondition::Rest => "rest",
            InitialCondition::Errors => "errors",
        }
    }
}

/// Scalars of the `[sim]` section; times in s, angles in rad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub log_stride: usize,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Initial link position error per joint.
    pub link_offset: Vec<f64>,
    /// Standard deviation of the measurement noise on positions and momenta.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub noise_seed: u64,
}

fn default_t_end() -> f64 {
    DEFAULT_T_END
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Root directory for run folders; the environment and `--out` take precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<String>,
    /// Base name of the written files; defaults to the config file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub robot: FjrParams,
    pub controller: ControllerConfig,
    pub sim: SimSection,
    pub reference: SinusoidReference,
    #[serde(default)]
    pub output: OutputSection,
    /// Certificates are computed alongside a simulation when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySettings>,
}

/// Validated objects built from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: FjrModel,
    pub spec: ControllerSpec,
    pub reference: SinusoidReference,
    pub sim: SimConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::param("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::param("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    pub fn build(&self) -> Result<Experiment> {
        let model = FjrModel::new(self.robot.clone())?;
        let n = model.n_joints();
        let spec = ControllerSpec::from_config(&self.controller, n)?;
        self.reference.validate(n)?;
        if let Some(v) = &self.verify {
            v.validate()?;
        }
        let s = &self.sim;
        if s.link_offset.len() != n {
            return Err(Error::param(
                "sim.link_offset",
                format!("expected {n} entries, got {}", s.link_offset.len()),
            ));
        }
        let offset = DVector::from_column_slice(&s.link_offset);
        let initial = match s.initial {
            InitialCondition::Rest => {
                let q_l = self.reference.position(0.0) + offset;
                State::from_blocks(&q_l, &q_l, &DVector::zeros(n), &DVector::zeros(n))
            }
            InitialCondition::Errors => {
                state_from_errors(&model, &spec, &self.reference, &ErrorCoords::link_offset(&offset), 0.0)?
            }
        };
        let mut sim = SimConfig::new(initial, s.t_end);
        sim.dt = s.dt;
        sim.log_stride = s.log_stride;
        sim.noise_std = s.noise_std;
        sim.noise_seed = s.noise_seed;
        sim.validate().map_err(|e| match e {
            Error::InvalidParameter { key, reason } => Error::param(format!("sim.{key}"), reason),
            other => other,
        })?;
        Ok(Experiment {
            model,
            spec,
            reference: self.reference.clone(),
            sim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[robot]
link_masses = [1.510, 0.873]
link_inertias = [0.0392, 0.00808]
link_lengths = [0.343, 0.267]
link_com = [0.159, 0.055]
motor_masses = [0.23, 0.01]
link_damping = [0.8, 0.55]
motor_damping = [0.2, 90.0]
stiffness = [9.0, 4.0]

[controller]
phi_kind = "PHI2_LINEAR"
lambda_l = [55.0, 30.0]
lambda_m = [70.0, 60.0]
kd_l = [15.0, 10.0]
kd_m = [10.0, 5.0]

[sim]
t_end = 1.0
link_offset = [0.3, 0.3]

[reference]
amplitude = [1.0, 1.0]
frequency = [1.0, 1.0]
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let e = cfg.build().unwrap();
        assert_eq!(e.sim.dt, DEFAULT_DT);
        assert_eq!(e.sim.initial_state.q_l()[0], 0.3);
        assert_eq!(e.spec.lambda_l[(0, 0)], 55.0);
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_section_is_named() {
        let text = SAMPLE.replace("[controller]", "[unused]");
        let err = RunConfig::from_toml_str(&text).unwrap_err().to_string();
        assert!(err.contains("controller"), "{err}");
    }

    #[test]
    fn bad_offset_length() {
        let text = SAMPLE.replace("link_offset = [0.3, 0.3]", "link_offset = [0.3]");
        let err = RunConfig::from_toml_str(&text).unwrap().build().unwrap_err();
        assert!(err.to_string().contains("link_offset"));
    }
}
