//! Run configuration for the CLI workflows.
//!
//! A single JSON document drives every command. Omitted fields fall back
//! to the experiment defaults (prediction hyperparameters, forecast-error
//! boxes, device bounds, scenario counts); unknown keys are rejected so
//! typos fail loudly.

use crate::controller::ControllerConfig;
use crate::data::DdpHyper;
use crate::planner::PlannerConfig;
use crate::qp::QpSettings;
use crate::sim::ess::EssParams;
use crate::sim::market::Prices;
use crate::sim::plant::PlantParams;
use crate::sim::signals::{AgcModel, WeatherModel};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which operating scheme a simulation runs.
///
/// `A`: predictive building controller + battery jointly provide the
/// grid service. `B`: default thermostat building, battery alone provides
/// the service. `C`: thermostat only, no market participation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    A,
    B,
    C,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerSection {
    pub horizon: usize,
    pub t_init: usize,
    pub data_len: usize,
    pub reg_weight: f64,
    pub n_scen: usize,
    pub w_base: f64,
    pub rho_slack: f64,
}

impl Default for PlannerSection {
    fn default() -> Self {
        Self {
            horizon: 96,
            t_init: 12,
            data_len: 960,
            reg_weight: 0.01,
            n_scen: 300,
            w_base: 0.0,
            rho_slack: 1e4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub horizon: usize,
    pub t_init: usize,
    pub data_len: usize,
    pub reg_weight: f64,
    pub w_u: f64,
    pub w_p: f64,
    pub w_soc: f64,
    /// Forecast-error half-widths (outdoor temperature, solar).
    pub w_radius: [f64; 2],
    pub a_radius: f64,
    pub rho_slack: f64,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            horizon: 12,
            t_init: 12,
            data_len: 480,
            reg_weight: 0.01,
            w_u: 1.0,
            w_p: 1.0,
            w_soc: 10.0,
            w_radius: [0.2, 0.05],
            a_radius: 0.2,
            rho_slack: 1e4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub y_c: [f64; 2],
    pub u_kw: [f64; 2],
    pub soc_kwh: [f64; 2],
    pub pe_kw: [f64; 2],
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            y_c: [22.0, 26.0],
            u_kw: [2.4, 8.4],
            soc_kwh: [0.25, 5.0],
            pe_kw: [-5.0, 5.0],
        }
    }
}

/// Dataset split for prediction evaluation workflows.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub build_days: usize,
    pub validation_days: usize,
    pub stride: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            build_days: 5,
            validation_days: 2,
            stride: 4,
        }
    }
}

/// Grid for the hyperparameter sensitivity sweep.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub reg_weights: Vec<f64>,
    pub data_lens: Vec<usize>,
    pub t_inits: Vec<usize>,
    pub horizon: usize,
    /// Days of synthetic identification data when no CSV is supplied.
    pub days: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            reg_weights: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            data_lens: vec![480],
            t_inits: vec![12],
            horizon: 12,
            days: 12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSchedulerSection {
    pub enabled: bool,
    /// Outdoor temperature above which the scheduler demands cooling.
    pub cooling_above_c: f64,
    /// Minimum steps between switches (> 1 hour).
    pub delay_steps: usize,
}

impl Default for ModeSchedulerSection {
    fn default() -> Self {
        Self {
            enabled: false,
            cooling_above_c: 14.0,
            delay_steps: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Evaluation days (after warmup).
    pub days: usize,
    /// Data-collection days before the market phase.
    pub warmup_days: usize,
    pub scenario: ScenarioKind,
    pub planner: PlannerSection,
    pub controller: ControllerSection,
    pub bounds: BoundsSection,
    pub state_order: usize,
    pub consistency_eta: f64,
    /// Setpoint dither amplitude during warmup \[kW\].
    pub excitation_kw: f64,
    pub plant: PlantParams,
    pub weather: WeatherModel,
    pub agc: AgcModel,
    pub ess: EssParams,
    pub prices: Prices,
    pub mode_scheduler: ModeSchedulerSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            days: 20,
            warmup_days: 5,
            scenario: ScenarioKind::A,
            planner: PlannerSection::default(),
            controller: ControllerSection::default(),
            bounds: BoundsSection::default(),
            state_order: 3,
            consistency_eta: 0.8,
            excitation_kw: 1.5,
            plant: PlantParams::default(),
            weather: WeatherModel::default(),
            agc: AgcModel::default(),
            ess: EssParams::default(),
            prices: Prices::default(),
            mode_scheduler: ModeSchedulerSection::default(),
            eval: EvalSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ordered = |b: &[f64; 2], name: &str| {
            if b[0] >= b[1] {
                Err(ConfigError::Invalid(format!("{name} bounds not ordered")))
            } else {
                Ok(())
            }
        };
        ordered(&self.bounds.y_c, "y")?;
        ordered(&self.bounds.u_kw, "u")?;
        ordered(&self.bounds.soc_kwh, "soc")?;
        ordered(&self.bounds.pe_kw, "pe")?;
        if self.days == 0 {
            return Err(ConfigError::Invalid("days must be positive".into()));
        }
        if self.warmup_days < 2 {
            return Err(ConfigError::Invalid(
                "warmup_days must be at least 2 to seed the predictor".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.consistency_eta) {
            return Err(ConfigError::Invalid("consistency_eta outside [0, 1]".into()));
        }
        self.planner_hyper()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.controller_hyper()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.controller.horizon < 4 {
            return Err(ConfigError::Invalid(
                "controller horizon must be at least 4 steps".into(),
            ));
        }
        if self.planner.n_scen == 0 {
            return Err(ConfigError::Invalid("n_scen must be positive".into()));
        }
        Ok(())
    }

    pub fn planner_hyper(&self) -> DdpHyper {
        DdpHyper {
            data_len: self.planner.data_len,
            t_init: self.planner.t_init,
            horizon: self.planner.horizon,
            reg_weight: self.planner.reg_weight,
            state_order: self.state_order,
            consistency_eta: self.consistency_eta,
        }
    }

    pub fn controller_hyper(&self) -> DdpHyper {
        DdpHyper {
            data_len: self.controller.data_len,
            t_init: self.controller.t_init,
            horizon: self.controller.horizon,
            reg_weight: self.controller.reg_weight,
            state_order: self.state_order,
            consistency_eta: self.consistency_eta,
        }
    }

    pub fn controller_cfg(&self) -> ControllerConfig {
        ControllerConfig {
            horizon: self.controller.horizon,
            w_u: self.controller.w_u,
            w_p: self.controller.w_p,
            w_soc: self.controller.w_soc,
            w_radius: self.controller.w_radius.to_vec(),
            a_radius: self.controller.a_radius,
            y_min_c: self.bounds.y_c[0],
            y_max_c: self.bounds.y_c[1],
            u_min_kw: self.bounds.u_kw[0],
            u_max_kw: self.bounds.u_kw[1],
            soc_min_kwh: self.bounds.soc_kwh[0],
            soc_max_kwh: self.bounds.soc_kwh[1],
            pe_min_kw: self.bounds.pe_kw[0],
            pe_max_kw: self.bounds.pe_kw[1],
            rho_slack: self.controller.rho_slack,
            dt_hours: 0.25,
            gain_reg: 1e-8,
            settings: QpSettings::default(),
        }
    }

    pub fn planner_cfg(&self) -> PlannerConfig {
        PlannerConfig {
            w_base: self.planner.w_base,
            rho_slack: self.planner.rho_slack,
            settings: QpSettings::default(),
        }
    }

    pub fn split(&self) -> crate::eval::SplitSpec {
        crate::eval::SplitSpec {
            build_days: self.eval.build_days,
            validation_days: self.eval.validation_days,
            stride: self.eval.stride,
        }
    }

    pub fn sweep_grid(&self) -> crate::eval::SweepGrid {
        crate::eval::SweepGrid {
            reg_weights: self.sweep.reg_weights.clone(),
            data_lens: self.sweep.data_lens.clone(),
            t_inits: self.sweep.t_inits.clone(),
            horizon: self.sweep.horizon,
        }
    }
}
