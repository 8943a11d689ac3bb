//! Global configuration, loaded from TOML. Every section and field is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bus::ArbiterConfig;
use crate::error::{Error, Result};
use crate::kinematics::ChassisParams;
use crate::lowlayer::LowLayerConfig;
use crate::nav::{CostmapConfig, FollowParams, MapperConfig, PersonFollowParams};
use crate::perception::skeleton::ClassifierParams;
use crate::perception::{CameraModel, FallParams, SortParams};
use crate::taskmgr::TaskParams;
use crate::vocal::VocalParams;
use crate::worldsim::{BodyLimits, LidarSpec};

/// Environment variable naming the global config file.
pub const CONFIG_ENV: &str = "MARVIN_CONFIG";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    /// Simulation and velocity tick (Hz).
    pub velocity: f64,
    pub lidar: f64,
    pub perception: f64,
    pub replan: f64,
    /// Map snapshot publication (Hz); zero disables.
    pub map: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            velocity: 50.0,
            lidar: 10.0,
            perception: 10.0,
            replan: 2.0,
            map: 0.2,
        }
    }
}

impl Rates {
    /// Velocity ticks between two runs of a node at `hz`.
    pub fn decimation(&self, hz: f64) -> u64 {
        if hz <= 0.0 {
            return 0;
        }
        (self.velocity / hz).round().max(1.0) as u64
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.velocity
    }
}

/// Every section defaults independently, except that the stack's costmap
/// uses [`CostmapConfig::footprint_safe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarvinConfig {
    pub rates: Rates,
    pub chassis: ChassisParams,
    pub body: BodyLimits,
    pub low_layer: LowLayerConfig,
    pub arbiter: ArbiterConfig,
    pub lidar: LidarSpec,
    pub camera: CameraModel,
    pub costmap: CostmapConfig,
    pub follow: FollowParams,
    pub person_follow: PersonFollowParams,
    pub mapper: MapperConfig,
    pub sort: SortParams,
    pub classifier: ClassifierParams,
    pub fall: FallParams,
    pub vocal: VocalParams,
    pub task: TaskParams,
}

impl Default for MarvinConfig {
    fn default() -> Self {
        Self {
            rates: Rates::default(),
            chassis: ChassisParams::default(),
            body: BodyLimits::default(),
            low_layer: LowLayerConfig::default(),
            arbiter: ArbiterConfig::default(),
            lidar: LidarSpec::default(),
            camera: CameraModel::default(),
            costmap: CostmapConfig::footprint_safe(),
            follow: FollowParams::default(),
            person_follow: PersonFollowParams::default(),
            mapper: MapperConfig::default(),
            sort: SortParams::default(),
            classifier: ClassifierParams::default(),
            fall: FallParams::default(),
            vocal: VocalParams::default(),
            task: TaskParams::default(),
        }
    }
}

impl MarvinConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Reads the file named by `MARVIN_CONFIG`, or defaults when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(p),
            _ => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rates;
        if !(r.velocity > 0.0) {
            return Err(Error::invalid("rates.velocity must be positive"));
        }
        for (name, hz) in [("lidar", r.lidar), ("perception", r.perception), ("replan", r.replan)] {
            if !(hz > 0.0 && hz <= r.velocity) {
                return Err(Error::invalid(format!("rates.{name} must be in (0, velocity]")));
            }
        }
        self.chassis.validate()?;
        self.low_layer.pid.validate()?;
        if !(self.body.v_max > 0.0 && self.body.a_max > 0.0) {
            return Err(Error::invalid("body limits must be positive"));
        }
        Ok(())
    }
}
