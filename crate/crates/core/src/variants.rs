//! The five experiment configurations built from one reconstructed scenario.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cap::CapConfig;
use crate::engine::{AgentMode, CollisionGeometry, EgoMode, ScooterMode};
use crate::ingest::AgentTrack;
use crate::sfm::{RiderProfile, RiderType};

pub const BASELINE_SPEED: f64 = 5.6;
pub const DEFAULT_DURATION: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub tracks: Vec<AgentTrack>,
    pub dt: f64,
    pub duration: f64,
    pub agent_modes: AgentMode,
    pub rider_profile: RiderProfile,
    pub cap_config: CapConfig,
    pub geometry: CollisionGeometry,
    /// Applied to every rider track before the run.
    pub timing_shift: f64,
    /// Ego speed for the non-planner variants.
    pub baseline_speed: f64,
    /// Multiplies the Aggressive rider's force gains. 1.0 leaves them equal to
    /// the Normal rider's.
    pub aggressive_force_scale: f64,
}

impl ScenarioSpec {
    /// A kinematic replay at the baseline speed with default parameters.
    pub fn new(name: impl Into<String>, tracks: Vec<AgentTrack>) -> Self {
        Self {
            name: name.into(),
            tracks,
            dt: crate::traj::DEFAULT_DT,
            duration: DEFAULT_DURATION,
            agent_modes: AgentMode {
                ego: EgoMode::ConstantSpeedReplay {
                    speed: BASELINE_SPEED,
                },
                scooter: ScooterMode::KinematicReplay,
            },
            rider_profile: RiderProfile::normal(),
            cap_config: CapConfig::default(),
            geometry: CollisionGeometry::default(),
            timing_shift: 0.0,
            baseline_speed: BASELINE_SPEED,
            aggressive_force_scale: 1.0,
        }
    }

    /// Rider parameters the engine integrates with: the stored profile, with
    /// the Aggressive gains scaled by `aggressive_force_scale`.
    pub fn effective_rider_profile(&self) -> RiderProfile {
        let mut p = self.rider_profile;
        if p.rider_type == RiderType::Aggressive {
            p.k_des *= self.aggressive_force_scale;
            p.a_veh *= self.aggressive_force_scale;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantId {
    Baseline,
    NormalNoCap,
    AggressiveNoCap,
    NormalCap,
    AggressiveCap,
}

impl VariantId {
    pub const ALL: [VariantId; 5] = [
        VariantId::Baseline,
        VariantId::NormalNoCap,
        VariantId::AggressiveNoCap,
        VariantId::NormalCap,
        VariantId::AggressiveCap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantId::Baseline => "baseline",
            VariantId::NormalNoCap => "normal",
            VariantId::AggressiveNoCap => "aggressive",
            VariantId::NormalCap => "normal-cap",
            VariantId::AggressiveCap => "aggressive-cap",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|v| v.name()).collect()
    }

    fn rider(self) -> Option<RiderType> {
        match self {
            VariantId::Baseline => None,
            VariantId::NormalNoCap | VariantId::NormalCap => Some(RiderType::Normal),
            VariantId::AggressiveNoCap | VariantId::AggressiveCap => Some(RiderType::Aggressive),
        }
    }

    fn planner(self) -> bool {
        matches!(self, VariantId::NormalCap | VariantId::AggressiveCap)
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown variant `{given}`; expected one of: {}", VariantId::names().join(", "))]
pub struct UnknownVariant {
    pub given: String,
}

impl FromStr for VariantId {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| UnknownVariant { given: s.to_string() })
    }
}

pub fn build_variant(base: &ScenarioSpec, id: VariantId) -> ScenarioSpec {
    let mut spec = base.clone();
    spec.name = id.name().to_string();
    spec.agent_modes.ego = if id.planner() {
        EgoMode::CapControlled
    } else {
        EgoMode::ConstantSpeedReplay {
            speed: base.baseline_speed,
        }
    };
    spec.agent_modes.scooter = match id.rider() {
        None => ScooterMode::KinematicReplay,
        Some(_) => ScooterMode::Sfm,
    };
    spec.rider_profile.rider_type = id.rider().unwrap_or(RiderType::Normal);
    spec
}

pub fn build_matrix(base: &ScenarioSpec) -> Vec<ScenarioSpec> {
    VariantId::ALL.iter().map(|id| build_variant(base, *id)).collect()
}
