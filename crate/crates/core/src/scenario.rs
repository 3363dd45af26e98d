//! Scenario files: reconstructed tracks plus run defaults, stored as TOML.
//!
//! ```toml
//! schema_version = 1
//! name = "crossing"
//!
//! [origin]
//! lat = 39.77
//! lon = -86.16
//!
//! [bounds]   # geographic extent of all keyframes
//! [defaults] # dt, duration, timing_shift, baseline_speed, aggressive_force_scale
//! [defaults.rider]
//! [defaults.cap]
//! [defaults.geometry]
//!
//! [[tracks]]
//! id = "ego"
//! kind = "ego"
//! t = [0.0, 1.0]
//! x = [0.0, 5.6]
//! y = [0.0, 0.0]
//! heading = [0.0, 0.0]
//! ```
//!
//! Positions are meters east/north of `origin`, headings radians CCW from east.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cap::CapConfig;
use crate::engine::CollisionGeometry;
use crate::geo::{BoundingBox, GeoPoint, Pose2D, Vec2};
use crate::ingest::{AgentKind, AgentTrack, Keyframe};
use crate::sfm::RiderProfile;
use crate::variants::{ScenarioSpec, BASELINE_SPEED, DEFAULT_DURATION};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Syntax {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("tracks[{index}] `{id}`: column `{column}` has {len} entries, expected {expected}")]
    Ragged {
        index: usize,
        id: String,
        column: &'static str,
        len: usize,
        expected: usize,
    },
    #[error("serializing scenario: {0}")]
    Encode(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub dt: f64,
    pub duration: f64,
    pub timing_shift: f64,
    pub baseline_speed: f64,
    pub aggressive_force_scale: f64,
    pub rider: RiderProfile,
    pub cap: CapConfig,
    pub geometry: CollisionGeometry,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            dt: crate::traj::DEFAULT_DT,
            duration: DEFAULT_DURATION,
            timing_shift: 0.0,
            baseline_speed: BASELINE_SPEED,
            aggressive_force_scale: 1.0,
            rider: RiderProfile::normal(),
            cap: CapConfig::default(),
            geometry: CollisionGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackTable {
    pub id: String,
    pub kind: AgentKind,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub heading: Vec<f64>,
}

impl From<&AgentTrack> for TrackTable {
    fn from(tr: &AgentTrack) -> Self {
        let col = |f: fn(&Keyframe) -> f64| tr.keyframes.iter().map(f).collect();
        Self {
            id: tr.agent_id.clone(),
            kind: tr.kind,
            t: col(|k| k.t),
            x: col(|k| k.pose.position.x),
            y: col(|k| k.pose.position.y),
            heading: col(|k| k.pose.heading),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub name: String,
    pub origin: GeoPoint,
    pub bounds: BoundingBox,
    pub defaults: Defaults,
    pub tracks: Vec<TrackTable>,
}

impl ScenarioFile {
    pub fn new(name: impl Into<String>, origin: GeoPoint, bounds: BoundingBox, tracks: &[AgentTrack]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            origin,
            bounds,
            defaults: Defaults::default(),
            tracks: tracks.iter().map(TrackTable::from).collect(),
        }
    }

    pub fn agent_tracks(&self) -> Result<Vec<AgentTrack>, ScenarioError> {
        self.tracks
            .iter()
            .enumerate()
            .map(|(index, tt)| {
                let expected = tt.t.len();
                for (column, len) in [("x", tt.x.len()), ("y", tt.y.len()), ("heading", tt.heading.len())] {
                    if len != expected {
                        return Err(ScenarioError::Ragged {
                            index,
                            id: tt.id.clone(),
                            column,
                            len,
                            expected,
                        });
                    }
                }
                let keyframes = (0..expected)
                    .map(|i| Keyframe {
                        t: tt.t[i],
                        pose: Pose2D::new(Vec2::new(tt.x[i], tt.y[i]), tt.heading[i]),
                    })
                    .collect();
                Ok(AgentTrack {
                    agent_id: tt.id.clone(),
                    kind: tt.kind,
                    keyframes,
                })
            })
            .collect()
    }

    /// Base spec (kinematic replay) carrying the file's tracks and defaults.
    pub fn to_spec(&self) -> Result<ScenarioSpec, ScenarioError> {
        let d = &self.defaults;
        let mut spec = ScenarioSpec::new(self.name.clone(), self.agent_tracks()?);
        spec.dt = d.dt;
        spec.duration = d.duration;
        spec.timing_shift = d.timing_shift;
        spec.baseline_speed = d.baseline_speed;
        spec.aggressive_force_scale = d.aggressive_force_scale;
        spec.rider_profile = d.rider;
        spec.cap_config = d.cap;
        spec.geometry = d.geometry;
        spec.agent_modes.ego = crate::engine::EgoMode::ConstantSpeedReplay {
            speed: d.baseline_speed,
        };
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str, path: &str) -> Result<Self, ScenarioError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let syntax = |e| ScenarioError::Syntax {
            path: path.to_string(),
            source: Box::new(e),
        };
        let v: Version = toml::from_str(text).map_err(syntax)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Schema {
                found: v.schema_version,
            });
        }
        toml::from_str(text).map_err(syntax)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: shown.clone(),
            source,
        })?;
        Self::from_toml(&text, &shown)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ScenarioFile {
        let tr = AgentTrack {
            agent_id: "s1".into(),
            kind: AgentKind::Escooter,
            keyframes: (0..4)
                .map(|k| Keyframe {
                    t: k as f64 * 0.1,
                    pose: Pose2D::new(Vec2::new(0.1 * k as f64, 1.0 / 3.0), 2.0_f64.sqrt()),
                })
                .collect(),
        };
        let origin = GeoPoint { lat: 39.77, lon: -86.16 };
        let bounds = crate::geo::compute_scenario_bounds(std::slice::from_ref(&tr), origin, 10.0).unwrap();
        ScenarioFile::new("sample", origin, bounds, &[tr])
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let f = sample();
        let text = f.to_toml().unwrap();
        let back = ScenarioFile::from_toml(&text, "mem").unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn rejects_other_schema() {
        let text = sample().to_toml().unwrap().replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            ScenarioFile::from_toml(&text, "mem"),
            Err(ScenarioError::Schema { found: 7 })
        ));
    }

    #[test]
    fn ragged_columns_named() {
        let mut f = sample();
        f.tracks[0].y.pop();
        let err = f.agent_tracks().unwrap_err().to_string();
        assert!(err.contains("tracks[0]") && err.contains("`y`"), "{err}");
    }
}
