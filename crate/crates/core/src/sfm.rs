//! Social-force dynamics of an e-scooter rider: a destination-seeking force,
//! an exponential repulsion from the ego vehicle, and point-mass integration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{LocalPoint, Vec2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfmError {
    #[error("desired velocity undefined: rider is at its destination and sigma_des is 0")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiderType {
    /// Reacts to the vehicle through the repulsive force.
    Normal,
    /// Destination force only; ignores the vehicle.
    Aggressive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiderProfile {
    pub rider_type: RiderType,
    /// Destination gain, N·s/m.
    pub k_des: f64,
    /// Repulsion amplitude, N.
    pub a_veh: f64,
    /// Repulsion decay rate, 1/m.
    pub b_veh: f64,
    /// Typical cruising speed, m/s.
    pub v0: f64,
    /// Regularizer of the desired-velocity denominator, m.
    pub sigma_des: f64,
    /// Rider plus scooter mass, kg.
    pub m_esc: f64,
    pub v_max: f64,
    /// Minimum distance used in the repulsion term, m.
    pub epsilon: f64,
}

impl Default for RiderProfile {
    fn default() -> Self {
        Self::normal()
    }
}

impl RiderProfile {
    pub fn normal() -> Self {
        Self {
            rider_type: RiderType::Normal,
            k_des: 100.0,
            a_veh: 100.0,
            b_veh: 3.5,
            v0: 5.0,
            sigma_des: 1.0,
            m_esc: 100.0,
            v_max: 7.0,
            epsilon: 0.1,
        }
    }

    pub fn aggressive() -> Self {
        Self {
            rider_type: RiderType::Aggressive,
            ..Self::normal()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("k_des", self.k_des),
            ("a_veh", self.a_veh),
            ("b_veh", self.b_veh),
            ("v0", self.v0),
            ("m_esc", self.m_esc),
            ("v_max", self.v_max),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            // a_veh = 0 is allowed: it is how a Normal rider is made deaf to the vehicle
            let ok = if name == "a_veh" { v >= 0.0 } else { v > 0.0 };
            if !(ok && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.sigma_des >= 0.0 && self.sigma_des.is_finite()) {
            return Err(format!("sigma_des must be non-negative, got {}", self.sigma_des));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscooterState {
    pub pos: LocalPoint,
    pub vel: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SfmForces {
    pub f_des: Vec2,
    pub f_veh: Vec2,
    pub f_total: Vec2,
}

/// `v0 · (s_des − s_esc) / (‖s_des − s_esc‖² + σ²)`.
pub fn desired_velocity(
    s_esc: LocalPoint,
    s_des: LocalPoint,
    v0: f64,
    sigma_des: f64,
) -> Result<Vec2, SfmError> {
    let diff = s_des - s_esc;
    let denom = diff.norm_squared() + sigma_des * sigma_des;
    if denom == 0.0 {
        return Err(SfmError::Singular);
    }
    Ok(diff * (v0 / denom))
}

pub fn destination_force(k_des: f64, v_des: Vec2, v_esc: Vec2) -> Vec2 {
    (v_des - v_esc) * k_des
}

/// `A · exp(−b·d) · n̂`, with `d` floored at `epsilon` and `n̂` pointing from
/// the vehicle's influence point to the rider. Coincident points use
/// `fallback_dir` (expected to be a unit vector).
pub fn vehicle_repulsion(
    a_veh: f64,
    b_veh: f64,
    s_influence: LocalPoint,
    s_esc: LocalPoint,
    epsilon: f64,
    fallback_dir: Vec2,
) -> Vec2 {
    let diff = s_esc - s_influence;
    let dist = diff.norm();
    let n_hat = if dist > 0.0 { diff / dist } else { fallback_dir };
    n_hat * (a_veh * (-b_veh * dist.max(epsilon)).exp())
}

pub fn total_force(profile: &RiderProfile, f_des: Vec2, f_veh: Vec2) -> SfmForces {
    match profile.rider_type {
        RiderType::Normal => SfmForces {
            f_des,
            f_veh,
            f_total: f_des + f_veh,
        },
        RiderType::Aggressive => SfmForces {
            f_des,
            f_veh: Vec2::ZERO,
            f_total: f_des,
        },
    }
}

/// Semi-implicit Euler step of the point mass, with the speed capped at `v_max`.
pub fn step_escooter(
    state: EscooterState,
    f_total: Vec2,
    m_esc: f64,
    v_max: f64,
    dt: f64,
) -> EscooterState {
    let vel = (state.vel + f_total * (dt / m_esc)).clamp_norm(v_max);
    EscooterState {
        pos: state.pos + vel * dt,
        vel,
    }
}

/// All forces on one rider for the current snapshot.
pub fn rider_forces(
    profile: &RiderProfile,
    state: &EscooterState,
    destination: LocalPoint,
    s_influence: Option<LocalPoint>,
    fallback_dir: Vec2,
) -> Result<SfmForces, SfmError> {
    let v_des = desired_velocity(state.pos, destination, profile.v0, profile.sigma_des)?;
    let f_des = destination_force(profile.k_des, v_des, state.vel);
    let f_veh = match (profile.rider_type, s_influence) {
        (RiderType::Normal, Some(infl)) => vehicle_repulsion(
            profile.a_veh,
            profile.b_veh,
            infl,
            state.pos,
            profile.epsilon,
            fallback_dir,
        ),
        _ => Vec2::ZERO,
    };
    Ok(total_force(profile, f_des, f_veh))
}
