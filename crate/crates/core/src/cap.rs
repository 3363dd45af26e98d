//! Longitudinal collision-avoidance planner for the ego vehicle.
//!
//! Two modes. `Cruise` tracks the desired speed with a PID loop. `Brake` is
//! entered whenever a rider in the forward corridor is closer than the
//! speed-dependent safe distance
//!
//! ```text
//! d_safe(v) = max(v² / 2|a_min|, T_safe·v) + d_buf
//! ```
//!
//! and commands `a = −v² / 2(d_safe − d_buf)`. That nominal law only stops the
//! vehicle within `d_safe − d_buf` when braking starts exactly at `d_safe`
//! and the deceleration is held, so once the constant deceleration needed to
//! stop at `d_buf` (`v² / 2(gap − d_buf)`) reaches `escalation_decel` the
//! planner commands that instead. Every brake command saturates at `a_min`.
//! Leaving `Brake` needs `gap ≥ d_safe + hysteresis` or no threat at all.

use serde::{Deserialize, Serialize};

use crate::geo::{LocalPoint, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapConfig {
    /// Cruise setpoint, m/s.
    pub v_des: f64,
    /// Time headway, s.
    pub t_safe: f64,
    /// Standstill buffer, m.
    pub d_buf: f64,
    /// Maximum braking deceleration, m/s² (negative).
    pub a_min: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub corridor_half_width: f64,
    pub hysteresis: f64,
    /// Anti-windup bound on the PID integral, m/s·s.
    pub integral_limit: f64,
    /// Upper bound on cruise acceleration, m/s².
    pub a_max_cruise: f64,
    /// Required stopping deceleration (m/s², positive) above which braking
    /// switches from the nominal law to the stop-at-buffer law.
    pub escalation_decel: f64,
}

impl Default for CapConfig {
    fn default() -> Self {
        Self {
            v_des: 5.6,
            t_safe: 2.0,
            d_buf: 3.0,
            a_min: -6.0,
            kp: 0.05,
            ki: 0.05,
            kd: 0.05,
            corridor_half_width: 2.0,
            hysteresis: 1.0,
            integral_limit: 2.0,
            a_max_cruise: 2.0,
            escalation_decel: 3.0,
        }
    }
}

impl CapConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks: [(&str, f64, bool); 12] = [
            ("v_des", self.v_des, self.v_des >= 0.0),
            ("t_safe", self.t_safe, self.t_safe > 0.0),
            ("d_buf", self.d_buf, self.d_buf > 0.0),
            ("a_min", self.a_min, self.a_min < 0.0),
            ("kp", self.kp, self.kp >= 0.0),
            ("ki", self.ki, self.ki >= 0.0),
            ("kd", self.kd, self.kd >= 0.0),
            ("corridor_half_width", self.corridor_half_width, self.corridor_half_width > 0.0),
            ("hysteresis", self.hysteresis, self.hysteresis >= 0.0),
            ("integral_limit", self.integral_limit, self.integral_limit >= 0.0),
            ("a_max_cruise", self.a_max_cruise, self.a_max_cruise >= 0.0),
            ("escalation_decel", self.escalation_decel, self.escalation_decel > 0.0),
        ];
        for (name, v, ok) in checks {
            if !(ok && v.is_finite()) {
                return Err(format!("{name} out of range: {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapMode {
    #[default]
    Cruise,
    Brake,
}

impl CapMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CapMode::Cruise => "cruise",
            CapMode::Brake => "brake",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CapState {
    pub mode: CapMode,
    pub pid_integral: f64,
    /// `None` until the first cruise step after start or after braking.
    pub prev_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub accel: f64,
}

pub fn safe_distance(v_veh: f64, cfg: &CapConfig) -> f64 {
    let kinematic = v_veh * v_veh / (2.0 * cfg.a_min.abs());
    kinematic.max(cfg.t_safe * v_veh) + cfg.d_buf
}

/// Whether a point sits in the forward corridor of `frame`: strictly ahead
/// and within `half_width` laterally.
pub fn in_corridor(frame: &Pose2D, p: LocalPoint, half_width: f64) -> bool {
    let local = frame.to_local_frame(p);
    local.x > 0.0 && local.y.abs() <= half_width
}

/// Nearest rider in the forward corridor. `ego` is the pose the corridor and
/// gap are measured from (the front-bumper influence point in the engine).
pub fn select_threat<'a, I>(ego: &Pose2D, scooters: I, cfg: &CapConfig) -> Option<(&'a str, f64)>
where
    I: IntoIterator<Item = (&'a str, LocalPoint)>,
{
    scooters
        .into_iter()
        .filter(|(_, p)| in_corridor(ego, *p, cfg.corridor_half_width))
        .map(|(id, p)| (id, p.distance(ego.position)))
        .fold(None, |best, cand| match best {
            Some((_, g)) if g <= cand.1 => best,
            _ => Some(cand),
        })
}

/// Nominal brake law `−v² / 2(d_safe − d_buf)` with `a_min` saturation.
pub fn nominal_brake(v_veh: f64, cfg: &CapConfig) -> f64 {
    if v_veh <= 0.0 {
        return 0.0;
    }
    let span = safe_distance(v_veh, cfg) - cfg.d_buf;
    (-v_veh * v_veh / (2.0 * span)).max(cfg.a_min)
}

fn brake_command(v_veh: f64, gap: f64, cfg: &CapConfig) -> f64 {
    if v_veh <= 0.0 {
        return 0.0;
    }
    let room = gap - cfg.d_buf;
    let required = if room > 0.0 {
        v_veh * v_veh / (2.0 * room)
    } else {
        f64::INFINITY
    };
    if required >= cfg.escalation_decel {
        (-required).max(cfg.a_min)
    } else {
        nominal_brake(v_veh, cfg)
    }
}

/// One planner step: returns the command and the successor state.
pub fn compute_command(
    state: CapState,
    v_veh: f64,
    threat_gap: Option<f64>,
    cfg: &CapConfig,
    dt: f64,
) -> (ControlCommand, CapState) {
    let d_safe = safe_distance(v_veh, cfg);
    let mode = match (state.mode, threat_gap) {
        (_, Some(gap)) if gap < d_safe => CapMode::Brake,
        (CapMode::Brake, Some(gap)) if gap < d_safe + cfg.hysteresis => CapMode::Brake,
        _ => CapMode::Cruise,
    };

    let mut next = CapState { mode, ..state };
    let accel = match mode {
        CapMode::Brake => {
            // integral frozen; derivative restarts on the next cruise step
            next.prev_error = None;
            // a Brake mode always has a threat
            brake_command(v_veh, threat_gap.unwrap_or(f64::INFINITY), cfg)
        }
        CapMode::Cruise => {
            let error = cfg.v_des - v_veh;
            next.pid_integral =
                (state.pid_integral + error * dt).clamp(-cfg.integral_limit, cfg.integral_limit);
            let derivative = state.prev_error.map_or(0.0, |prev| (error - prev) / dt);
            next.prev_error = Some(error);
            cfg.kp * error + cfg.ki * next.pid_integral + cfg.kd * derivative
        }
    };
    let accel = accel.clamp(cfg.a_min, cfg.a_max_cruise);
    (ControlCommand { accel }, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Vec2;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn safe_distance_examples() {
        let cfg = CapConfig::default();
        assert_eq!(safe_distance(0.0, &cfg), 3.0);
        assert_abs_diff_eq!(safe_distance(5.6, &cfg), 14.2, epsilon = 1e-12);
        assert_abs_diff_eq!(safe_distance(30.0, &cfg), 78.0, epsilon = 1e-12);
    }

    #[test]
    fn threat_selection() {
        let cfg = CapConfig::default();
        let ego = Pose2D::new(Vec2::ZERO, 0.0);
        assert_eq!(select_threat(&ego, [("a", Vec2::new(-5.0, 0.0))], &cfg), None);
        assert_eq!(select_threat(&ego, [("a", Vec2::new(5.0, 0.0))], &cfg), Some(("a", 5.0)));
        let pick = select_threat(
            &ego,
            [("far", Vec2::new(8.0, 0.0)), ("near", Vec2::new(5.0, 0.0)), ("wide", Vec2::new(1.0, 3.0))],
            &cfg,
        );
        assert_eq!(pick, Some(("near", 5.0)));
    }

    #[test]
    fn cruise_at_setpoint_is_quiet() {
        let cfg = CapConfig::default();
        let (cmd, st) = compute_command(CapState::default(), 5.6, None, &cfg, 0.05);
        assert_abs_diff_eq!(cmd.accel, 0.0, epsilon = 1e-12);
        assert_eq!(st.mode, CapMode::Cruise);
    }

    #[test]
    fn braking_law_point_values() {
        let cfg = CapConfig::default();
        let (cmd, st) = compute_command(CapState::default(), 5.6, Some(10.0), &cfg, 0.05);
        assert_eq!(st.mode, CapMode::Brake);
        assert_abs_diff_eq!(cmd.accel, -1.4, epsilon = 1e-9);

        assert_abs_diff_eq!(nominal_brake(20.0, &cfg), -5.0, epsilon = 1e-12);
        let weak = CapConfig {
            a_min: -4.0,
            ..cfg
        };
        let (cmd, _) = compute_command(CapState::default(), 20.0, Some(10.0), &weak, 0.05);
        assert_eq!(cmd.accel, -4.0);
    }

    #[test]
    fn escalates_when_nominal_law_falls_short() {
        let cfg = CapConfig::default();
        // 5.6 m/s with 4 m of room needs 3.92 m/s²
        let (cmd, _) = compute_command(CapState::default(), 5.6, Some(7.0), &cfg, 0.05);
        assert_abs_diff_eq!(cmd.accel, -5.6 * 5.6 / 8.0, epsilon = 1e-12);
        let (cmd, _) = compute_command(CapState::default(), 5.6, Some(2.0), &cfg, 0.05);
        assert_eq!(cmd.accel, cfg.a_min);
    }

    #[test]
    fn hysteresis_and_rest() {
        let cfg = CapConfig::default();
        let braking = CapState {
            mode: CapMode::Brake,
            ..CapState::default()
        };
        // d_safe(5.6) = 14.2; inside the hysteresis band stays braking
        let (_, st) = compute_command(braking, 5.6, Some(14.5), &cfg, 0.05);
        assert_eq!(st.mode, CapMode::Brake);
        let (_, st) = compute_command(braking, 5.6, Some(15.3), &cfg, 0.05);
        assert_eq!(st.mode, CapMode::Cruise);
        let (_, st) = compute_command(braking, 5.6, None, &cfg, 0.05);
        assert_eq!(st.mode, CapMode::Cruise);
        let (cmd, st) = compute_command(braking, 0.0, Some(3.0), &cfg, 0.05);
        assert_eq!((cmd.accel, st.mode), (0.0, CapMode::Brake));
    }

    fn closed_loop(v0: f64, initial_gap: f64, seconds: f64, dt: f64) -> (f64, f64, f64) {
        let cfg = CapConfig {
            v_des: v0,
            ..CapConfig::default()
        };
        let (mut v, mut gap, mut st) = (v0, initial_gap, CapState::default());
        let mut min_gap = gap;
        for _ in 0..(seconds / dt) as usize {
            let (cmd, next) = compute_command(st, v, Some(gap), &cfg, dt);
            st = next;
            v = (v + cmd.accel * dt).max(0.0);
            gap -= v * dt;
            min_gap = min_gap.min(gap);
        }
        (v, gap, min_gap)
    }

    #[test]
    fn stops_before_stationary_threat() {
        for v0 in [2.0, 5.6, 10.0, 15.0] {
            let cfg = CapConfig::default();
            let (v, gap, min_gap) = closed_loop(v0, safe_distance(v0, &cfg), 40.0, 0.05);
            assert!(v < 1e-6, "v0={v0}: still moving at {v}");
            assert!(min_gap >= cfg.d_buf - 0.2, "v0={v0}: gap {gap}");
        }
    }

    #[test]
    fn pid_converges_without_threat() {
        // lightly damped with these gains: settling takes minutes, not seconds
        let cfg = CapConfig::default();
        for v_start in [0.0, 3.0, 5.1, 6.1, 8.0] {
            let mut v: f64 = v_start;
            let mut st = CapState::default();
            for _ in 0..6000 {
                let (cmd, next) = compute_command(st, v, None, &cfg, 0.05);
                st = next;
                v += cmd.accel * 0.05;
            }
            assert!((v - cfg.v_des).abs() < 0.01, "start {v_start}: ended at {v}");
        }
    }

    proptest! {
        #[test]
        fn safe_distance_monotone(a in 0.0..60.0f64, b in 0.0..60.0f64) {
            let cfg = CapConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(safe_distance(lo, &cfg) <= safe_distance(hi, &cfg));
        }

        #[test]
        fn command_bounds(v in 0.0..40.0f64, gap in prop::option::of(0.0..100.0f64),
                          integral in -2.0..2.0f64, prev in prop::option::of(-40.0..40.0f64),
                          brake in any::<bool>()) {
            let cfg = CapConfig::default();
            let st = CapState { mode: if brake { CapMode::Brake } else { CapMode::Cruise },
                                pid_integral: integral, prev_error: prev };
            let (cmd, next) = compute_command(st, v, gap, &cfg, 0.05);
            prop_assert!(cmd.accel >= cfg.a_min && cmd.accel <= cfg.a_max_cruise);
            prop_assert!(next.pid_integral.abs() <= cfg.integral_limit);
        }

        #[test]
        fn mode_sequence_replays(seq in prop::collection::vec((0.0..20.0f64, prop::option::of(0.0..40.0f64)), 1..80)) {
            let cfg = CapConfig::default();
            let run = || {
                let mut st = CapState::default();
                seq.iter().map(|(v, g)| { st = compute_command(st, *v, *g, &cfg, 0.05).1; st.mode }).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
