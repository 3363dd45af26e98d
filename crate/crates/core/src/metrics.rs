//! Time-to-collision zones, the safety index, and ego speed statistics.

use serde::{Deserialize, Serialize};

use crate::engine::SimTrace;

/// Below this ego speed TTC is treated as infinite.
pub const V_STOP_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TtcZone {
    Safe,
    Attention,
    Alert,
    Collision,
}

impl TtcZone {
    pub fn as_str(self) -> &'static str {
        match self {
            TtcZone::Safe => "safe",
            TtcZone::Attention => "attention",
            TtcZone::Alert => "alert",
            TtcZone::Collision => "collision",
        }
    }
}

/// Gap over ego speed; the closing speed of the rider is deliberately ignored.
pub fn ttc(gap: f64, v_veh: f64) -> f64 {
    if v_veh <= V_STOP_THRESHOLD {
        f64::INFINITY
    } else {
        gap / v_veh
    }
}

/// TTC using the closing speed along the line of sight instead of the ego
/// speed alone. Not used by the default pipeline.
pub fn ttc_relative(gap: f64, closing_speed: f64) -> f64 {
    if closing_speed <= V_STOP_THRESHOLD {
        f64::INFINITY
    } else {
        gap / closing_speed
    }
}

pub fn classify_zone(ttc_value: f64, collided_now: bool) -> TtcZone {
    if collided_now {
        TtcZone::Collision
    } else if ttc_value > 2.0 {
        TtcZone::Safe
    } else if ttc_value > 1.0 {
        TtcZone::Attention
    } else {
        // 0 < TTC ≤ 1; a zero gap without contact lands here as well
        TtcZone::Alert
    }
}

/// Per-zone frame counts. Every frame contributes `dt` to exactly one zone,
/// so durations are kept as counts and scaled on demand.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ZoneDurations {
    pub dt: f64,
    pub safe_frames: usize,
    pub attention_frames: usize,
    pub alert_frames: usize,
    pub collision_frames: usize,
}

impl ZoneDurations {
    pub fn from_zones<I: IntoIterator<Item = TtcZone>>(zones: I, dt: f64) -> Self {
        let mut z = ZoneDurations {
            dt,
            ..Default::default()
        };
        for zone in zones {
            match zone {
                TtcZone::Safe => z.safe_frames += 1,
                TtcZone::Attention => z.attention_frames += 1,
                TtcZone::Alert => z.alert_frames += 1,
                TtcZone::Collision => z.collision_frames += 1,
            }
        }
        z
    }

    pub fn frames(&self) -> usize {
        self.safe_frames + self.attention_frames + self.alert_frames + self.collision_frames
    }

    pub fn t_safe(&self) -> f64 {
        self.safe_frames as f64 * self.dt
    }

    pub fn t_attention(&self) -> f64 {
        self.attention_frames as f64 * self.dt
    }

    pub fn t_alert(&self) -> f64 {
        self.alert_frames as f64 * self.dt
    }

    pub fn t_collision(&self) -> f64 {
        self.collision_frames as f64 * self.dt
    }

    pub fn t_all(&self) -> f64 {
        self.frames() as f64 * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    pub index: f64,
    pub zones: ZoneDurations,
    pub collided: bool,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub min_gap: f64,
    pub min_ttc: f64,
}

fn index_from(zones: &ZoneDurations, collided: bool) -> f64 {
    if collided || zones.frames() == 0 {
        return 0.0;
    }
    (zones.safe_frames + zones.attention_frames) as f64 / zones.frames() as f64
}

/// Share of frames in the Safe or Attention zone; zero if any collision.
pub fn safety_index(trace: &SimTrace) -> f64 {
    let zones = ZoneDurations::from_zones(trace.frames.iter().map(|f| f.zone), trace.dt);
    index_from(&zones, trace.collided())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // shifted by the first sample so a constant series gives exactly zero
    let shift = values[0];
    let m1 = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - shift).powi(2)).sum::<f64>() / n;
    (mean, (m2 - m1 * m1).max(0.0).sqrt())
}

/// Population standard deviation of the per-frame ego speed.
pub fn speed_std(trace: &SimTrace) -> f64 {
    mean_std(&trace.ego_speeds()).1
}

pub fn population_std(values: &[f64]) -> f64 {
    mean_std(values).1
}

pub fn safety_report(trace: &SimTrace) -> SafetyReport {
    let zones = ZoneDurations::from_zones(trace.frames.iter().map(|f| f.zone), trace.dt);
    let collided = trace.collided();
    let (speed_mean, speed_std) = mean_std(&trace.ego_speeds());
    let observations = trace.frames.iter().flat_map(|f| f.scooters.iter().flatten());
    let (min_gap, min_ttc) = observations.fold((f64::INFINITY, f64::INFINITY), |(g, t), o| {
        (g.min(o.gap), t.min(o.ttc))
    });
    SafetyReport {
        index: index_from(&zones, collided),
        zones,
        collided,
        speed_mean,
        speed_std,
        min_gap,
        min_ttc,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EgoSample, Frame};
    use crate::geo::{Pose2D, Vec2};
    use proptest::prelude::*;

    fn trace_of(zones: &[TtcZone], speeds: &[f64], collided: bool) -> SimTrace {
        let frames = zones
            .iter()
            .zip(speeds)
            .enumerate()
            .map(|(k, (z, v))| Frame {
                k,
                t: k as f64 * 0.05,
                ego: EgoSample {
                    pose: Pose2D::new(Vec2::ZERO, 0.0),
                    path_s: 0.0,
                    speed: *v,
                    accel: 0.0,
                    mode: None,
                },
                scooters: Vec::new(),
                zone: *z,
                collided: collided && k + 1 == zones.len(),
            })
            .collect();
        SimTrace {
            name: "t".into(),
            dt: 0.05,
            scooter_ids: Vec::new(),
            frames,
            events: Vec::new(),
        }
    }

    #[test]
    fn ttc_examples() {
        assert!((ttc(11.2, 5.6) - 2.0).abs() < 1e-12);
        assert_eq!(ttc(7.0, 0.0), f64::INFINITY);
        assert_eq!(classify_zone(ttc(7.0, 0.0), false), TtcZone::Safe);
        assert_eq!(classify_zone(ttc(2.8, 5.6), false), TtcZone::Alert);
        assert!((ttc(2.8, 5.6) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zone_boundaries() {
        assert_eq!(classify_zone(5.0, false), TtcZone::Safe);
        assert_eq!(classify_zone(2.0, false), TtcZone::Attention);
        assert_eq!(classify_zone(1.0, false), TtcZone::Alert);
        assert_eq!(classify_zone(10.0, true), TtcZone::Collision);
    }

    #[test]
    fn index_examples() {
        let all_safe = trace_of(&[TtcZone::Safe; 10], &[5.6; 10], false);
        assert_eq!(safety_index(&all_safe), 1.0);

        let crash = trace_of(&[TtcZone::Safe; 10], &[5.6; 10], true);
        assert_eq!(safety_index(&crash), 0.0);

        let mut zones = vec![TtcZone::Safe; 50];
        zones.extend([TtcZone::Alert; 50]);
        assert_eq!(safety_index(&trace_of(&zones, &[1.0; 100], false)), 0.5);
    }

    #[test]
    fn speed_std_examples() {
        assert_eq!(speed_std(&trace_of(&[TtcZone::Safe; 8], &[5.6; 8], false)), 0.0);
        let t = trace_of(&[TtcZone::Safe; 4], &[0.0, 0.0, 10.0, 10.0], false);
        assert_eq!(speed_std(&t), 5.0);
    }

    fn zone_of(i: u8) -> TtcZone {
        [TtcZone::Safe, TtcZone::Attention, TtcZone::Alert, TtcZone::Collision][i as usize % 4]
    }

    proptest! {
        #[test]
        fn zone_monotone(a in 0.0..10.0f64, b in 0.0..10.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_zone(hi, false) <= classify_zone(lo, false));
        }

        #[test]
        fn gap_scale_consistent(gap in 0.0..100.0f64, v in 0.02..30.0f64) {
            prop_assert_eq!(classify_zone(ttc(gap, v), false), classify_zone(ttc(2.0 * gap, 2.0 * v), false));
        }

        #[test]
        fn index_bounds(zs in prop::collection::vec(0u8..3, 1..200)) {
            let zones: Vec<_> = zs.iter().map(|z| zone_of(*z)).collect();
            let t = trace_of(&zones, &vec![3.0; zones.len()], false);
            let idx = safety_index(&t);
            prop_assert!((0.0..=1.0).contains(&idx));
            prop_assert_eq!(idx == 1.0, zones.iter().all(|z| *z <= TtcZone::Attention));
        }
    }
}
