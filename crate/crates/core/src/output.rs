//! Trace CSV, per-run report, matrix summary and run manifest.

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::engine::SimTrace;
use crate::metrics::{safety_report, SafetyReport};
use crate::variants::ScenarioSpec;

pub const TRACE_HEADER: [&str; 20] = [
    "t", "ego_x", "ego_y", "ego_heading", "ego_v", "ego_a", "cap_mode", "esc_id", "esc_x", "esc_y",
    "esc_vx", "esc_vy", "f_des_x", "f_des_y", "f_veh_x", "f_veh_y", "gap", "ttc", "zone", "collided",
];

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        v.to_string()
    }
}

/// JSON number, or the string `"inf"` for an infinite value.
pub fn json_num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else {
        Value::Null
    }
}

/// One row per (frame, rider). Inactive riders leave their columns empty;
/// a scenario without riders still gets one row per frame.
pub fn trace_csv(trace: &SimTrace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    let slots = trace.scooter_ids.len().max(1);
    for f in &trace.frames {
        let e = &f.ego;
        let ego = [
            num(f.t),
            num(e.pose.position.x),
            num(e.pose.position.y),
            num(e.pose.heading),
            num(e.speed),
            num(e.accel),
            e.mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
        ];
        for slot in 0..slots {
            let mut row: Vec<String> = ego.to_vec();
            match f.scooters.get(slot).copied().flatten() {
                Some(s) => row.extend([
                    trace.scooter_ids[slot].clone(),
                    num(s.pos.x),
                    num(s.pos.y),
                    num(s.vel.x),
                    num(s.vel.y),
                    num(s.forces.f_des.x),
                    num(s.forces.f_des.y),
                    num(s.forces.f_veh.x),
                    num(s.forces.f_veh.y),
                    num(s.gap),
                    num(s.ttc),
                    s.zone.as_str().to_string(),
                ]),
                None => {
                    row.push(trace.scooter_ids.get(slot).cloned().unwrap_or_default());
                    row.extend(std::iter::repeat_n(String::new(), 10));
                    row.push(f.zone.as_str().to_string());
                }
            }
            row.push(f.collided.to_string());
            w.write_record(&row).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn report_value(variant: &str, trace: &SimTrace, report: &SafetyReport) -> Value {
    let z = &report.zones;
    json!({
        "variant": variant,
        "collided": report.collided,
        "safety_index": report.index,
        "zone_seconds": {
            "safe": z.t_safe(),
            "attention": z.t_attention(),
            "alert": z.t_alert(),
            "collision": z.t_collision(),
        },
        "speed_mean": report.speed_mean,
        "speed_std": report.speed_std,
        "min_gap": json_num(report.min_gap),
        "min_ttc": json_num(report.min_ttc),
        "frames": trace.frames.len(),
        "dt": trace.dt,
    })
}

pub fn report_json(variant: &str, trace: &SimTrace) -> String {
    pretty(&report_value(variant, trace, &safety_report(trace)))
}

/// Matrix summary: one entry per variant in run order. A failed variant
/// carries its error message instead of metrics.
pub fn summary_json(entries: &[(String, Result<Value, String>)]) -> String {
    let runs: Vec<Value> = entries
        .iter()
        .map(|(name, r)| match r {
            Ok(v) => v.clone(),
            Err(msg) => json!({ "variant": name, "error": msg }),
        })
        .collect();
    pretty(&json!({ "variants": runs }))
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// SHA-256 over the canonical JSON of everything that shapes a run.
pub fn config_hash(specs: &[ScenarioSpec]) -> String {
    let mut h = Sha256::new();
    for s in specs {
        h.update(serde_json::to_vec(s).expect("spec serializes"));
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub inputs: Vec<String>,
    pub variants: Vec<String>,
    pub out_dir: String,
    pub dt: f64,
    pub duration: f64,
    pub overrides: Map<String, Value>,
    pub config_hash: String,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        pretty(&serde_json::to_value(self).expect("manifest serializes"))
    }
}
