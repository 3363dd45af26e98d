//! End-to-end operations behind the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::engine::{overlap_search, run_scenario, SimTrace, ValidationError};
use crate::geo::{compute_scenario_bounds, GeoError};
use crate::ingest::{
    build_tracks, parse_annotations, parse_gps, synchronize, AgentKind, AnnotationRecord, GpsRecord, ParseError,
    SyncError, DEFAULT_SYNC_TOLERANCE,
};
use crate::metrics::safety_report;
use crate::output::{config_hash, report_json, report_value, summary_json, trace_csv, RunManifest};
use crate::scenario::{ScenarioError, ScenarioFile};
use crate::variants::{build_variant, ScenarioSpec, VariantId};

pub const BOUNDS_MARGIN: f64 = 10.0;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {}: {source}", .source.line())]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("synchronization failed: {0}")]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("no simulable e-scooter track to align")]
    NoRider,
    #[error("timing search failed: {0}")]
    Traj(#[from] crate::traj::TrajError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_file(path: &Path) -> Result<fs::File, Error> {
    fs::File::open(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(io_err(path))
}

/// How the rider timeline is shifted during reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TimingShift {
    /// Search for the shift that brings ego and rider closest.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructStats {
    pub gps_records: usize,
    pub annotations: usize,
    pub dropped: usize,
    /// (agent id, keyframe count) in track order.
    pub keyframes: Vec<(String, usize)>,
    pub warnings: Vec<String>,
    pub timing_shift: f64,
}

pub fn load_logs(gps_path: &Path, ann_path: &Path) -> Result<(Vec<GpsRecord>, Vec<AnnotationRecord>), Error> {
    let gps = parse_gps(read_file(gps_path)?).map_err(|source| Error::Parse {
        path: gps_path.display().to_string(),
        source,
    })?;
    let ann = parse_annotations(read_file(ann_path)?).map_err(|source| Error::Parse {
        path: ann_path.display().to_string(),
        source,
    })?;
    Ok((gps, ann))
}

/// Tracks, bounds and defaults for one logged encounter.
pub fn reconstruct(
    name: &str,
    gps: &[GpsRecord],
    ann: &[AnnotationRecord],
    shift: TimingShift,
) -> Result<(ScenarioFile, ReconstructStats), Error> {
    let sync = synchronize(gps, ann, DEFAULT_SYNC_TOLERANCE)?;
    let set = build_tracks(&sync);
    let bounds = compute_scenario_bounds(&set.tracks, sync.origin, BOUNDS_MARGIN)?;
    let mut file = ScenarioFile::new(name, sync.origin, bounds, &set.tracks);
    if let (Some(first), Some(last)) = (gps.first(), gps.last()) {
        file.defaults.duration = last.t - first.t;
    }

    file.defaults.timing_shift = match shift {
        TimingShift::Fixed(d) => d,
        TimingShift::Auto => {
            let ego = &set.tracks[0];
            let geom = file.defaults.geometry;
            let mut best: Option<(f64, f64)> = None;
            for rider in set.tracks.iter().filter(|t| t.kind == AgentKind::Escooter && t.is_simulable()) {
                let (delta, gap) = overlap_search(ego, rider, &geom)?;
                if best.is_none_or(|(_, g)| gap < g) {
                    best = Some((delta, gap));
                }
            }
            best.ok_or(Error::NoRider)?.0
        }
    };

    let stats = ReconstructStats {
        gps_records: gps.len(),
        annotations: ann.len(),
        dropped: sync.dropped,
        keyframes: set.tracks.iter().map(|t| (t.agent_id.clone(), t.keyframes.len())).collect(),
        warnings: set.warnings,
        timing_shift: file.defaults.timing_shift,
    };
    Ok((file, stats))
}

pub fn cmd_reconstruct(gps_path: &Path, ann_path: &Path, out: &Path, shift: TimingShift) -> Result<ReconstructStats, Error> {
    let (gps, ann) = load_logs(gps_path, ann_path)?;
    let name = out.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let (file, stats) = reconstruct(name, &gps, &ann, shift)?;
    file.save(out)?;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

impl Overrides {
    fn apply(&self, spec: &mut ScenarioSpec) {
        if let Some(dt) = self.dt {
            spec.dt = dt;
        }
        if let Some(d) = self.duration {
            spec.duration = d;
        }
    }

    fn to_map(self) -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(dt) = self.dt {
            m.insert("dt".into(), dt.into());
        }
        if let Some(d) = self.duration {
            m.insert("duration".into(), d.into());
        }
        m
    }
}

pub fn variant_spec(file: &ScenarioFile, id: VariantId, overrides: Overrides) -> Result<ScenarioSpec, Error> {
    let mut base = file.to_spec()?;
    overrides.apply(&mut base);
    Ok(build_variant(&base, id))
}

pub fn simulate(file: &ScenarioFile, id: VariantId, overrides: Overrides) -> Result<(ScenarioSpec, SimTrace), Error> {
    let spec = variant_spec(file, id, overrides)?;
    let trace = run_scenario(&spec)?;
    Ok((spec, trace))
}

fn write_run(dir: &Path, id: VariantId, trace: &SimTrace) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("trace.csv"), &trace_csv(trace))?;
    write_file(&dir.join("report.json"), &report_json(id.name(), trace))
}

fn manifest(inputs: &[&Path], ids: &[VariantId], out: &Path, specs: &[ScenarioSpec], overrides: Overrides) -> RunManifest {
    RunManifest {
        tool: "veisim",
        version: env!("CARGO_PKG_VERSION"),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        variants: ids.iter().map(|v| v.name().to_string()).collect(),
        out_dir: out.display().to_string(),
        dt: specs.first().map_or(0.0, |s| s.dt),
        duration: specs.first().map_or(0.0, |s| s.duration),
        overrides: overrides.to_map(),
        config_hash: config_hash(specs),
    }
}

pub fn cmd_run(scenario: &Path, id: VariantId, out: &Path, overrides: Overrides) -> Result<SimTrace, Error> {
    let file = ScenarioFile::load(scenario)?;
    let (spec, trace) = simulate(&file, id, overrides)?;
    write_run(out, id, &trace)?;
    let m = manifest(&[scenario], &[id], out, std::slice::from_ref(&spec), overrides);
    write_file(&out.join("manifest.json"), &m.to_json())?;
    Ok(trace)
}

/// Outcome of one matrix entry.
pub struct MatrixRun {
    pub id: VariantId,
    pub dir: PathBuf,
    pub result: Result<SimTrace, Error>,
}

/// Runs all five variants concurrently, one output directory each, then
/// writes `summary.json` and `manifest.json`. A failing variant is reported
/// in the summary and does not stop the others.
pub fn cmd_matrix(scenario: &Path, out: &Path, overrides: Overrides) -> Result<Vec<MatrixRun>, Error> {
    let file = ScenarioFile::load(scenario)?;
    fs::create_dir_all(out).map_err(io_err(out))?;

    let runs: Vec<MatrixRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = VariantId::ALL
            .iter()
            .map(|&id| {
                let file = &file;
                let dir = out.join(id.name());
                scope.spawn(move || {
                    let result = simulate(file, id, overrides).and_then(|(_, trace)| {
                        write_run(&dir, id, &trace)?;
                        Ok(trace)
                    });
                    MatrixRun { id, dir, result }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
    });

    let entries: Vec<(String, Result<Value, String>)> = runs
        .iter()
        .map(|r| {
            let v = match &r.result {
                Ok(trace) => Ok(report_value(r.id.name(), trace, &safety_report(trace))),
                Err(e) => {
                    log::error!("variant {}: {e}", r.id);
                    Err(e.to_string())
                }
            };
            (r.id.name().to_string(), v)
        })
        .collect();
    write_file(&out.join("summary.json"), &summary_json(&entries))?;

    let specs: Vec<ScenarioSpec> = VariantId::ALL
        .iter()
        .filter_map(|&id| variant_spec(&file, id, overrides).ok())
        .collect();
    let m = manifest(&[scenario], &VariantId::ALL, out, &specs, overrides);
    write_file(&out.join("manifest.json"), &m.to_json())?;
    Ok(runs)
}
