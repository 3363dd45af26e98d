//! Reconstructs the bundled crossing encounter and prints the variant matrix.

use veisim_core::engine::run_scenario;
use veisim_core::fixture;
use veisim_core::metrics::safety_report;
use veisim_core::pipeline::{reconstruct, TimingShift};
use veisim_core::variants::build_matrix;

fn main() -> Result<(), veisim_core::Error> {
    let (file, stats) = reconstruct(
        "crossing",
        &fixture::gps_records(),
        &fixture::annotation_records(),
        TimingShift::Auto,
    )?;
    println!("timing shift {:+.1} s, keyframes {:?}", stats.timing_shift, stats.keyframes);
    for spec in build_matrix(&file.to_spec()?) {
        let started = std::time::Instant::now();
        let trace = run_scenario(&spec)?;
        let r = safety_report(&trace);
        println!(
            "{:<15} collided={:<5} at={:<6} index={:.3} mean={:.3} std={:.3} min_gap={:.2} min_ttc={:.2} ({:?})",
            spec.name,
            r.collided,
            trace.collision_time().map_or("-".into(), |t| format!("{t:.2}")),
            r.index,
            r.speed_mean,
            r.speed_std,
            r.min_gap,
            r.min_ttc,
            started.elapsed()
        );
    }
    Ok(())
}
