//! Deterministic 2D simulator for vehicle and e-scooter encounters.
//!
//! Logs are reconstructed into spline tracks, turned into variants by
//! shifting the rider's timing and swapping in social-force dynamics, and
//! replayed against an ego vehicle that either holds its speed or runs a
//! distance-triggered braking planner.

pub mod cap;
pub mod engine;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod sfm;
pub mod traj;
pub mod variants;
pub mod fixture;
pub mod output;
pub mod pipeline;
pub mod scenario;

pub use pipeline::Error;
