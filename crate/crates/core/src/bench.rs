//! Throughput of batched forward kinematics.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::fk::{forward_kinematics_batch, forward_kinematics_batch_parallel};
use crate::model::SkeletalModel;
use crate::state::KinematicState;
use crate::synth::random_state;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub batch_size: usize,
    /// Frames per second over the trials.
    pub min_fps: f64,
    pub median_fps: f64,
    pub max_fps: f64,
}

/// Random valid states for the model, seeded.
pub fn bench_states(model: &SkeletalModel, count: usize, seed: u64) -> Vec<KinematicState> {
    (0..count as u64)
        .map(|i| random_state(model, seed.wrapping_add(i)))
        .collect()
}

/// Evaluates `frames` states in consecutive batches of `batch_size`, one
/// batch call each, and returns frames per second for every trial.
pub fn measure(
    model: &SkeletalModel,
    states: &[KinematicState],
    batch_size: usize,
    trials: usize,
    threads: usize,
) -> Result<Vec<f64>> {
    if batch_size == 0 || trials == 0 || states.is_empty() {
        return Err(Error::InvalidParameter("batch size, trials and frame count must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(trials);
    for _ in 0..trials {
        let start = Instant::now();
        let mut evaluated = 0usize;
        for chunk in states.chunks(batch_size) {
            let poses = if threads > 1 {
                forward_kinematics_batch_parallel(model, chunk, threads)?
            } else {
                forward_kinematics_batch(model, chunk)?
            };
            evaluated += std::hint::black_box(poses).len();
        }
        let secs = start.elapsed().as_secs_f64().max(1e-12);
        out.push(evaluated as f64 / secs);
    }
    Ok(out)
}

/// Min, median and max throughput per batch size.
pub fn run(
    model: &SkeletalModel,
    batch_sizes: &[usize],
    frames: usize,
    trials: usize,
    threads: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if batch_sizes.is_empty() {
        return Err(Error::InvalidParameter("no batch sizes given".into()));
    }
    let states = bench_states(model, frames, seed);
    batch_sizes
        .iter()
        .map(|&b| {
            let mut fps = measure(model, &states, b, trials, threads)?;
            fps.sort_by(f64::total_cmp);
            Ok(BenchRow {
                batch_size: b,
                min_fps: fps[0],
                median_fps: fps[fps.len() / 2],
                max_fps: fps[fps.len() - 1],
            })
        })
        .collect()
}

pub fn table(rows: &[BenchRow]) -> String {
    let mut out = String::from("batch_size,min_fps,median_fps,max_fps\n");
    for r in rows {
        out.push_str(&format!("{},{:.1},{:.1},{:.1}\n", r.batch_size, r.min_fps, r.median_fps, r.max_fps));
    }
    out
}
