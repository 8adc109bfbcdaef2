//! Gap filling and smoothing of a noisy marker recording, with the mean
//! landmark velocity before and after.
//!
//! cargo run --example smoothing

use skelkin::metrics::mv_landmarks;
use skelkin::sequence::{interpolate_gaps, smooth_markers, SmoothMethod, DEFAULT_MAX_GAP};
use skelkin::synth::{generate_trajectory, perturb_markers, render_markers, NoiseModel, TrajectorySpec};
use skelkin::fixtures;

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let truth = generate_trajectory(&model, &TrajectorySpec::random(&model, 3.0, 30.0, 0.5, 2))?;
    let clean = render_markers(&model, &model.default_scales(), &truth)?;
    let mut noisy = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: 5.0 }, 9)?;
    // occlude the right knee marker for 6 frames
    let knee = noisy.marker_column("RKNE").unwrap();
    for t in 20..26 {
        noisy.frames[t][knee] = None;
    }
    let filled = interpolate_gaps(&noisy, DEFAULT_MAX_GAP);
    let names = model.marker_names();
    println!("clean        MV {:8.1} mm/s", mv_landmarks(&clean, &names)?);
    println!("noisy        MV {:8.1} mm/s", mv_landmarks(&filled, &names)?);
    for (label, method) in [
        ("window 5", SmoothMethod::MovingAverage { window: 5 }),
        ("window 9", SmoothMethod::MovingAverage { window: 9 }),
        ("alpha 0.3", SmoothMethod::Exponential { alpha: 0.3 }),
    ] {
        let smoothed = smooth_markers(&filled, method)?;
        println!("{label:<12} MV {:8.1} mm/s", mv_landmarks(&smoothed, &names)?);
    }
    Ok(())
}
