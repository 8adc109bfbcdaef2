//! How marker noise propagates into joint-angle error.
//!
//! cargo run --release --example sensitivity_study

use skelkin::synth::{generate_trajectory, sensitivity_csv, sensitivity_study, TrajectorySpec};
use skelkin::{fixtures, IkSettings};

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let truth = generate_trajectory(&model, &TrajectorySpec::random(&model, 2.0, 30.0, 0.6, 1))?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let rows = sensitivity_study(
        &model,
        &model.default_scales(),
        &truth,
        &[0.0, 5.0, 10.0, 20.0, 30.0],
        &[1, 2, 3],
        &IkSettings::default(),
        threads,
    )?;
    print!("{}", sensitivity_csv(&rows));
    Ok(())
}
