//! Per-frame inverse kinematics on a synthetic recording, then the effect of
//! one displaced marker on joint rejection.
//!
//! cargo run --release --example inverse_kinematics

use nalgebra::Vector3;
use skelkin::metrics::angle_errors;
use skelkin::synth::{generate_trajectory, perturb_markers, render_markers, NoiseModel, TrajectorySpec};
use skelkin::{fixtures, solve_trajectory, IkSettings};

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let scales = model.default_scales();
    let truth = generate_trajectory(&model, &TrajectorySpec::random(&model, 2.0, 30.0, 0.6, 11))?;
    let markers = render_markers(&model, &scales, &truth)?;
    let settings = IkSettings::default();

    let solved = solve_trajectory(&model, &scales, &markers, &settings)?;
    let errors = angle_errors(&solved.angles, &truth)?;
    let iterations: usize = solved.frames.iter().flatten().map(|f| f.iterations).sum();
    println!(
        "clean markers: {} frames, {} LM iterations, MAE {:.2e} deg",
        markers.len(),
        iterations,
        errors.pooled.mae
    );

    for mm in [15.0, 25.0] {
        let displaced = perturb_markers(
            &markers,
            &NoiseModel::Offset {
                marker: "RKNE".into(),
                offset_mm: Vector3::new(0.0, -mm, 0.0),
            },
            0,
        )?;
        let solved = solve_trajectory(&model, &scales, &displaced, &settings)?;
        let first = solved.frames[0].as_ref().unwrap();
        println!(
            "RKNE moved {mm} mm along the femur: residual {:.1} mm, rejected joints {:?}",
            1000.0 * first.per_marker_residual["RKNE"],
            first.rejected_joints
        );
    }
    Ok(())
}
