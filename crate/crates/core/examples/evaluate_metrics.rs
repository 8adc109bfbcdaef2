//! Metric report for an estimate that is the ground truth plus a constant
//! 2 degree bias and slightly jittered markers.
//!
//! cargo run --example evaluate_metrics

use skelkin::metrics::{evaluate, total_loss, LandmarkInput, LossComponents, LossWeights, RootAlignment};
use skelkin::synth::{generate_trajectory, perturb_markers, render_markers, NoiseModel, TrajectorySpec};
use skelkin::fixtures;

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let gt = generate_trajectory(&model, &TrajectorySpec::random(&model, 2.0, 30.0, 0.5, 3))?;
    let mut est = gt.clone();
    for frame in &mut est.angles {
        for a in frame.iter_mut().flatten() {
            *a += 2f64.to_radians();
        }
    }
    let gt_markers = render_markers(&model, &model.default_scales(), &gt)?;
    let est_markers = perturb_markers(&gt_markers, &NoiseModel::Gaussian { sigma_mm: 3.0 }, 5)?;
    let bony: Vec<String> = model.markers().iter().filter(|m| m.bony).map(|m| m.name.clone()).collect();
    let landmarks = LandmarkInput {
        est: &est_markers,
        gt: &gt_markers,
        landmarks: bony,
        root: RootAlignment::Centroid,
    };
    let report = evaluate(&est, &gt, Some(&landmarks), Some(&model))?;
    print!("{}", report.to_text());
    println!();
    print!("{}", report.per_dof_csv());

    let unit = LossComponents { joint: 1.0, marker: 1.0, body: 1.0, angle: 1.0 };
    println!("\nweighted loss of unit components: {}", total_loss(&unit, &LossWeights::default()));
    Ok(())
}
