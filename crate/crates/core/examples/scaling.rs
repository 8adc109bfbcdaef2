//! Body scales from a calibration pose: markers of a full-body model stretched
//! by 10% along each scaling-pair axis are rendered and the scales recovered.
//!
//! cargo run --example scaling

use skelkin::{fixtures, forward_kinematics, scale_model, KinematicState, MarkerFrame};

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let mut truth = KinematicState::neutral(&model);
    for pair in model.scaling_pairs() {
        let b = model.body_index(&pair.body).unwrap();
        truth.scales[b][pair.axis] = 1.1 * model.bodies()[b].default_scale[pair.axis];
    }
    let tpose = MarkerFrame::from_pose(&model, &forward_kinematics(&model, &truth)?);
    let scales = scale_model(&model, &tpose)?;
    println!("{:<10} {:>8} {:>8} {:>8}", "body", "sx", "sy", "sz");
    for (body, s) in model.bodies().iter().zip(&scales) {
        println!("{:<10} {:>8.5} {:>8.5} {:>8.5}", body.name, s.x, s.y, s.z);
    }
    Ok(())
}
