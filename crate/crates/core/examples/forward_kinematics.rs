//! Marker positions of the two-body chain at a few hand-checkable poses, then
//! a posed full-body model.
//!
//! cargo run --example forward_kinematics

use nalgebra::Vector3;
use skelkin::{fixtures, forward_kinematics, KinematicState};

fn main() -> skelkin::Result<()> {
    let chain = fixtures::chain2();
    let neutral = KinematicState::neutral(&chain);
    let flexed = neutral.clone().with_angles(vec![90f64.to_radians()]);
    let mut stretched = neutral.clone();
    stretched.set_scale(&chain, "femur", Vector3::new(1.0, 2.0, 1.0))?;

    for (label, state) in [("neutral", &neutral), ("hip 90 deg", &flexed), ("femur x2 in y", &stretched)] {
        let pose = forward_kinematics(&chain, state)?;
        let knee = pose.marker(&chain, "KNEE").unwrap();
        println!("{label:>14}: KNEE = ({:.6}, {:.6}, {:.6})", knee.x, knee.y, knee.z);
    }

    let body = fixtures::fullbody();
    let mut state = KinematicState::neutral(&body);
    state.set_angle(&body, "hip_r_flexion", 45f64.to_radians())?;
    state.set_angle(&body, "knee_r_flexion", 60f64.to_radians())?;
    state.set_angle(&body, "elbow_l_flexion", 90f64.to_radians())?;
    let pose = forward_kinematics(&body, &state)?;
    println!("\nfull body, {} markers:", body.markers().len());
    for name in ["RASI", "RKNE", "RANK", "RTOE", "LELB", "LWRA"] {
        let p = pose.marker(&body, name).unwrap();
        println!("{name:>5} = ({:+.4}, {:+.4}, {:+.4})", p.x, p.y, p.z);
    }
    Ok(())
}
