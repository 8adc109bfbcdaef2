//! Built-in model fixtures.
//!
//! - `chain2`: pelvis plus femur on a single hinge about z, knee marker at
//!   `(0, -0.4, 0)`. Small enough to compute forward kinematics by hand.
//! - `chain2_scaling`: `chain2` with a hip marker at the pelvis origin and a
//!   hip-knee scaling pair along the femur's y axis.
//! - `fullbody`: 13 bodies, 26 bounded joint angles, 47 markers and one
//!   scaling pair per body.

use crate::model::SkeletalModel;

pub const CHAIN2: &str = include_str!("../fixtures/chain2.model");
pub const CHAIN2_SCALING: &str = include_str!("../fixtures/chain2_scaling.model");
pub const FULLBODY: &str = include_str!("../fixtures/fullbody.model");

pub fn chain2() -> SkeletalModel {
    SkeletalModel::parse(CHAIN2).expect("chain2 fixture is valid")
}

pub fn chain2_scaling() -> SkeletalModel {
    SkeletalModel::parse(CHAIN2_SCALING).expect("chain2_scaling fixture is valid")
}

pub fn fullbody() -> SkeletalModel {
    SkeletalModel::parse(FULLBODY).expect("fullbody fixture is valid")
}
