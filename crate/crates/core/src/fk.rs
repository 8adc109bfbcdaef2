//! Forward kinematics over the scalable kinematic tree.
//!
//! Every body transform is a homogeneous 4x4 matrix
//! `parent<-child = parent<-joint * motion * (child<-joint)^-1`, accumulated in
//! level order from the root. Joint-frame translations and marker offsets are
//! stretched by the ratio of estimated to default body scale. Positions are
//! root-relative: the pelvis sits at the origin and only its rotation is free.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dof, Frame, SkeletalModel};
use crate::rotation::{euler_xyz_to_matrix, homogeneous, rigid_inverse, rodrigues, rotation_block};
use crate::state::{check_rotation, check_shape, validate_state, KinematicState};

/// Output of forward kinematics, root-relative, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseResult {
    /// Indexed like [`SkeletalModel::markers`].
    pub marker_positions: Vec<Vector3<f64>>,
    /// Origin of each body frame, indexed like [`SkeletalModel::bodies`].
    pub joint_positions: Vec<Vector3<f64>>,
}

impl PoseResult {
    pub fn marker(&self, model: &SkeletalModel, name: &str) -> Option<Vector3<f64>> {
        model.marker_index(name).map(|i| self.marker_positions[i])
    }

    pub fn joint(&self, model: &SkeletalModel, body: &str) -> Option<Vector3<f64>> {
        model.body_index(body).map(|i| self.joint_positions[i])
    }
}

/// Every intermediate transform of one evaluation.
#[derive(Debug, Clone)]
pub struct PoseFrames {
    /// ground<-body for each body.
    pub bodies: Vec<Matrix4<f64>>,
    /// ground<-joint (parent side, before the motion) for each joint; identity for the ground joint.
    pub joints: Vec<Matrix4<f64>>,
    /// Joint motion rotations, identity for the ground joint.
    pub motions: Vec<Matrix3<f64>>,
    pub markers: Vec<Vector3<f64>>,
}

/// `T ⊙ (scale ⊘ default)`.
pub fn scaled_translation(
    t: &Vector3<f64>,
    scale: &Vector3<f64>,
    default: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    if default.iter().any(|&d| d == 0.0) {
        return Err(Error::InvalidParameter("zero default scale component".into()));
    }
    Ok(scale_ratio(t, scale, default))
}

#[inline]
fn scale_ratio(t: &Vector3<f64>, scale: &Vector3<f64>, default: &Vector3<f64>) -> Vector3<f64> {
    t.component_mul(&scale.component_div(default))
}

/// Rotation of a joint's motion as a homogeneous matrix. Each successive axis is
/// carried by the rotations before it: `R2 = G(R1 A2, θ2)`, `R3 = G(R2 R1 A3, θ3)`,
/// and the block is `R3 R2 R1`.
pub fn motion_rotation(dofs: &[Dof], angles: &[f64]) -> Result<Matrix4<f64>> {
    if dofs.len() != angles.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} angles for {} dofs",
            angles.len(),
            dofs.len()
        )));
    }
    let axes: Vec<Vector3<f64>> = dofs.iter().map(|d| d.axis).collect();
    Ok(homogeneous(&motion_block(&axes, angles), &Vector3::zeros()))
}

#[inline]
fn motion_block(axes: &[Vector3<f64>], angles: &[f64]) -> Matrix3<f64> {
    let mut acc = Matrix3::identity();
    for (axis, &theta) in axes.iter().zip(angles) {
        let carried = acc * axis;
        acc = rodrigues(&carried, theta) * acc;
    }
    acc
}

/// Joint frame as a 4x4 matrix: Euler rotation block with scaled translation.
pub fn joint_frame_transform(
    frame: &Frame,
    scale: &Vector3<f64>,
    default: &Vector3<f64>,
) -> Result<Matrix4<f64>> {
    let t = scaled_translation(&frame.translation, scale, default)?;
    Ok(homogeneous(&euler_xyz_to_matrix(&frame.orientation), &t))
}

/// parent<-child transform of one (non-ground) joint.
pub fn body_transform(model: &SkeletalModel, joint: usize, state: &KinematicState) -> Result<Matrix4<f64>> {
    check_shape(model, state)?;
    let j = &model.joints()[joint];
    let offset = model
        .dof_offset(joint)
        .ok_or_else(|| Error::InvalidParameter(format!("`{}` is the ground joint", j.name)))?;
    let parent = model.body_index(&j.parent_body).expect("validated");
    let child = model.body_index(&j.child_body).expect("validated");
    let bodies = model.bodies();
    let to_parent = joint_frame_transform(&j.parent_frame, &state.scales[parent], &bodies[parent].default_scale)?;
    let to_child = joint_frame_transform(&j.child_frame, &state.scales[child], &bodies[child].default_scale)?;
    let motion = motion_rotation(&j.dofs, &state.angles[offset..offset + j.dofs.len()])?;
    Ok(to_parent * motion * rigid_inverse(&to_child))
}

/// ground<-pelvis. The rotation block is the supplied pelvis rotation (times the
/// inverse ground-joint child orientation, identity in practice); translation is zero.
pub fn pelvis_transform(model: &SkeletalModel, state: &KinematicState) -> Result<Matrix4<f64>> {
    check_rotation(&state.pelvis_rotation)?;
    Ok(homogeneous(&(state.pelvis_rotation * ground_child_inverse(model)), &Vector3::zeros()))
}

fn ground_child_inverse(model: &SkeletalModel) -> Matrix3<f64> {
    model
        .ground_joint()
        .map(|g| euler_xyz_to_matrix(&g.child_frame.orientation).transpose())
        .unwrap_or_else(Matrix3::identity)
}

pub fn forward_kinematics(model: &SkeletalModel, state: &KinematicState) -> Result<PoseResult> {
    FkPlan::new(model).evaluate(state)
}

/// Evaluates many states with one traversal plan. Results are identical to
/// calling [`forward_kinematics`] on each state.
pub fn forward_kinematics_batch(model: &SkeletalModel, states: &[KinematicState]) -> Result<Vec<PoseResult>> {
    let plan = FkPlan::new(model);
    states
        .iter()
        .enumerate()
        .map(|(i, s)| plan.evaluate(s).map_err(|e| Error::at(i, e)))
        .collect()
}

/// Parallel variant of [`forward_kinematics_batch`]; output order and values do
/// not depend on the thread count.
pub fn forward_kinematics_batch_parallel(
    model: &SkeletalModel,
    states: &[KinematicState],
    threads: usize,
) -> Result<Vec<PoseResult>> {
    if threads <= 1 {
        return forward_kinematics_batch(model, states);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let plan = FkPlan::new(model);
    pool.install(|| {
        states
            .par_iter()
            .enumerate()
            .map(|(i, s)| plan.evaluate(s).map_err(|e| Error::at(i, e)))
            .collect()
    })
}

#[derive(Debug, Clone)]
struct JointStep {
    joint: usize,
    parent: usize,
    child: usize,
    parent_rot: Matrix3<f64>,
    parent_t: Vector3<f64>,
    child_rot: Matrix3<f64>,
    child_t: Vector3<f64>,
    dof_offset: usize,
    axes: Vec<Vector3<f64>>,
}

/// Precomputed traversal for one model: level-order joint steps with the
/// Euler frame rotations already converted. Building it is the per-model
/// bookkeeping that batch evaluation amortizes.
#[derive(Debug, Clone)]
pub struct FkPlan<'m> {
    model: &'m SkeletalModel,
    ground_child_inv: Matrix3<f64>,
    steps: Vec<JointStep>,
}

impl<'m> FkPlan<'m> {
    pub fn new(model: &'m SkeletalModel) -> Self {
        let steps = model
            .level_order()
            .iter()
            .filter_map(|&body| model.incoming_joint(body))
            .map(|ji| {
                let j = &model.joints()[ji];
                JointStep {
                    joint: ji,
                    parent: model.body_index(&j.parent_body).expect("validated"),
                    child: model.body_index(&j.child_body).expect("validated"),
                    parent_rot: euler_xyz_to_matrix(&j.parent_frame.orientation),
                    parent_t: j.parent_frame.translation,
                    child_rot: euler_xyz_to_matrix(&j.child_frame.orientation),
                    child_t: j.child_frame.translation,
                    dof_offset: model.dof_offset(ji).expect("non-ground joint"),
                    axes: j.dofs.iter().map(|d| d.axis).collect(),
                }
            })
            .collect();
        FkPlan {
            model,
            ground_child_inv: ground_child_inverse(model),
            steps,
        }
    }

    pub fn model(&self) -> &'m SkeletalModel {
        self.model
    }

    pub fn evaluate(&self, state: &KinematicState) -> Result<PoseResult> {
        validate_state(self.model, state)?;
        Ok(self.evaluate_unchecked(state))
    }

    /// Evaluation without bound or rotation checks; shapes must still match.
    pub fn evaluate_unchecked(&self, state: &KinematicState) -> PoseResult {
        let frames = self.evaluate_frames_unchecked(state);
        PoseResult {
            joint_positions: frames.bodies.iter().map(crate::rotation::translation_block).collect(),
            marker_positions: frames.markers,
        }
    }

    pub fn evaluate_frames_unchecked(&self, state: &KinematicState) -> PoseFrames {
        let model = self.model;
        let bodies = model.bodies();
        let n_joints = model.joints().len();
        let mut body_tf = vec![Matrix4::identity(); bodies.len()];
        let mut joint_tf = vec![Matrix4::identity(); n_joints];
        let mut motions = vec![Matrix3::identity(); n_joints];

        body_tf[model.root()] = homogeneous(&(state.pelvis_rotation * self.ground_child_inv), &Vector3::zeros());
        for step in &self.steps {
            let parent_scale = &state.scales[step.parent];
            let child_scale = &state.scales[step.child];
            let to_parent = homogeneous(
                &step.parent_rot,
                &scale_ratio(&step.parent_t, parent_scale, &bodies[step.parent].default_scale),
            );
            let to_child = homogeneous(
                &step.child_rot,
                &scale_ratio(&step.child_t, child_scale, &bodies[step.child].default_scale),
            );
            let angles = &state.angles[step.dof_offset..step.dof_offset + step.axes.len()];
            let motion = motion_block(&step.axes, angles);
            let joint = body_tf[step.parent] * to_parent;
            body_tf[step.child] = joint * homogeneous(&motion, &Vector3::zeros()) * rigid_inverse(&to_child);
            joint_tf[step.joint] = joint;
            motions[step.joint] = motion;
        }

        let markers = model
            .markers()
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let b = model.marker_body(i);
                let d = scale_ratio(&m.offset, &state.scales[b], &bodies[b].default_scale);
                let p = body_tf[b] * d.push(1.0);
                Vector3::new(p.x, p.y, p.z)
            })
            .collect();
        PoseFrames {
            bodies: body_tf,
            joints: joint_tf,
            motions,
            markers,
        }
    }
}

/// All rotation blocks produced by one evaluation (bodies, joints, motions).
pub fn rotation_blocks(frames: &PoseFrames) -> impl Iterator<Item = Matrix3<f64>> + '_ {
    frames
        .bodies
        .iter()
        .chain(frames.joints.iter())
        .map(rotation_block)
        .chain(frames.motions.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Bounds;
    use crate::rotation::axis_angle_to_matrix;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn dof(axis: Vector3<f64>) -> Dof {
        Dof {
            name: "q".into(),
            axis,
            bounds: Bounds::Range { min: -PI, max: PI },
        }
    }

    #[test]
    fn motion_identity_at_zero() {
        let dofs = [dof(Vector3::z()), dof(Vector3::x()), dof(Vector3::y())];
        assert_eq!(motion_rotation(&dofs, &[0.0; 3]).unwrap(), Matrix4::identity());
    }

    #[test]
    fn motion_single_dof() {
        let m = motion_rotation(&[dof(Vector3::z())], &[FRAC_PI_2]).unwrap();
        let expected = axis_angle_to_matrix(&Vector3::z(), FRAC_PI_2).unwrap();
        assert_relative_eq!(rotation_block(&m), expected, epsilon = 1e-15);
    }

    #[test]
    fn motion_carries_axes_forward() {
        // oracle: apply G to pre-rotated axes step by step
        let a1 = Vector3::z();
        let a2 = Vector3::x();
        let r1 = axis_angle_to_matrix(&a1, FRAC_PI_2).unwrap();
        let a2_carried = r1 * a2;
        assert_relative_eq!(a2_carried, Vector3::y(), epsilon = 1e-15);
        let r2 = axis_angle_to_matrix(&a2_carried, FRAC_PI_2).unwrap();
        let oracle = r2 * r1;
        let m = motion_rotation(&[dof(a1), dof(a2)], &[FRAC_PI_2, FRAC_PI_2]).unwrap();
        assert_relative_eq!(rotation_block(&m), oracle, epsilon = 1e-15);
        // (0,-1,0) -> (1,0,0) under R1, then R2 about y maps x to -z
        assert_relative_eq!(oracle * Vector3::new(0.0, -1.0, 0.0), Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn motion_rejects_wrong_angle_count() {
        assert!(motion_rotation(&[dof(Vector3::z())], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn scaled_translation_cases() {
        let one = Vector3::repeat(1.0);
        assert_eq!(
            scaled_translation(&Vector3::new(0.0, 0.1, 0.0), &Vector3::new(1.0, 2.0, 1.0), &one).unwrap(),
            Vector3::new(0.0, 0.2, 0.0)
        );
        let t = Vector3::new(0.3, -0.2, 0.9);
        let s = Vector3::new(1.3, 0.7, 2.0);
        assert_eq!(scaled_translation(&t, &s, &s).unwrap(), t);
        let r = scaled_translation(&Vector3::new(0.1, 0.2, 0.3), &Vector3::new(2.0, 4.0, 6.0), &Vector3::repeat(2.0)).unwrap();
        assert_relative_eq!(r, Vector3::new(0.1, 0.4, 0.9), epsilon = 1e-15);
        assert!(scaled_translation(&t, &s, &Vector3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn joint_frame_cases() {
        let one = Vector3::repeat(1.0);
        assert_eq!(joint_frame_transform(&Frame::identity(), &one, &one).unwrap(), Matrix4::identity());
        let f = Frame {
            orientation: Vector3::new(0.0, 0.0, FRAC_PI_2),
            translation: Vector3::zeros(),
        };
        let m = joint_frame_transform(&f, &one, &one).unwrap();
        assert_relative_eq!(rotation_block(&m), axis_angle_to_matrix(&Vector3::z(), FRAC_PI_2).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn chain2_body_transform() {
        let m = fixtures::chain2();
        let s = KinematicState::neutral(&m);
        assert_eq!(body_transform(&m, 0, &s).unwrap(), Matrix4::identity());
        let s = s.with_angles(vec![FRAC_PI_2]);
        let t = body_transform(&m, 0, &s).unwrap();
        let p = t * nalgebra::Vector4::new(0.0, -0.4, 0.0, 1.0);
        assert_relative_eq!(p, nalgebra::Vector4::new(0.4, 0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn chain2_hand_values() {
        let m = fixtures::chain2();
        let knee = |s: &KinematicState| forward_kinematics(&m, s).unwrap().marker(&m, "KNEE").unwrap();
        let s = KinematicState::neutral(&m);
        assert_eq!(knee(&s), Vector3::new(0.0, -0.4, 0.0));
        assert_relative_eq!(knee(&s.clone().with_angles(vec![FRAC_PI_2])), Vector3::new(0.4, 0.0, 0.0), epsilon = 1e-12);
        let mut scaled = s.clone();
        scaled.scales[1] = Vector3::new(1.0, 2.0, 1.0);
        assert_relative_eq!(knee(&scaled), Vector3::new(0.0, -0.8, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn root_is_at_origin() {
        let m = fixtures::fullbody();
        let pose = forward_kinematics(&m, &KinematicState::neutral(&m)).unwrap();
        assert_eq!(pose.joint_positions[m.root()], Vector3::zeros());
    }

    #[test]
    fn pelvis_rotation_rotates_everything() {
        let m = fixtures::fullbody();
        let base = KinematicState::neutral(&m);
        let r = axis_angle_to_matrix(&Vector3::z(), FRAC_PI_2).unwrap();
        let p0 = forward_kinematics(&m, &base).unwrap();
        let p1 = forward_kinematics(&m, &base.with_pelvis_rotation(r)).unwrap();
        for (a, b) in p0.marker_positions.iter().zip(&p1.marker_positions) {
            assert_relative_eq!(r * a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn pelvis_transform_identity() {
        let m = fixtures::chain2();
        assert_eq!(pelvis_transform(&m, &KinematicState::neutral(&m)).unwrap(), Matrix4::identity());
    }

    #[test]
    fn batch_matches_single() {
        let m = fixtures::chain2();
        let s = KinematicState::neutral(&m).with_angles(vec![0.3]);
        let single = forward_kinematics(&m, &s).unwrap();
        assert_eq!(forward_kinematics_batch(&m, &[s.clone()]).unwrap(), vec![single.clone()]);
        let many = vec![s; 64];
        let out = forward_kinematics_batch(&m, &many).unwrap();
        assert!(out.iter().all(|p| *p == single));
    }

    #[test]
    fn batch_reports_failing_index() {
        let m = fixtures::chain2();
        let good = KinematicState::neutral(&m);
        let bad = good.clone().with_angles(vec![4.0]);
        match forward_kinematics_batch(&m, &[good.clone(), good, bad]).unwrap_err() {
            Error::AtIndex { index, .. } => assert_eq!(index, 2),
            other => panic!("unexpected {other}"),
        }
    }
}
