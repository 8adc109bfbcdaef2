//! Analytic derivatives of marker positions with respect to joint angles and
//! body scale factors, plus a central-difference reference.
//!
//! Column layout: one column per state angle, then three per body (scale x, y, z).
//! Row layout: three rows (x, y, z) per marker. The pelvis rotation is an input,
//! not a column.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::fk::{FkPlan, PoseFrames};
use crate::model::SkeletalModel;
use crate::rotation::{rodrigues, rotation_block, translation_block};
use crate::state::{check_shape, validate_state, KinematicState};

pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    ancestors: Vec<Vec<bool>>,
    marker_body: Vec<usize>,
    dof_body: Vec<usize>,
}

impl Jacobian {
    fn zeros(model: &SkeletalModel) -> Self {
        let n_markers = model.markers().len();
        let n_dofs = model.dof_count();
        let n_bodies = model.bodies().len();
        let row_names = model
            .markers()
            .iter()
            .flat_map(|m| ["x", "y", "z"].map(|c| format!("{}.{c}", m.name)))
            .collect();
        let col_names = model
            .dof_names()
            .iter()
            .cloned()
            .chain(
                model
                    .bodies()
                    .iter()
                    .flat_map(|b| ["sx", "sy", "sz"].map(|c| format!("{}.{c}", b.name))),
            )
            .collect();
        let ancestors = (0..n_bodies)
            .map(|a| (0..n_bodies).map(|b| model.is_ancestor_or_self(a, b)).collect())
            .collect();
        let dof_body = (0..n_dofs)
            .map(|q| {
                let joint = &model.joints()[model.dof_joint(q)];
                model.body_index(&joint.child_body).expect("validated")
            })
            .collect();
        Jacobian {
            matrix: DMatrix::zeros(3 * n_markers, n_dofs + 3 * n_bodies),
            row_names,
            col_names,
            ancestors,
            marker_body: (0..n_markers).map(|m| model.marker_body(m)).collect(),
            dof_body,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Whether entry (row, col) may be nonzero: the coordinate must lie on the
    /// path from the root to the body carrying the row's marker.
    pub fn is_structural(&self, row: usize, col: usize) -> bool {
        let body = self.marker_body[row / 3];
        let owner = if col < self.dof_body.len() {
            self.dof_body[col]
        } else {
            (col - self.dof_body.len()) / 3
        };
        self.ancestors[owner][body]
    }
}

/// Analytic Jacobian at a validated state.
pub fn marker_jacobian(model: &SkeletalModel, state: &KinematicState) -> Result<Jacobian> {
    validate_state(model, state)?;
    let plan = FkPlan::new(model);
    let frames = plan.evaluate_frames_unchecked(state);
    Ok(marker_jacobian_from_frames(model, state, &frames))
}

/// Analytic Jacobian from already evaluated frames (no validation).
pub fn marker_jacobian_from_frames(model: &SkeletalModel, state: &KinematicState, frames: &PoseFrames) -> Jacobian {
    let mut jac = Jacobian::zeros(model);
    fill_marker_columns(model, state, frames, &mut jac.matrix, true);
    jac
}

/// Writes angle columns (and scale columns when `with_scales`) into `out`,
/// which must have `3 * markers` rows. Entries off the root-to-marker path
/// are left untouched.
pub(crate) fn fill_marker_columns(
    model: &SkeletalModel,
    state: &KinematicState,
    frames: &PoseFrames,
    out: &mut DMatrix<f64>,
    with_scales: bool,
) {
    let n_dofs = model.dof_count();
    let bodies = model.bodies();
    let joints = model.joints();

    for (mi, marker) in model.markers().iter().enumerate() {
        let p = frames.markers[mi];
        let row = 3 * mi;
        let mut body = model.marker_body(mi);
        // translation of the next point along the path, in `body`'s frame
        let mut lever_out = marker.offset;
        loop {
            let incoming = model.incoming_joint(body);
            if with_scales {
                let lever_in = incoming
                    .map(|j| joints[j].child_frame.translation)
                    .unwrap_or_else(Vector3::zeros);
                let rot = rotation_block(&frames.bodies[body]);
                let default = bodies[body].default_scale;
                let col0 = n_dofs + 3 * body;
                for axis in 0..3 {
                    let coeff = (lever_out[axis] - lever_in[axis]) / default[axis];
                    let column = rot.column(axis) * coeff;
                    out.fixed_view_mut::<3, 1>(row, col0 + axis).copy_from(&column);
                }
            }

            let Some(ji) = incoming else { break };
            let joint = &joints[ji];
            let offset = model.dof_offset(ji).expect("non-ground joint");
            let joint_rot = rotation_block(&frames.joints[ji]);
            let pivot = translation_block(&frames.joints[ji]);
            let r = p - pivot;
            let mut carried = nalgebra::Matrix3::identity();
            for (k, dof) in joint.dofs.iter().enumerate() {
                let local = carried * dof.axis;
                let omega = joint_rot * local;
                out.fixed_view_mut::<3, 1>(row, offset + k).copy_from(&omega.cross(&r));
                carried = rodrigues(&local, state.angles[offset + k]) * carried;
            }
            lever_out = joint.parent_frame.translation;
            body = model.body_parent(body).expect("non-root body has a parent");
        }
    }
}

/// Central differences of forward kinematics over every angle and scale
/// coordinate. Bounds are ignored while perturbing.
pub fn finite_difference_jacobian(model: &SkeletalModel, state: &KinematicState, h: f64) -> Result<Jacobian> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("finite-difference step must be > 0, got {h}")));
    }
    check_shape(model, state)?;
    let plan = FkPlan::new(model);
    let mut jac = Jacobian::zeros(model);
    let n_dofs = model.dof_count();
    let mut column = |col: usize, plus: &KinematicState, minus: &KinematicState| {
        let a = plan.evaluate_unchecked(plus).marker_positions;
        let b = plan.evaluate_unchecked(minus).marker_positions;
        for (mi, (pa, pb)) in a.iter().zip(&b).enumerate() {
            let d = (pa - pb) / (2.0 * h);
            jac.matrix.fixed_view_mut::<3, 1>(3 * mi, col).copy_from(&d);
        }
    };
    for q in 0..n_dofs {
        let mut plus = state.clone();
        let mut minus = state.clone();
        plus.angles[q] += h;
        minus.angles[q] -= h;
        column(q, &plus, &minus);
    }
    for b in 0..model.bodies().len() {
        for axis in 0..3 {
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.scales[b][axis] += h;
            minus.scales[b][axis] -= h;
            column(n_dofs + 3 * b + axis, &plus, &minus);
        }
    }
    Ok(jac)
}

/// `max |A - B| / (1 + |B|)` over entries.
pub fn max_relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .map(|(a, b)| (a - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max)
}
