use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::SkeletalModel;

/// Slack on joint bounds so that values that went through a degree/radian
/// round trip at a bound are still accepted.
pub const BOUND_TOLERANCE: f64 = 1e-9;
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Per-frame unknowns of the skeletal model.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    /// Joint angles in radians, indexed like [`SkeletalModel::dof_names`].
    pub angles: Vec<f64>,
    /// Per-axis body scale factors, indexed like [`SkeletalModel::bodies`].
    pub scales: Vec<Vector3<f64>>,
    /// Rotation from the pelvis frame to the ground frame.
    pub pelvis_rotation: Matrix3<f64>,
}

impl KinematicState {
    /// Neutral pose at default scales with identity pelvis rotation.
    pub fn neutral(model: &SkeletalModel) -> Self {
        KinematicState {
            angles: model.neutral_angles(),
            scales: model.default_scales(),
            pelvis_rotation: Matrix3::identity(),
        }
    }

    pub fn with_angles(mut self, angles: Vec<f64>) -> Self {
        self.angles = angles;
        self
    }

    pub fn with_scales(mut self, scales: Vec<Vector3<f64>>) -> Self {
        self.scales = scales;
        self
    }

    pub fn with_pelvis_rotation(mut self, rotation: Matrix3<f64>) -> Self {
        self.pelvis_rotation = rotation;
        self
    }

    pub fn set_angle(&mut self, model: &SkeletalModel, dof: &str, radians: f64) -> Result<()> {
        let i = model
            .dof_index(dof)
            .ok_or_else(|| Error::StateShape(format!("unknown dof `{dof}`")))?;
        self.angles[i] = radians;
        Ok(())
    }

    pub fn set_scale(&mut self, model: &SkeletalModel, body: &str, scale: Vector3<f64>) -> Result<()> {
        let i = model
            .body_index(body)
            .ok_or_else(|| Error::StateShape(format!("unknown body `{body}`")))?;
        self.scales[i] = scale;
        Ok(())
    }
}

/// Checks shapes, joint bounds, scale positivity and that the pelvis rotation
/// is proper and orthonormal.
pub fn validate_state(model: &SkeletalModel, state: &KinematicState) -> Result<()> {
    check_shape(model, state)?;
    for (i, &value) in state.angles.iter().enumerate() {
        let dof = model.dof(i);
        if !value.is_finite() || !dof.bounds.contains(value, BOUND_TOLERANCE) {
            let (min, max) = match dof.bounds {
                crate::model::Bounds::Range { min, max } => (min, max),
                crate::model::Bounds::Unbounded => (f64::NEG_INFINITY, f64::INFINITY),
            };
            return Err(Error::BoundViolation {
                dof: dof.name.clone(),
                value_deg: value.to_degrees(),
                min_deg: min.to_degrees(),
                max_deg: max.to_degrees(),
            });
        }
    }
    for (b, s) in state.scales.iter().enumerate() {
        if let Some(&bad) = s.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveScale {
                body: model.bodies()[b].name.clone(),
                value: bad,
            });
        }
    }
    check_rotation(&state.pelvis_rotation)
}

pub(crate) fn check_shape(model: &SkeletalModel, state: &KinematicState) -> Result<()> {
    if state.angles.len() != model.dof_count() {
        return Err(Error::StateShape(format!(
            "{} angles for {} dofs",
            state.angles.len(),
            model.dof_count()
        )));
    }
    if state.scales.len() != model.bodies().len() {
        return Err(Error::StateShape(format!(
            "{} scales for {} bodies",
            state.scales.len(),
            model.bodies().len()
        )));
    }
    Ok(())
}

pub(crate) fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let det = r.determinant();
    if !det.is_finite() || det < 0.0 {
        return Err(Error::ImproperRotation { det });
    }
    let deviation = crate::rotation::orthonormality_deviation(r);
    if deviation > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(Error::NonOrthonormal { deviation });
    }
    Ok(())
}
