//! Rotation utilities: Rodrigues' formula, the fixed Euler convention used by
//! joint frames, SO(3) increments and homogeneous transform helpers.

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::error::{Error, Result};

/// Tolerance on `|A| - 1` for declared rotation axes.
pub const AXIS_UNIT_TOLERANCE: f64 = 1e-9;

/// Rotation by `angle` radians about the unit axis `axis` (Rodrigues' formula).
pub fn axis_angle_to_matrix(axis: &Vector3<f64>, angle: f64) -> Result<Matrix3<f64>> {
    let norm = axis.norm();
    if (norm - 1.0).abs() > AXIS_UNIT_TOLERANCE {
        return Err(Error::NonUnitAxis {
            context: "axis-angle rotation".into(),
            norm,
        });
    }
    Ok(rodrigues(axis, angle))
}

/// Rodrigues' formula without the unit-norm check. `axis` must already be unit length.
#[inline]
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.cross_matrix();
    let (s, c) = angle.sin_cos();
    Matrix3::identity() + k * s + k * k * (1.0 - c)
}

/// Intrinsic X-then-Y-then-Z Euler angles (radians) to a rotation matrix:
/// `Rx(o.x) * Ry(o.y) * Rz(o.z)`.
pub fn euler_xyz_to_matrix(o: &Vector3<f64>) -> Matrix3<f64> {
    let (sx, cx) = o.x.sin_cos();
    let (sy, cy) = o.y.sin_cos();
    let (sz, cz) = o.z.sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rx * ry * rz
}

/// Exponential map of a rotation vector.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta = omega.norm();
    if theta < 1e-12 {
        // first order; exact to rounding at this magnitude
        return Matrix3::identity() + omega.cross_matrix();
    }
    rodrigues(&(omega / theta), theta)
}

/// Nearest proper rotation (polar factor via SVD).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// `max |R R^T - I|` over entries.
pub fn orthonormality_deviation(r: &Matrix3<f64>) -> f64 {
    (r * r.transpose() - Matrix3::identity()).abs().max()
}

/// Geodesic angle (radians) between two rotations.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos()
}

pub fn homogeneous(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
    m
}

/// Closed-form inverse of a rigid transform: `(R^T, -R^T t)`.
pub fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r_t = rotation_block(m).transpose();
    let t = translation_block(m);
    homogeneous(&r_t, &(-(r_t * t)))
}

#[inline]
pub fn rotation_block(m: &Matrix4<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

#[inline]
pub fn translation_block(m: &Matrix4<f64>) -> Vector3<f64> {
    m.fixed_view::<3, 1>(0, 3).into_owned()
}
