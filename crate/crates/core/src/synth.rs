//! Synthetic ground truth: sinusoidal joint-angle trajectories, marker
//! rendering through forward kinematics, marker noise and the noise
//! sensitivity study.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fk::{forward_kinematics_batch, forward_kinematics_batch_parallel};
use crate::ik::{solve_trajectory, IkSettings};
use crate::metrics::{angle_errors, mv_angle};
use crate::model::{Body, Bounds, Dof, Frame, Joint, Marker, SkeletalModel, ROOT_BODY};
use crate::rotation::axis_angle_to_matrix;
use crate::state::KinematicState;
use crate::trajectory::{AngleTrajectory, MarkerTrajectory};

/// `θ(t) = mid + amplitude · sin(2π · frequency · t + phase)`, radians and Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub duration: f64,
    pub fps: f64,
    /// One entry per model DOF.
    pub dofs: Vec<Sinusoid>,
    /// Pelvis rotates about this unit axis at `pelvis_rate` rad/s from identity.
    pub pelvis_axis: Vector3<f64>,
    pub pelvis_rate: f64,
}

impl TrajectorySpec {
    /// Still pose at the center of every DOF range.
    pub fn still(model: &SkeletalModel, duration: f64, fps: f64) -> Self {
        TrajectorySpec {
            duration,
            fps,
            dofs: vec![
                Sinusoid {
                    amplitude: 0.0,
                    frequency: 0.0,
                    phase: 0.0
                };
                model.dof_count()
            ],
            pelvis_axis: Vector3::y(),
            pelvis_rate: 0.0,
        }
    }

    /// Random motion that stays inside `fraction` of each DOF's half range.
    /// Frequencies are drawn in [0.2, 1] Hz, the pelvis turns at up to
    /// 0.3 rad/s about a random axis.
    pub fn random(model: &SkeletalModel, duration: f64, fps: f64, fraction: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dofs = (0..model.dof_count())
            .map(|q| {
                let half = match model.dof(q).bounds {
                    Bounds::Range { min, max } => 0.5 * (max - min),
                    Bounds::Unbounded => std::f64::consts::PI,
                };
                Sinusoid {
                    amplitude: rng.random_range(0.1..=1.0) * fraction * half,
                    frequency: rng.random_range(0.2..=1.0),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        let axis = random_unit(&mut rng);
        TrajectorySpec {
            duration,
            fps,
            dofs,
            pelvis_axis: axis,
            pelvis_rate: rng.random_range(-0.3..=0.3),
        }
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn range_mid(bounds: &Bounds) -> (f64, f64) {
    match *bounds {
        Bounds::Range { min, max } => (0.5 * (min + max), 0.5 * (max - min)),
        Bounds::Unbounded => (0.0, f64::INFINITY),
    }
}

/// Angle trajectory from a spec, scales at model defaults.
pub fn generate_trajectory(model: &SkeletalModel, spec: &TrajectorySpec) -> Result<AngleTrajectory> {
    if spec.dofs.len() != model.dof_count() {
        return Err(Error::DimensionMismatch(format!(
            "spec has {} sinusoids for {} dofs",
            spec.dofs.len(),
            model.dof_count()
        )));
    }
    if !(spec.fps > 0.0) || !(spec.duration > 0.0) {
        return Err(Error::InvalidParameter("duration and fps must be positive".into()));
    }
    for (q, s) in spec.dofs.iter().enumerate() {
        let (_, half) = range_mid(&model.dof(q).bounds);
        if s.amplitude.abs() > half + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "amplitude {}° of `{}` exceeds its half range {}°",
                s.amplitude.to_degrees(),
                model.dof_names()[q],
                half.to_degrees()
            )));
        }
    }
    let mut out = AngleTrajectory::for_model(model, spec.fps, &model.default_scales());
    for t in 0..spec.frame_count() {
        let time = t as f64 / spec.fps;
        let angles = spec
            .dofs
            .iter()
            .enumerate()
            .map(|(q, s)| {
                let bounds = model.dof(q).bounds;
                let (mid, _) = range_mid(&bounds);
                let v = mid + s.amplitude * (std::f64::consts::TAU * s.frequency * time + s.phase).sin();
                Some(bounds.clamp(v))
            })
            .collect();
        let pelvis = axis_angle_to_matrix(&spec.pelvis_axis, spec.pelvis_rate * time)?;
        out.push(angles, Some(pelvis));
    }
    Ok(out)
}

fn states(model: &SkeletalModel, scales: &[Vector3<f64>], angles: &AngleTrajectory) -> Result<Vec<KinematicState>> {
    (0..angles.len())
        .map(|t| {
            let mut s = angles.state_at(model, t).map_err(|e| Error::at(t, e))?;
            s.scales = scales.to_vec();
            Ok(s)
        })
        .collect()
}

fn to_markers(model: &SkeletalModel, angles: &AngleTrajectory, poses: Vec<crate::fk::PoseResult>) -> MarkerTrajectory {
    let mut out = MarkerTrajectory::new(angles.frame_rate, model.marker_names());
    for pose in poses {
        out.push(pose.marker_positions.into_iter().map(Some).collect());
    }
    out.times = angles.times.clone();
    out
}

/// Marker positions of every frame. Every angle must be present.
pub fn render_markers(
    model: &SkeletalModel,
    scales: &[Vector3<f64>],
    angles: &AngleTrajectory,
) -> Result<MarkerTrajectory> {
    let poses = forward_kinematics_batch(model, &states(model, scales, angles)?)?;
    Ok(to_markers(model, angles, poses))
}

/// [`render_markers`] on a thread pool; output is identical.
pub fn render_markers_parallel(
    model: &SkeletalModel,
    scales: &[Vector3<f64>],
    angles: &AngleTrajectory,
    threads: usize,
) -> Result<MarkerTrajectory> {
    let poses = forward_kinematics_batch_parallel(model, &states(model, scales, angles)?, threads)?;
    Ok(to_markers(model, angles, poses))
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Independent isotropic Gaussian noise, standard deviation in mm per axis.
    Gaussian { sigma_mm: f64 },
    /// The same displacement (mm) added to a named marker in every frame.
    Offset { marker: String, offset_mm: Vector3<f64> },
}

/// Adds noise to present samples; missing samples stay missing. Gaussian
/// draws are taken frame by frame, marker by marker, x then y then z.
pub fn perturb_markers(traj: &MarkerTrajectory, noise: &NoiseModel, seed: u64) -> Result<MarkerTrajectory> {
    let mut out = traj.clone();
    match noise {
        NoiseModel::Gaussian { sigma_mm } => {
            if !(*sigma_mm >= 0.0) || !sigma_mm.is_finite() {
                return Err(Error::InvalidParameter(format!("noise sigma must be >= 0, got {sigma_mm}")));
            }
            if *sigma_mm == 0.0 {
                return Ok(out);
            }
            let sigma = sigma_mm / 1000.0;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for frame in &mut out.frames {
                for p in frame.iter_mut().flatten() {
                    for axis in 0..3 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        p[axis] += sigma * z;
                    }
                }
            }
        }
        NoiseModel::Offset { marker, offset_mm } => {
            let m = traj
                .marker_column(marker)
                .ok_or_else(|| Error::MissingMarker(marker.clone()))?;
            let d = offset_mm / 1000.0;
            for frame in &mut out.frames {
                if let Some(p) = frame[m].as_mut() {
                    *p += d;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityRow {
    pub noise_mm: f64,
    pub mae_deg: f64,
    pub sd_deg: f64,
    pub mv_deg_s: f64,
    pub seed: u64,
}

/// For every noise level and seed: render, perturb, solve and compare the
/// solved angles with `angles`. Errors are measured on every solved angle,
/// including those of joints the solver flags as rejected. Rows are ordered by level, then seed,
/// whatever the thread count.
pub fn sensitivity_study(
    model: &SkeletalModel,
    scales: &[Vector3<f64>],
    angles: &AngleTrajectory,
    noise_levels: &[f64],
    seeds: &[u64],
    settings: &IkSettings,
    threads: usize,
) -> Result<Vec<SensitivityRow>> {
    if noise_levels.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sensitivity study needs noise levels and seeds".into()));
    }
    let clean = render_markers(model, scales, angles)?;
    let mut gt = angles.clone();
    gt.scales = model
        .bodies()
        .iter()
        .zip(scales)
        .map(|(b, s)| (b.name.clone(), *s))
        .collect();
    let jobs: Vec<(f64, u64)> = noise_levels
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (n, s)))
        .collect();
    let run = |&(noise_mm, seed): &(f64, u64)| -> Result<SensitivityRow> {
        let noisy = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: noise_mm }, seed)?;
        let solved = solve_trajectory(model, scales, &noisy, settings)?;
        let est = solved.unmasked_angles(model);
        let errors = angle_errors(&est, &gt)?;
        Ok(SensitivityRow {
            noise_mm,
            mae_deg: errors.pooled.mae,
            sd_deg: errors.pooled.sd,
            mv_deg_s: mv_angle(&est)?,
            seed,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(run).collect())
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("noise_mm,mae_deg,sd_deg,mv_deg_s,seed\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.noise_mm, r.mae_deg, r.sd_deg, r.mv_deg_s, r.seed));
    }
    out
}

/// Random valid tree with `n_bodies` bodies (pelvis first), 0–3 DOFs per
/// joint about random unit axes, random joint frames and three markers per
/// body. No scaling pairs.
pub fn random_model(n_bodies: usize, seed: u64) -> SkeletalModel {
    assert!(n_bodies >= 1, "a model needs a root body");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v3 = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| Vector3::from_fn(|_, _| rng.random_range(lo..hi));
    let mut bodies = Vec::with_capacity(n_bodies);
    let mut joints = Vec::new();
    let mut markers = Vec::new();
    for b in 0..n_bodies {
        let name = if b == 0 { ROOT_BODY.to_string() } else { format!("b{b}") };
        let parent = (b > 0).then(|| {
            let p = rng.random_range(0..b);
            if p == 0 { ROOT_BODY.to_string() } else { format!("b{p}") }
        });
        let default_scale = v3(&mut rng, 0.7, 1.3);
        bodies.push(Body {
            name: name.clone(),
            parent: parent.clone(),
            default_scale,
            longest_axis: rng.random_range(0..3),
            reference_length: rng.random_range(0.1..0.5),
        });
        if let Some(parent) = parent {
            let n_dofs = rng.random_range(0..=3);
            let dofs = (0..n_dofs)
                .map(|k| {
                    let lo = rng.random_range(-2.5..-0.5);
                    let hi = rng.random_range(0.5..2.5);
                    Dof {
                        name: format!("{name}_q{k}"),
                        axis: random_unit(&mut rng),
                        bounds: Bounds::Range { min: lo, max: hi },
                    }
                })
                .collect();
            joints.push(Joint {
                name: format!("j{b}"),
                parent_body: parent,
                child_body: name.clone(),
                parent_frame: Frame {
                    orientation: v3(&mut rng, -0.5, 0.5),
                    translation: v3(&mut rng, -0.3, 0.3),
                },
                child_frame: Frame {
                    orientation: v3(&mut rng, -0.5, 0.5),
                    translation: v3(&mut rng, -0.05, 0.05),
                },
                dofs,
            });
        }
        for k in 0..3 {
            markers.push(Marker {
                name: format!("{name}_m{k}"),
                body: name.clone(),
                offset: v3(&mut rng, -0.2, 0.2),
                weight: 1.0,
                bony: k != 2,
            });
        }
    }
    SkeletalModel::new(bodies, joints, markers, Vec::new()).expect("generated model is valid")
}

/// Random state within bounds: angles uniform in each range, scales in
/// [0.8, 1.2] × default, random pelvis rotation.
pub fn random_state(model: &SkeletalModel, seed: u64) -> KinematicState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angles = (0..model.dof_count())
        .map(|q| match model.dof(q).bounds {
            Bounds::Range { min, max } => rng.random_range(min..=max),
            Bounds::Unbounded => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        })
        .collect();
    let scales = model
        .bodies()
        .iter()
        .map(|b| b.default_scale.map(|s| s * rng.random_range(0.8..1.2)))
        .collect();
    let axis = random_unit(&mut rng);
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    KinematicState {
        angles,
        scales,
        pelvis_rotation: axis_angle_to_matrix(&axis, angle).unwrap_or_else(|_| Matrix3::identity()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn zero_amplitude_is_still() {
        let m = fixtures::fullbody();
        let spec = TrajectorySpec::still(&m, 1.0, 30.0);
        let t = generate_trajectory(&m, &spec).unwrap();
        assert_eq!(t.len(), 30);
        assert!(t.angles.iter().all(|f| f == &t.angles[0]));
    }

    #[test]
    fn chain2_sinusoid_closed_form() {
        let m = fixtures::chain2();
        let spec = TrajectorySpec {
            duration: 2.0,
            fps: 30.0,
            dofs: vec![Sinusoid {
                amplitude: 45f64.to_radians(),
                frequency: 0.5,
                phase: 0.0,
            }],
            pelvis_axis: Vector3::y(),
            pelvis_rate: 0.0,
        };
        let t = generate_trajectory(&m, &spec).unwrap();
        assert_eq!(t.len(), 60);
        assert_eq!(t.angles[0][0], Some(0.0));
        assert!((t.angles[15][0].unwrap() - 45f64.to_radians()).abs() < 1e-12);

        let markers = render_markers(&m, &m.default_scales(), &t).unwrap();
        for f in &markers.frames {
            assert!((f[0].unwrap().norm() - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn amplitude_beyond_bounds_rejected() {
        let m = fixtures::chain2();
        let mut spec = TrajectorySpec::still(&m, 1.0, 30.0);
        spec.dofs[0].amplitude = 151f64.to_radians();
        assert!(generate_trajectory(&m, &spec).is_err());
    }

    #[test]
    fn random_spec_is_seeded() {
        let m = fixtures::fullbody();
        assert_eq!(TrajectorySpec::random(&m, 1.0, 30.0, 0.5, 7), TrajectorySpec::random(&m, 1.0, 30.0, 0.5, 7));
        assert_ne!(TrajectorySpec::random(&m, 1.0, 30.0, 0.5, 7), TrajectorySpec::random(&m, 1.0, 30.0, 0.5, 8));
    }

    #[test]
    fn noise_cases() {
        let m = fixtures::fullbody();
        let angles = generate_trajectory(&m, &TrajectorySpec::still(&m, 0.5, 30.0)).unwrap();
        let clean = render_markers(&m, &m.default_scales(), &angles).unwrap();
        assert_eq!(perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: 0.0 }, 1).unwrap(), clean);
        let a = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: 5.0 }, 3).unwrap();
        let b = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: 5.0 }, 3).unwrap();
        assert_eq!(a, b);
        assert!(perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: -1.0 }, 3).is_err());

        let offset = NoiseModel::Offset {
            marker: "RKNE".into(),
            offset_mm: Vector3::new(0.0, 12.0, 16.0),
        };
        let o = perturb_markers(&clean, &offset, 0).unwrap();
        let col = clean.marker_column("RKNE").unwrap();
        for (f, g) in o.frames.iter().zip(&clean.frames) {
            assert!(((f[col].unwrap() - g[col].unwrap()).norm() - 0.02).abs() < 1e-12);
        }
    }

    #[test]
    fn random_models_are_valid() {
        for seed in 0..20 {
            let m = random_model(1 + (seed as usize % 8), seed);
            let s = random_state(&m, seed);
            crate::state::validate_state(&m, &s).unwrap();
        }
    }
}
