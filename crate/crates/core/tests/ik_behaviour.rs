use nalgebra::Vector3;

use skelkin::ik::rotate_frame;
use skelkin::metrics::angle_errors;
use skelkin::rotation::axis_angle_to_matrix;
use skelkin::synth::{generate_trajectory, perturb_markers, render_markers, NoiseModel, TrajectorySpec};
use skelkin::{fixtures, forward_kinematics, solve_frame, solve_trajectory, Error, IkSettings, KinematicState, MarkerFrame};

fn chain2_settings() -> IkSettings {
    IkSettings {
        solve_pelvis_rotation: false,
        ..IkSettings::default()
    }
}

#[test]
fn chain2_sinusoid_round_trip() {
    let m = fixtures::chain2();
    let mut spec = TrajectorySpec::still(&m, 2.0, 30.0);
    spec.dofs[0].amplitude = 60f64.to_radians();
    spec.dofs[0].frequency = 0.5;
    let truth = generate_trajectory(&m, &spec).unwrap();
    let markers = render_markers(&m, &m.default_scales(), &truth).unwrap();
    let solved = solve_trajectory(&m, &m.default_scales(), &markers, &chain2_settings()).unwrap();
    assert!(angle_errors(&solved.angles, &truth).unwrap().pooled.mae <= 0.01);
}

#[test]
fn constant_pose_gives_constant_angles() {
    let m = fixtures::fullbody();
    let truth = generate_trajectory(&m, &TrajectorySpec::still(&m, 0.5, 30.0)).unwrap();
    let markers = render_markers(&m, &m.default_scales(), &truth).unwrap();
    let solved = solve_trajectory(&m, &m.default_scales(), &markers, &IkSettings::default()).unwrap();
    let first = &solved.angles.angles[0];
    for frame in &solved.angles.angles {
        for (a, b) in frame.iter().zip(first) {
            assert!((a.unwrap() - b.unwrap()).abs().to_degrees() < 1e-9);
        }
    }
}

#[test]
fn empty_frame_is_flagged_missing() {
    let m = fixtures::fullbody();
    let truth = generate_trajectory(&m, &TrajectorySpec::random(&m, 0.5, 30.0, 0.4, 4)).unwrap();
    let mut markers = render_markers(&m, &m.default_scales(), &truth).unwrap();
    for p in markers.frames[5].iter_mut() {
        *p = None;
    }
    let solved = solve_trajectory(&m, &m.default_scales(), &markers, &IkSettings::default()).unwrap();
    assert!(solved.frames[5].is_none());
    assert!(solved.angles.angles[5].iter().all(Option::is_none));
    assert!(solved.angles.pelvis[5].is_none());
    let errors = angle_errors(&solved.angles, &truth).unwrap();
    assert_eq!(errors.pooled.n, (truth.len() - 1) * m.dof_count());
    assert!(errors.pooled.mae <= 0.01);
}

#[test]
fn cold_start_matches_warm_start_on_clean_data() {
    let m = fixtures::fullbody();
    let truth = generate_trajectory(&m, &TrajectorySpec::random(&m, 0.5, 30.0, 0.5, 9)).unwrap();
    let markers = render_markers(&m, &m.default_scales(), &truth).unwrap();
    let cold = IkSettings {
        warm_start: false,
        ..IkSettings::default()
    };
    let solved = solve_trajectory(&m, &m.default_scales(), &markers, &cold).unwrap();
    assert!(angle_errors(&solved.angles, &truth).unwrap().pooled.mae <= 0.01);
}

#[test]
fn pelvis_chart_equivariance() {
    let m = fixtures::fullbody();
    let truth = generate_trajectory(&m, &TrajectorySpec::random(&m, 0.1, 30.0, 0.5, 2)).unwrap();
    let clean = render_markers(&m, &m.default_scales(), &truth).unwrap();
    // noisy targets so the optimum is not trivially the generating state
    let noisy = perturb_markers(&clean, &NoiseModel::Gaussian { sigma_mm: 5.0 }, 1).unwrap();
    let frame = noisy.frame(0);
    let q = axis_angle_to_matrix(&Vector3::new(0.2, 0.9, -0.4).normalize(), 0.8).unwrap();
    let settings = IkSettings::default();
    let scales = m.default_scales();
    let init = KinematicState::neutral(&m);
    let a = solve_frame(&m, &scales, &frame, &init, &settings).unwrap();
    let rotated_init = init.clone().with_pelvis_rotation(q * init.pelvis_rotation);
    let b = solve_frame(&m, &scales, &rotate_frame(&frame, &q), &rotated_init, &settings).unwrap();
    assert!((q * a.state.pelvis_rotation - b.state.pelvis_rotation).amax() < 1e-6);
    for (x, y) in a.state.angles.iter().zip(&b.state.angles) {
        assert!((x - y).abs().to_degrees() < 1e-6);
    }
}

#[test]
fn rejection_matches_residuals() {
    let m = fixtures::fullbody();
    let s = KinematicState::neutral(&m);
    let base = MarkerFrame::from_pose(&m, &forward_kinematics(&m, &s).unwrap());
    let settings = IkSettings::default();
    for (k, marker) in ["RKNE", "LANK", "RELB", "C7", "LTOE"].iter().enumerate() {
        let mut targets = base.clone();
        let dir = Vector3::new((k as f64).sin(), -1.0, (k as f64).cos()).normalize();
        targets.insert(*marker, base.get(marker).unwrap() + dir * 0.03);
        let r = solve_frame(&m, &s.scales, &targets, &s, &settings).unwrap();
        for (ji, joint) in m.joints().iter().enumerate() {
            if joint.is_ground() {
                continue;
            }
            let contributing = m.markers().iter().filter(|mk| mk.body == joint.parent_body || mk.body == joint.child_body);
            let exceeds = contributing
                .filter_map(|mk| r.per_marker_residual.get(&mk.name))
                .any(|&v| v > settings.residual_reject_threshold);
            assert_eq!(r.rejected_joints.contains(&joint.name), exceeds, "joint #{ji} {}", joint.name);
        }
    }
}

#[test]
fn too_few_markers_is_an_error() {
    let m = fixtures::fullbody();
    let s = KinematicState::neutral(&m);
    let pose = forward_kinematics(&m, &s).unwrap();
    let mut targets = MarkerFrame::new();
    for name in ["RASI", "LASI", "SACR"] {
        targets.insert(name, pose.marker(&m, name).unwrap());
    }
    let err = solve_frame(&m, &s.scales, &targets, &s, &IkSettings::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientMarkers(_)));
}
