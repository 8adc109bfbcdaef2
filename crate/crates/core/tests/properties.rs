use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

use skelkin::fk::{motion_rotation, FkPlan};
use skelkin::jacobian::marker_jacobian;
use skelkin::metrics::{mean_velocity, mpblpe, pearson_rho, ErrorStats, RootAlignment};
use skelkin::rotation::{axis_angle_to_matrix, orthonormality_deviation};
use skelkin::sequence::{interpolate_series, smooth_series, SmoothMethod};
use skelkin::synth::{perturb_markers, random_model, random_state, NoiseModel};
use skelkin::{forward_kinematics, MarkerTrajectory, SkeletalModel};

fn unit(v: [f64; 3]) -> Option<Vector3<f64>> {
    let v = Vector3::from(v);
    (v.norm() > 1e-3).then(|| v.normalize())
}

fn rotation(axis: [f64; 3], angle: f64) -> Matrix3<f64> {
    unit(axis)
        .map(|a| axis_angle_to_matrix(&a, angle).unwrap())
        .unwrap_or_else(Matrix3::identity)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn level_order_visits_parents_first(n in 1usize..20, seed in any::<u64>()) {
        let m = random_model(n, seed);
        let order = m.level_order();
        prop_assert_eq!(order.len(), n);
        prop_assert_eq!(order[0], m.root());
        let pos = |b: usize| order.iter().position(|&x| x == b).unwrap();
        for b in 0..n {
            if let Some(p) = m.body_parent(b) {
                prop_assert!(pos(p) < pos(b));
            }
        }
    }

    #[test]
    fn axis_angle_is_a_rotation(axis in prop::array::uniform3(-1.0f64..1.0), angle in -10.0f64..10.0) {
        prop_assume!(unit(axis).is_some());
        let r = rotation(axis, angle);
        prop_assert!(orthonormality_deviation(&r) <= 1e-9);
        prop_assert!((r.determinant() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn full_turn_is_periodic(seed in any::<u64>()) {
        let m = random_model(5, seed);
        let s = random_state(&m, seed ^ 1);
        let plan = FkPlan::new(&m);
        let base = plan.evaluate_unchecked(&s);
        for q in 0..m.dof_count() {
            let mut turned = s.clone();
            turned.angles[q] += std::f64::consts::TAU;
            let p = plan.evaluate_unchecked(&turned);
            for (a, b) in p.marker_positions.iter().zip(&base.marker_positions) {
                prop_assert!((a - b).norm() <= 1e-9);
            }
        }
        let dofs = &m.joints()[0].dofs;
        let angles: Vec<f64> = (0..dofs.len()).map(|k| 0.3 * k as f64).collect();
        let shifted: Vec<f64> = angles.iter().map(|a| a - std::f64::consts::TAU).collect();
        let d = motion_rotation(dofs, &angles).unwrap() - motion_rotation(dofs, &shifted).unwrap();
        prop_assert!(d.amax() <= 1e-9);
    }

    #[test]
    fn pelvis_rotation_is_equivariant(seed in any::<u64>(), axis in prop::array::uniform3(-1.0f64..1.0), angle in -3.0f64..3.0) {
        prop_assume!(unit(axis).is_some());
        let q = rotation(axis, angle);
        let m = random_model(6, seed);
        let s = random_state(&m, seed);
        let mut rotated = s.clone();
        rotated.pelvis_rotation = q * s.pelvis_rotation;
        let a = forward_kinematics(&m, &s).unwrap();
        let b = forward_kinematics(&m, &rotated).unwrap();
        for (pa, pb) in a.marker_positions.iter().zip(&b.marker_positions) {
            prop_assert!((q * pa - pb).norm() <= 1e-12);
        }
    }

    #[test]
    fn directional_derivative_matches_jacobian(seed in any::<u64>()) {
        let m = random_model(5, seed);
        let s = random_state(&m, seed.wrapping_add(7));
        let j = marker_jacobian(&m, &s).unwrap();
        let n = m.dof_count();
        let mut u = nalgebra::DVector::from_fn(j.cols(), |i, _| ((i * 7919 + seed as usize % 97) as f64).sin());
        u /= u.norm();
        let eps = 1e-6;
        let step = |sign: f64| {
            let mut t = s.clone();
            for q in 0..n {
                t.angles[q] += sign * eps * u[q];
            }
            for b in 0..m.bodies().len() {
                for a in 0..3 {
                    t.scales[b][a] += sign * eps * u[n + 3 * b + a];
                }
            }
            FkPlan::new(&m).evaluate_unchecked(&t).marker_positions
        };
        let (plus, minus) = (step(1.0), step(-1.0));
        let ju = &j.matrix * &u;
        for (k, (p, mi)) in plus.iter().zip(&minus).enumerate() {
            let fd = (p - mi) / (2.0 * eps);
            for a in 0..3 {
                let r = ju[3 * k + a];
                prop_assert!((r - fd[a]).abs() / (1.0 + fd[a].abs()) <= 1e-5);
            }
        }
    }

    #[test]
    fn model_text_is_stable(n in 1usize..10, seed in any::<u64>()) {
        let m = random_model(n, seed);
        let text = m.to_text();
        let back = SkeletalModel::parse(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
    }

    #[test]
    fn mae_never_exceeds_rmse(errors in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let s = ErrorStats::from_errors(&errors).unwrap();
        prop_assert!(s.mae <= s.rmse * (1.0 + 1e-12));
        prop_assert!(s.sd <= s.rmse * (1.0 + 1e-12));
    }

    #[test]
    fn rho_ignores_positive_affine_maps(
        xs in prop::collection::vec(-10.0f64..10.0, 3..60),
        noise in prop::collection::vec(-1.0f64..1.0, 60),
        scale in 0.01f64..100.0,
        shift in -100.0f64..100.0,
    ) {
        let a: Vec<Option<f64>> = xs.iter().map(|&x| Some(x)).collect();
        let b: Vec<Option<f64>> = xs.iter().zip(&noise).map(|(&x, &e)| Some(0.5 * x + e)).collect();
        let mapped: Vec<Option<f64>> = a.iter().map(|v| v.map(|x| scale * x + shift)).collect();
        if let (Ok((r1, _)), Ok((r2, _))) = (pearson_rho(&a, &b), pearson_rho(&mapped, &b)) {
            prop_assert!((r1 - r2).abs() <= 1e-9);
        }
    }

    #[test]
    fn velocity_ignores_offsets(xs in prop::collection::vec(-10.0f64..10.0, 2..50), c in -1e3f64..1e3) {
        let a: Vec<Option<f64>> = xs.iter().map(|&x| Some(x)).collect();
        let b: Vec<Option<f64>> = xs.iter().map(|&x| Some(x + c)).collect();
        let (va, vb) = (mean_velocity(&a, 0.01).unwrap(), mean_velocity(&b, 0.01).unwrap());
        prop_assert!((va - vb).abs() <= 1e-9 * (1.0 + va));
    }

    #[test]
    fn moving_average_keeps_length_and_mean(xs in prop::collection::vec(-10.0f64..10.0, 1..80), half in 0usize..6) {
        let s: Vec<Option<f64>> = xs.iter().map(|&x| Some(x)).collect();
        let out = smooth_series(&s, SmoothMethod::MovingAverage { window: 2 * half + 1 }).unwrap();
        prop_assert_eq!(out.len(), s.len());
        let mean = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap()).sum::<f64>() / v.len() as f64;
        prop_assert!((mean(&out) - mean(&s)).abs() <= 1e-9);
    }

    #[test]
    fn interpolation_keeps_present_samples(
        xs in prop::collection::vec(prop::option::weighted(0.7, -5.0f64..5.0), 0..60),
        gap in 0usize..12,
    ) {
        let out = interpolate_series(&xs, gap);
        prop_assert_eq!(out.len(), xs.len());
        for (a, b) in xs.iter().zip(&out) {
            if a.is_some() {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn mpblpe_translation_invariant(seed in any::<u64>(), d in prop::array::uniform3(-2.0f64..2.0)) {
        let m = random_model(4, seed);
        let pose = forward_kinematics(&m, &random_state(&m, seed)).unwrap();
        let names = m.marker_names();
        let mut gt = MarkerTrajectory::new(30.0, names.clone());
        gt.push(pose.marker_positions.iter().map(|p| Some(*p)).collect());
        let mut moved = gt.clone();
        for p in moved.frames[0].iter_mut().flatten() {
            *p += Vector3::from(d);
        }
        let (v, _) = mpblpe(&moved, &gt, &names, &RootAlignment::Centroid).unwrap();
        prop_assert!(v <= 1e-9);
        let mut rotated = gt.clone();
        let q = rotation([0.3, 1.0, -0.2], 0.5);
        for p in rotated.frames[0].iter_mut().flatten() {
            *p = q * *p;
        }
        prop_assert!(mpblpe(&rotated, &gt, &names, &RootAlignment::Centroid).unwrap().0 > 0.0);
    }

    #[test]
    fn noise_is_seed_deterministic(seed in any::<u64>(), sigma in 0.0f64..50.0) {
        let m = random_model(3, 1);
        let pose = forward_kinematics(&m, &random_state(&m, 1)).unwrap();
        let mut t = MarkerTrajectory::new(30.0, m.marker_names());
        for _ in 0..5 {
            t.push(pose.marker_positions.iter().map(|p| Some(*p)).collect());
        }
        let noise = NoiseModel::Gaussian { sigma_mm: sigma };
        prop_assert_eq!(perturb_markers(&t, &noise, seed).unwrap(), perturb_markers(&t, &noise, seed).unwrap());
    }
}
