//! Marker-based model fitting: segment scaling from a calibration pose and
//! per-frame inverse kinematics.
//!
//! Inverse kinematics minimizes `Σ w_m |P_m(state) - target_m|²` with
//! Levenberg-Marquardt. Joint angles are projected back into their bounds after
//! every step; the pelvis rotation is updated by left-multiplied exponential-map
//! increments and re-orthonormalized. Joints whose adjacent markers end with a
//! residual above the rejection threshold are reported as rejected.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fk::{FkPlan, PoseFrames};
use crate::jacobian::fill_marker_columns;
use crate::model::SkeletalModel;
use crate::rotation::{orthonormalize, so3_exp};
use crate::state::{check_shape, validate_state, KinematicState};
use crate::trajectory::{AngleTrajectory, MarkerFrame, MarkerTrajectory};

const DAMPING_CEILING: f64 = 1e8;
const DAMPING_FLOOR: f64 = 1e-15;
const GRADIENT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct IkSettings {
    pub max_iterations: usize,
    /// Converged once an accepted step moves no coordinate more than this (radians).
    pub step_tolerance: f64,
    /// Initial Levenberg-Marquardt damping.
    pub damping: f64,
    /// Marker residual (meters) above which adjacent joints are rejected.
    pub residual_reject_threshold: f64,
    pub warm_start: bool,
    /// Optimize the pelvis rotation; when off it stays at the initial value.
    pub solve_pelvis_rotation: bool,
}

impl Default for IkSettings {
    fn default() -> Self {
        IkSettings {
            max_iterations: 100,
            step_tolerance: 1e-8,
            damping: 1e-3,
            residual_reject_threshold: 0.02,
            warm_start: true,
            solve_pelvis_rotation: true,
        }
    }
}

impl IkSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("step_tolerance", self.step_tolerance),
            ("damping", self.damping),
            ("residual_reject_threshold", self.residual_reject_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Reads an `[ik]` section of `key = value` lines; absent keys keep defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = IkSettings::default();
        let mut in_section = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "[ik]" {
                in_section = true;
                continue;
            }
            let perr = |m: String| Error::Parse { line: line_no, message: m };
            if !in_section {
                return Err(perr(format!("expected `[ik]` section, found `{line}`")));
            }
            let (k, v) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr("expected `key = value`".into()))?;
            let float = || v.parse::<f64>().map_err(|_| perr(format!("bad number `{v}`")));
            let flag = || match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(perr(format!("expected true/false, found `{v}`"))),
            };
            match k {
                "max_iterations" => s.max_iterations = v.parse().map_err(|_| perr(format!("bad integer `{v}`")))?,
                "step_tolerance" => s.step_tolerance = float()?,
                "damping" => s.damping = float()?,
                "residual_reject_threshold" => s.residual_reject_threshold = float()?,
                "warm_start" => s.warm_start = flag()?,
                "solve_pelvis_rotation" => s.solve_pelvis_rotation = flag()?,
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct IkFrameResult {
    pub state: KinematicState,
    /// Distance (m) between model and observed marker, for every observed marker.
    pub per_marker_residual: BTreeMap<String, f64>,
    pub rejected_joints: BTreeSet<String>,
    pub converged: bool,
    pub iterations: usize,
    /// Final weighted sum of squared marker errors, m².
    pub objective: f64,
    /// Objective at the start and after every accepted step.
    pub objective_history: Vec<f64>,
}

/// Scale factors from a calibration pose.
///
/// For each scaling pair the ratio of observed to model marker distance (model
/// at default scale, neutral pose) scales the default along the pair's axis;
/// several pairs on one axis are averaged. Unmeasured axes of a measured body
/// keep their default; bodies without pairs inherit their parent's ratios.
pub fn scale_model(model: &SkeletalModel, tpose: &MarkerFrame) -> Result<Vec<Vector3<f64>>> {
    let neutral = KinematicState::neutral(model);
    let pose = FkPlan::new(model).evaluate_unchecked(&neutral);
    let n = model.bodies().len();
    let mut sums = vec![Vector3::<f64>::zeros(); n];
    let mut counts = vec![[0usize; 3]; n];
    for pair in model.scaling_pairs() {
        let observed = |name: &str| tpose.get(name).ok_or_else(|| Error::MissingMarker(name.to_string()));
        let a = observed(&pair.marker_a)?;
        let b = observed(&pair.marker_b)?;
        let ia = model.marker_index(&pair.marker_a).expect("validated");
        let ib = model.marker_index(&pair.marker_b).expect("validated");
        let model_dist = (pose.marker_positions[ia] - pose.marker_positions[ib]).norm();
        if model_dist <= 1e-12 {
            return Err(Error::DegeneratePair {
                body: pair.body.clone(),
                marker_a: pair.marker_a.clone(),
                marker_b: pair.marker_b.clone(),
            });
        }
        let body = model.body_index(&pair.body).expect("validated");
        sums[body][pair.axis] += (a - b).norm() / model_dist;
        counts[body][pair.axis] += 1;
    }

    let mut ratios = vec![Vector3::repeat(1.0); n];
    for &body in model.level_order() {
        let measured = counts[body].iter().any(|&c| c > 0);
        ratios[body] = if measured {
            Vector3::from_fn(|axis, _| {
                let c = counts[body][axis];
                if c > 0 {
                    sums[body][axis] / c as f64
                } else {
                    1.0
                }
            })
        } else {
            model.body_parent(body).map(|p| ratios[p]).unwrap_or_else(|| Vector3::repeat(1.0))
        };
    }
    Ok(model
        .bodies()
        .iter()
        .zip(&ratios)
        .map(|(b, r)| b.default_scale.component_mul(r))
        .collect())
}

struct Problem<'a> {
    model: &'a SkeletalModel,
    plan: FkPlan<'a>,
    targets: Vec<Option<Vector3<f64>>>,
    /// Marker indices with a target and positive weight.
    active: Vec<usize>,
    sqrt_weights: Vec<f64>,
    solve_pelvis: bool,
}

impl Problem<'_> {
    fn unknowns(&self) -> usize {
        self.model.dof_count() + if self.solve_pelvis { 3 } else { 0 }
    }

    fn objective(&self, frames: &PoseFrames) -> f64 {
        self.active
            .iter()
            .map(|&m| {
                let w = self.model.markers()[m].weight;
                w * (frames.markers[m] - self.targets[m].unwrap()).norm_squared()
            })
            .sum()
    }

    fn residuals(&self, frames: &PoseFrames) -> DVector<f64> {
        let mut r = DVector::zeros(3 * self.active.len());
        for (row, &m) in self.active.iter().enumerate() {
            let e = (frames.markers[m] - self.targets[m].unwrap()) * self.sqrt_weights[m];
            r.fixed_view_mut::<3, 1>(3 * row, 0).copy_from(&e);
        }
        r
    }

    fn jacobian(&self, state: &KinematicState, frames: &PoseFrames, full: &mut DMatrix<f64>) -> DMatrix<f64> {
        let n_dofs = self.model.dof_count();
        full.fill(0.0);
        fill_marker_columns(self.model, state, frames, full, false);
        let mut j = DMatrix::zeros(3 * self.active.len(), self.unknowns());
        for (row, &m) in self.active.iter().enumerate() {
            let w = self.sqrt_weights[m];
            for r in 0..3 {
                for q in 0..n_dofs {
                    j[(3 * row + r, q)] = full[(3 * m + r, q)] * w;
                }
            }
            if self.solve_pelvis {
                let p = frames.markers[m];
                for axis in 0..3 {
                    let col = Vector3::ith(axis, 1.0).cross(&p) * w;
                    j.fixed_view_mut::<3, 1>(3 * row, n_dofs + axis).copy_from(&col);
                }
            }
        }
        j
    }
}

/// Solves one frame from `init`. Markers absent from `targets` get zero weight.
pub fn solve_frame(
    model: &SkeletalModel,
    scales: &[Vector3<f64>],
    targets: &MarkerFrame,
    init: &KinematicState,
    settings: &IkSettings,
) -> Result<IkFrameResult> {
    settings.validate()?;
    let mut state = init.clone();
    state.scales = scales.to_vec();
    check_shape(model, &state)?;
    for (q, a) in state.angles.iter_mut().enumerate() {
        *a = model.dof(q).bounds.clamp(*a);
    }
    validate_state(model, &state)?;

    let aligned: Vec<Option<Vector3<f64>>> = model.markers().iter().map(|m| targets.get(&m.name)).collect();
    let active: Vec<usize> = (0..aligned.len())
        .filter(|&m| aligned[m].is_some() && model.markers()[m].weight > 0.0)
        .collect();
    let problem = Problem {
        model,
        plan: FkPlan::new(model),
        sqrt_weights: model.markers().iter().map(|m| m.weight.sqrt()).collect(),
        targets: aligned,
        active,
        solve_pelvis: settings.solve_pelvis_rotation,
    };
    check_resolvable(&problem)?;

    let n_dofs = model.dof_count();
    let n = problem.unknowns();
    let mut full = DMatrix::zeros(3 * model.markers().len(), n_dofs);
    let mut frames = problem.plan.evaluate_frames_unchecked(&state);
    let mut f = problem.objective(&frames);
    let mut history = vec![f];
    let mut lambda = settings.damping;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < settings.max_iterations {
        let mut j = problem.jacobian(&state, &frames, &mut full);
        let r = problem.residuals(&frames);
        let mut g = j.tr_mul(&r);
        // bound-active angles whose descent direction points outward are frozen
        for q in 0..n_dofs {
            if let crate::model::Bounds::Range { min, max } = model.dof(q).bounds {
                let a = state.angles[q];
                if (a <= min && g[q] > 0.0) || (a >= max && g[q] < 0.0) {
                    j.column_mut(q).fill(0.0);
                    g[q] = 0.0;
                }
            }
        }
        if g.amax() <= GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let h = j.tr_mul(&j);
        loop {
            let mut a = h.clone();
            for d in 0..n {
                a[(d, d)] += lambda;
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&g),
                None => {
                    lambda *= 10.0;
                    if lambda > DAMPING_CEILING {
                        return Err(Error::Divergence { damping: lambda });
                    }
                    continue;
                }
            };
            let candidate = apply_step(model, &state, &step, problem.solve_pelvis);
            let cand_frames = problem.plan.evaluate_frames_unchecked(&candidate);
            let f_new = problem.objective(&cand_frames);
            let step_size = step.amax();
            if f_new < f {
                debug_assert!(f_new <= *history.last().unwrap());
                state = candidate;
                frames = cand_frames;
                f = f_new;
                history.push(f);
                lambda = (lambda / 10.0).max(DAMPING_FLOOR);
                if step_size <= settings.step_tolerance {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            if step_size <= settings.step_tolerance {
                // no representable improvement left
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > DAMPING_CEILING {
                return Err(Error::Divergence { damping: lambda });
            }
        }
    }

    let mut per_marker_residual = BTreeMap::new();
    for (m, marker) in model.markers().iter().enumerate() {
        if let Some(t) = problem.targets[m] {
            per_marker_residual.insert(marker.name.clone(), (frames.markers[m] - t).norm());
        }
    }
    let rejected_joints = rejected_joints(model, &problem, &per_marker_residual, settings.residual_reject_threshold);
    Ok(IkFrameResult {
        state,
        per_marker_residual,
        rejected_joints,
        converged,
        iterations,
        objective: f,
        objective_history: history,
    })
}

fn check_resolvable(problem: &Problem<'_>) -> Result<()> {
    let n = problem.unknowns();
    let rows = 3 * problem.active.len();
    if problem.active.is_empty() || rows < n {
        return Err(Error::InsufficientMarkers(format!(
            "{} weighted markers observed for {n} unknowns",
            problem.active.len()
        )));
    }
    if problem.solve_pelvis {
        let pts: Vec<Vector3<f64>> = problem.active.iter().map(|&m| problem.targets[m].unwrap()).collect();
        let p0 = pts[0];
        let spread = pts.iter().map(|p| (p - p0).norm()).fold(0.0, f64::max).max(1e-12);
        let non_collinear = pts.iter().enumerate().any(|(i, a)| {
            pts[i + 1..]
                .iter()
                .any(|b| (a - p0).cross(&(b - p0)).norm() > 1e-6 * spread * spread)
        });
        if !non_collinear {
            return Err(Error::InsufficientMarkers(
                "at least 3 non-collinear markers are needed to resolve the pelvis rotation".into(),
            ));
        }
    }
    Ok(())
}

fn apply_step(model: &SkeletalModel, state: &KinematicState, step: &DVector<f64>, pelvis: bool) -> KinematicState {
    let mut next = state.clone();
    for (q, a) in next.angles.iter_mut().enumerate() {
        *a = model.dof(q).bounds.clamp(*a + step[q]);
    }
    if pelvis {
        let n = model.dof_count();
        let delta = Vector3::new(step[n], step[n + 1], step[n + 2]);
        next.pelvis_rotation = orthonormalize(&(so3_exp(&delta) * state.pelvis_rotation));
    }
    next
}

/// Joints with a contributing marker above `threshold`. A marker contributes
/// to a joint when it is observed, weighted and sits on the joint's parent or
/// child body.
fn rejected_joints(
    model: &SkeletalModel,
    problem: &Problem<'_>,
    residuals: &BTreeMap<String, f64>,
    threshold: f64,
) -> BTreeSet<String> {
    let mut bad_bodies = vec![false; model.bodies().len()];
    for &m in &problem.active {
        if residuals[&model.markers()[m].name] > threshold {
            bad_bodies[model.marker_body(m)] = true;
        }
    }
    model
        .joints()
        .iter()
        .filter(|j| !j.is_ground())
        .filter(|j| {
            let p = model.body_index(&j.parent_body).unwrap();
            let c = model.body_index(&j.child_body).unwrap();
            bad_bodies[p] || bad_bodies[c]
        })
        .map(|j| j.name.clone())
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrajectorySolution {
    /// Solved angles; DOFs of rejected joints and unsolvable frames are `None`.
    pub angles: AngleTrajectory,
    /// Per-frame solver output; `None` where the frame had too few markers.
    pub frames: Vec<Option<IkFrameResult>>,
}

/// Per-frame inverse kinematics over a recording. With warm start each frame
/// starts from the last solved frame, otherwise from the neutral pose.
pub fn solve_trajectory(
    model: &SkeletalModel,
    scales: &[Vector3<f64>],
    targets: &MarkerTrajectory,
    settings: &IkSettings,
) -> Result<TrajectorySolution> {
    if targets.is_empty() {
        return Err(Error::Empty("marker trajectory has no frames".into()));
    }
    settings.validate()?;
    let neutral = KinematicState::neutral(model).with_scales(scales.to_vec());
    let solve = |t: usize, init: &KinematicState| -> Result<Option<IkFrameResult>> {
        match solve_frame(model, scales, &targets.frame(t), init, settings) {
            Ok(r) => Ok(Some(r)),
            Err(Error::InsufficientMarkers(_)) => Ok(None),
            Err(e) => Err(Error::at(t, e)),
        }
    };

    let results: Vec<Option<IkFrameResult>> = if settings.warm_start {
        let mut out = Vec::with_capacity(targets.len());
        let mut init = neutral.clone();
        for t in 0..targets.len() {
            let r = solve(t, &init)?;
            if let Some(r) = &r {
                init = r.state.clone();
            }
            out.push(r);
        }
        out
    } else {
        (0..targets.len())
            .into_par_iter()
            .map(|t| solve(t, &neutral))
            .collect::<Result<_>>()?
    };

    let mut angles = AngleTrajectory::for_model(model, targets.frame_rate, scales);
    for r in &results {
        match r {
            Some(r) => {
                let values = (0..model.dof_count())
                    .map(|q| {
                        let joint = &model.joints()[model.dof_joint(q)];
                        (!r.rejected_joints.contains(&joint.name)).then_some(r.state.angles[q])
                    })
                    .collect();
                angles.push(values, Some(r.state.pelvis_rotation));
            }
            None => angles.push(vec![None; model.dof_count()], None),
        }
    }
    angles.times = targets.times.clone();
    Ok(TrajectorySolution { angles, frames: results })
}

impl TrajectorySolution {
    /// Solved angles with rejected joints kept; only unsolvable frames are missing.
    pub fn unmasked_angles(&self, model: &SkeletalModel) -> AngleTrajectory {
        let mut out = self.angles.clone();
        for (t, r) in self.frames.iter().enumerate() {
            if let Some(r) = r {
                out.angles[t] = r.state.angles.iter().map(|&a| Some(a)).collect();
            }
        }
        debug_assert_eq!(out.dof_names, model.dof_names());
        out
    }
}

/// Every marker of `frame` rotated by `q` about the origin.
pub fn rotate_frame(frame: &MarkerFrame, q: &Matrix3<f64>) -> MarkerFrame {
    let mut out = MarkerFrame::new();
    for (name, p) in frame.iter() {
        out.insert(name, q * p);
    }
    out
}
