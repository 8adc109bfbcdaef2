//! Marker and joint-angle trajectories with missing-value support.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::fk::PoseResult;
use crate::model::SkeletalModel;
use crate::state::KinematicState;

/// Named marker positions at one instant; absent markers are missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarkerFrame {
    positions: BTreeMap<String, Vector3<f64>>,
}

impl MarkerFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pose(model: &SkeletalModel, pose: &PoseResult) -> Self {
        let positions = model
            .markers()
            .iter()
            .zip(&pose.marker_positions)
            .map(|(m, p)| (m.name.clone(), *p))
            .collect();
        MarkerFrame { positions }
    }

    pub fn insert(&mut self, name: impl Into<String>, position: Vector3<f64>) {
        self.positions.insert(name.into(), position);
    }

    pub fn remove(&mut self, name: &str) -> Option<Vector3<f64>> {
        self.positions.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<Vector3<f64>> {
        self.positions.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector3<f64>)> {
        self.positions.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerTrajectory {
    pub frame_rate: f64,
    pub marker_names: Vec<String>,
    pub times: Vec<f64>,
    /// `frames[t][m]`, meters.
    pub frames: Vec<Vec<Option<Vector3<f64>>>>,
}

impl MarkerTrajectory {
    pub fn new(frame_rate: f64, marker_names: Vec<String>) -> Self {
        MarkerTrajectory {
            frame_rate,
            marker_names,
            times: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Appends a frame at time `len / frame_rate`.
    pub fn push(&mut self, positions: Vec<Option<Vector3<f64>>>) {
        assert_eq!(positions.len(), self.marker_names.len(), "frame width");
        self.times.push(self.frames.len() as f64 / self.frame_rate);
        self.frames.push(positions);
    }

    pub fn marker_column(&self, name: &str) -> Option<usize> {
        self.marker_names.iter().position(|n| n == name)
    }

    pub fn frame(&self, t: usize) -> MarkerFrame {
        let mut f = MarkerFrame::new();
        for (name, p) in self.marker_names.iter().zip(&self.frames[t]) {
            if let Some(p) = p {
                f.insert(name.clone(), *p);
            }
        }
        f
    }

    /// One coordinate of one marker over time.
    pub fn channel(&self, marker: usize, axis: usize) -> Vec<Option<f64>> {
        self.frames.iter().map(|f| f[marker].map(|p| p[axis])).collect()
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }
}

/// Joint angles over time plus the body scales they were solved with.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleTrajectory {
    pub frame_rate: f64,
    pub dof_names: Vec<String>,
    pub times: Vec<f64>,
    /// `angles[t][q]` in radians; `None` marks rejected or missing samples.
    pub angles: Vec<Vec<Option<f64>>>,
    pub pelvis: Vec<Option<Matrix3<f64>>>,
    /// Body name and per-axis scale factors.
    pub scales: Vec<(String, Vector3<f64>)>,
}

impl AngleTrajectory {
    pub fn new(frame_rate: f64, dof_names: Vec<String>, scales: Vec<(String, Vector3<f64>)>) -> Self {
        AngleTrajectory {
            frame_rate,
            dof_names,
            times: Vec::new(),
            angles: Vec::new(),
            pelvis: Vec::new(),
            scales,
        }
    }

    pub fn for_model(model: &SkeletalModel, frame_rate: f64, scales: &[Vector3<f64>]) -> Self {
        let scales = model
            .bodies()
            .iter()
            .zip(scales)
            .map(|(b, s)| (b.name.clone(), *s))
            .collect();
        Self::new(frame_rate, model.dof_names().to_vec(), scales)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn push(&mut self, angles: Vec<Option<f64>>, pelvis: Option<Matrix3<f64>>) {
        assert_eq!(angles.len(), self.dof_names.len(), "frame width");
        self.times.push(self.angles.len() as f64 / self.frame_rate);
        self.angles.push(angles);
        self.pelvis.push(pelvis);
    }

    pub fn push_state(&mut self, state: &KinematicState) {
        self.push(state.angles.iter().map(|&a| Some(a)).collect(), Some(state.pelvis_rotation));
    }

    pub fn dof_column(&self, name: &str) -> Option<usize> {
        self.dof_names.iter().position(|n| n == name)
    }

    pub fn series(&self, dof: usize) -> Vec<Option<f64>> {
        self.angles.iter().map(|f| f[dof]).collect()
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Scale vectors ordered like the model's bodies.
    pub fn model_scales(&self, model: &SkeletalModel) -> Result<Vec<Vector3<f64>>> {
        model
            .bodies()
            .iter()
            .map(|b| {
                self.scales
                    .iter()
                    .find(|(n, _)| *n == b.name)
                    .map(|(_, s)| *s)
                    .ok_or_else(|| Error::DimensionMismatch(format!("no scale for body `{}`", b.name)))
            })
            .collect()
    }

    /// Full kinematic state of frame `t`. Fails when any angle or the pelvis
    /// rotation is missing or when DOF names do not match the model.
    pub fn state_at(&self, model: &SkeletalModel, t: usize) -> Result<KinematicState> {
        let scales = self.model_scales(model)?;
        let mut angles = Vec::with_capacity(model.dof_count());
        for name in model.dof_names() {
            let col = self
                .dof_column(name)
                .ok_or_else(|| Error::DimensionMismatch(format!("no column for dof `{name}`")))?;
            let value = self.angles[t][col]
                .ok_or_else(|| Error::Empty(format!("frame {t}: dof `{name}` is missing")))?;
            angles.push(value);
        }
        let pelvis = self.pelvis[t].ok_or_else(|| Error::Empty(format!("frame {t}: pelvis rotation is missing")))?;
        Ok(KinematicState {
            angles,
            scales,
            pelvis_rotation: pelvis,
        })
    }
}
