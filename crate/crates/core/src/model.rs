//! Skeletal model: bodies, joints, markers and scaling pairs, together with the
//! plain-text model format and the structural validation run on every load.
//!
//! The model format is a sequence of `[section]` blocks holding `key = value`
//! lines. Angles are written in degrees and lengths in meters; `#` starts a
//! comment. A joint frame line holds the Euler orientation (three angles,
//! intrinsic X-Y-Z) followed by the translation:
//!
//! ```text
//! [joint]
//! name = hip
//! parent = pelvis
//! child = femur
//! parent_frame = 0 0 0  0 0 0
//! child_frame = 0 0 0  0 0 0
//! dof = hip_flexion 0 0 1 -150 150
//! ```
//!
//! A joint whose parent is `ground` and whose child is the root describes the
//! pelvis-ground connection. Its degrees of freedom are never state
//! coordinates (the pelvis rotation is supplied as a matrix) and they are the
//! only ones allowed to be `unbounded`.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::rotation::AXIS_UNIT_TOLERANCE;

pub const ROOT_BODY: &str = "pelvis";
pub const GROUND: &str = "ground";

#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    pub name: String,
    pub parent: Option<String>,
    pub default_scale: Vector3<f64>,
    /// Axis index (0, 1, 2) used when reporting scale errors in millimeters.
    pub longest_axis: usize,
    /// Length in meters of the longest dimension at default scale.
    pub reference_length: f64,
}

/// Joint frame relative to a body: Euler orientation (radians) and translation (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub orientation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Frame {
    pub fn identity() -> Self {
        Frame {
            orientation: Vector3::zeros(),
            translation: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounds {
    /// Closed interval in radians.
    Range { min: f64, max: f64 },
    Unbounded,
}

impl Bounds {
    pub fn contains(&self, value: f64, tolerance: f64) -> bool {
        match *self {
            Bounds::Range { min, max } => value >= min - tolerance && value <= max + tolerance,
            Bounds::Unbounded => true,
        }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        match *self {
            Bounds::Range { min, max } => value.clamp(min, max),
            Bounds::Unbounded => value,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, Bounds::Range { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dof {
    pub name: String,
    pub axis: Vector3<f64>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent_body: String,
    pub child_body: String,
    pub parent_frame: Frame,
    pub child_frame: Frame,
    pub dofs: Vec<Dof>,
}

impl Joint {
    pub fn is_ground(&self) -> bool {
        self.parent_body == GROUND
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub name: String,
    pub body: String,
    /// Offset from the body origin in the body frame, meters.
    pub offset: Vector3<f64>,
    pub weight: f64,
    pub bony: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPair {
    pub body: String,
    pub marker_a: String,
    pub marker_b: String,
    pub axis: usize,
}

/// Validated kinematic tree. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct SkeletalModel {
    bodies: Vec<Body>,
    joints: Vec<Joint>,
    markers: Vec<Marker>,
    scaling_pairs: Vec<ScalingPair>,
    index: ModelIndex,
}

/// Lookup tables derived from the declarations.
#[derive(Debug, Clone)]
struct ModelIndex {
    body_by_name: HashMap<String, usize>,
    marker_by_name: HashMap<String, usize>,
    dof_by_name: HashMap<String, usize>,
    body_parent: Vec<Option<usize>>,
    /// Joint (non-ground) whose child is the body.
    incoming_joint: Vec<Option<usize>>,
    /// Non-ground joints leaving each body, in declaration order.
    outgoing_joints: Vec<Vec<usize>>,
    level_order: Vec<usize>,
    /// First global DOF index of each joint; ground joint has none.
    dof_offset: Vec<Option<usize>>,
    dof_names: Vec<String>,
    dof_joint: Vec<usize>,
    marker_body: Vec<usize>,
    ground_joint: Option<usize>,
    root: usize,
}

impl SkeletalModel {
    /// Builds and validates a model. Errors name the offending entity.
    pub fn new(
        bodies: Vec<Body>,
        joints: Vec<Joint>,
        markers: Vec<Marker>,
        scaling_pairs: Vec<ScalingPair>,
    ) -> Result<Self> {
        let index = build_index(&bodies, &joints, &markers, &scaling_pairs)?;
        let model = SkeletalModel {
            bodies,
            joints,
            markers,
            scaling_pairs,
            index,
        };
        model.check_scaling_pairs()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_model(text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn scaling_pairs(&self) -> &[ScalingPair] {
        &self.scaling_pairs
    }

    pub fn root(&self) -> usize {
        self.index.root
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.index.body_by_name.get(name).copied()
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.index.marker_by_name.get(name).copied()
    }

    pub fn dof_index(&self, name: &str) -> Option<usize> {
        self.index.dof_by_name.get(name).copied()
    }

    pub fn body_parent(&self, body: usize) -> Option<usize> {
        self.index.body_parent[body]
    }

    pub fn incoming_joint(&self, body: usize) -> Option<usize> {
        self.index.incoming_joint[body]
    }

    pub fn outgoing_joints(&self, body: usize) -> &[usize] {
        &self.index.outgoing_joints[body]
    }

    /// Breadth-first order from the root; children follow joint declaration order.
    pub fn level_order(&self) -> &[usize] {
        &self.index.level_order
    }

    pub fn ground_joint(&self) -> Option<&Joint> {
        self.index.ground_joint.map(|j| &self.joints[j])
    }

    /// Global index of the first state coordinate belonging to `joint`.
    pub fn dof_offset(&self, joint: usize) -> Option<usize> {
        self.index.dof_offset[joint]
    }

    /// Number of angle coordinates in a kinematic state.
    pub fn dof_count(&self) -> usize {
        self.index.dof_names.len()
    }

    pub fn dof_names(&self) -> &[String] {
        &self.index.dof_names
    }

    pub fn dof(&self, index: usize) -> &Dof {
        let joint = self.index.dof_joint[index];
        let offset = self.index.dof_offset[joint].expect("state dof belongs to a non-ground joint");
        &self.joints[joint].dofs[index - offset]
    }

    pub fn dof_joint(&self, index: usize) -> usize {
        self.index.dof_joint[index]
    }

    pub fn marker_body(&self, marker: usize) -> usize {
        self.index.marker_body[marker]
    }

    pub fn marker_names(&self) -> Vec<String> {
        self.markers.iter().map(|m| m.name.clone()).collect()
    }

    pub fn default_scales(&self) -> Vec<Vector3<f64>> {
        self.bodies.iter().map(|b| b.default_scale).collect()
    }

    /// True when `ancestor` lies on the path from the root to `body` (inclusive).
    pub fn is_ancestor_or_self(&self, ancestor: usize, body: usize) -> bool {
        let mut cur = Some(body);
        while let Some(b) = cur {
            if b == ancestor {
                return true;
            }
            cur = self.index.body_parent[b];
        }
        false
    }

    /// Neutral angles: zero, projected into each DOF's bounds.
    pub fn neutral_angles(&self) -> Vec<f64> {
        (0..self.dof_count()).map(|i| self.dof(i).bounds.clamp(0.0)).collect()
    }

    fn check_scaling_pairs(&self) -> Result<()> {
        if self.scaling_pairs.is_empty() {
            return Ok(());
        }
        let state = crate::state::KinematicState::neutral(self);
        let plan = crate::fk::FkPlan::new(self);
        let frames = plan.evaluate_frames_unchecked(&state);
        let jac = crate::jacobian::marker_jacobian_from_frames(self, &state, &frames);
        for pair in &self.scaling_pairs {
            let a = self.index.marker_by_name[&pair.marker_a];
            let b = self.index.marker_by_name[&pair.marker_b];
            let diff = frames.markers[a] - frames.markers[b];
            let dist = diff.norm();
            if dist <= 1e-12 {
                return Err(Error::DegeneratePair {
                    body: pair.body.clone(),
                    marker_a: pair.marker_a.clone(),
                    marker_b: pair.marker_b.clone(),
                });
            }
            let body = self.index.body_by_name[&pair.body];
            let col = self.dof_count() + 3 * body + pair.axis;
            let u = diff / dist;
            let da = Vector3::from_fn(|r, _| jac.matrix[(3 * a + r, col)]);
            let db = Vector3::from_fn(|r, _| jac.matrix[(3 * b + r, col)]);
            if u.dot(&(da - db)).abs() < 1e-9 {
                return Err(Error::Model(format!(
                    "scaling pair {}-{} is insensitive to scale axis {} of body `{}`",
                    pair.marker_a, pair.marker_b, pair.axis, pair.body
                )));
            }
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut first = true;
        let mut sep = |out: &mut String| {
            if !first {
                out.push('\n');
            }
            first = false;
        };
        for b in &self.bodies {
            sep(&mut out);
            out.push_str("[body]\n");
            let _ = writeln!(out, "name = {}", b.name);
            if let Some(p) = &b.parent {
                let _ = writeln!(out, "parent = {p}");
            }
            let _ = writeln!(out, "default_scale = {}", fmt_vec(&b.default_scale));
            let _ = writeln!(out, "longest_axis = {}", b.longest_axis);
            let _ = writeln!(out, "reference_length = {}", fmt_num(b.reference_length));
        }
        for j in &self.joints {
            sep(&mut out);
            out.push_str("[joint]\n");
            let _ = writeln!(out, "name = {}", j.name);
            let _ = writeln!(out, "parent = {}", j.parent_body);
            let _ = writeln!(out, "child = {}", j.child_body);
            let _ = writeln!(out, "parent_frame = {}", fmt_frame(&j.parent_frame));
            let _ = writeln!(out, "child_frame = {}", fmt_frame(&j.child_frame));
            for d in &j.dofs {
                let bounds = match d.bounds {
                    Bounds::Range { min, max } => format!("{} {}", fmt_deg(min), fmt_deg(max)),
                    Bounds::Unbounded => "unbounded".to_string(),
                };
                let _ = writeln!(out, "dof = {} {} {}", d.name, fmt_vec(&d.axis), bounds);
            }
        }
        for m in &self.markers {
            sep(&mut out);
            out.push_str("[marker]\n");
            let _ = writeln!(out, "name = {}", m.name);
            let _ = writeln!(out, "body = {}", m.body);
            let _ = writeln!(out, "offset = {}", fmt_vec(&m.offset));
            let _ = writeln!(out, "weight = {}", fmt_num(m.weight));
            let _ = writeln!(out, "bony = {}", m.bony);
        }
        for p in &self.scaling_pairs {
            sep(&mut out);
            out.push_str("[scaling_pair]\n");
            let _ = writeln!(out, "body = {}", p.body);
            let _ = writeln!(out, "marker_a = {}", p.marker_a);
            let _ = writeln!(out, "marker_b = {}", p.marker_b);
            let _ = writeln!(out, "axis = {}", p.axis);
        }
        out
    }
}

fn build_index(
    bodies: &[Body],
    joints: &[Joint],
    markers: &[Marker],
    pairs: &[ScalingPair],
) -> Result<ModelIndex> {
    let mut body_by_name = HashMap::new();
    for (i, b) in bodies.iter().enumerate() {
        if b.name == GROUND {
            return Err(Error::Model(format!("body name `{GROUND}` is reserved")));
        }
        if body_by_name.insert(b.name.clone(), i).is_some() {
            return Err(Error::Model(format!("duplicate body `{}`", b.name)));
        }
        if b.default_scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Model(format!(
                "body `{}` has nonpositive default scale",
                b.name
            )));
        }
        if b.longest_axis > 2 {
            return Err(Error::Model(format!(
                "body `{}` longest_axis must be 0, 1 or 2",
                b.name
            )));
        }
        if !(b.reference_length > 0.0) {
            return Err(Error::Model(format!(
                "body `{}` reference_length must be positive",
                b.name
            )));
        }
    }

    let roots: Vec<usize> = (0..bodies.len()).filter(|&i| bodies[i].parent.is_none()).collect();
    let root = match roots.as_slice() {
        [r] if bodies[*r].name == ROOT_BODY => *r,
        [r] => {
            return Err(Error::Model(format!(
                "root body must be `{ROOT_BODY}`, found `{}`",
                bodies[*r].name
            )))
        }
        [] => return Err(Error::Model(format!("missing root body `{ROOT_BODY}`"))),
        _ => {
            let names: Vec<_> = roots.iter().map(|&r| bodies[r].name.as_str()).collect();
            return Err(Error::Model(format!("multiple root bodies: {}", names.join(", "))));
        }
    };

    let mut body_parent = vec![None; bodies.len()];
    for (i, b) in bodies.iter().enumerate() {
        if let Some(p) = &b.parent {
            let pi = *body_by_name
                .get(p)
                .ok_or_else(|| Error::Model(format!("body `{}` has unknown parent `{p}`", b.name)))?;
            body_parent[i] = Some(pi);
        }
    }
    for start in 0..bodies.len() {
        let mut cur = start;
        let mut steps = 0;
        while let Some(p) = body_parent[cur] {
            cur = p;
            steps += 1;
            if steps > bodies.len() {
                return Err(Error::Model(format!(
                    "cycle in body tree through `{}`",
                    bodies[start].name
                )));
            }
        }
    }

    let mut incoming_joint = vec![None; bodies.len()];
    let mut outgoing_joints = vec![Vec::new(); bodies.len()];
    let mut ground_joint = None;
    let mut joint_names = HashSet::new();
    let mut dof_offset = vec![None; joints.len()];
    let mut dof_names = Vec::new();
    let mut dof_joint = Vec::new();
    let mut dof_by_name = HashMap::new();
    for (ji, j) in joints.iter().enumerate() {
        if !joint_names.insert(j.name.as_str()) {
            return Err(Error::Model(format!("duplicate joint `{}`", j.name)));
        }
        let child = *body_by_name
            .get(&j.child_body)
            .ok_or_else(|| Error::Model(format!("joint `{}` has unknown child `{}`", j.name, j.child_body)))?;
        if j.dofs.len() > 3 {
            return Err(Error::Model(format!("joint `{}` declares more than 3 dofs", j.name)));
        }
        for d in &j.dofs {
            let norm = d.axis.norm();
            if (norm - 1.0).abs() > AXIS_UNIT_TOLERANCE {
                return Err(Error::NonUnitAxis {
                    context: format!("dof `{}` of joint `{}`", d.name, j.name),
                    norm,
                });
            }
            match d.bounds {
                Bounds::Unbounded if !j.is_ground() => {
                    return Err(Error::Model(format!(
                        "dof `{}` of joint `{}` is unbounded; only the pelvis-ground joint may be",
                        d.name, j.name
                    )))
                }
                Bounds::Range { min, max } if !(min <= max) => {
                    return Err(Error::Model(format!("dof `{}` has min > max", d.name)))
                }
                _ => {}
            }
        }
        if j.is_ground() {
            if child != root {
                return Err(Error::Model(format!(
                    "ground joint `{}` must connect to the root `{ROOT_BODY}`",
                    j.name
                )));
            }
            if ground_joint.replace(ji).is_some() {
                return Err(Error::Model("more than one ground joint".into()));
            }
            continue;
        }
        let parent = *body_by_name
            .get(&j.parent_body)
            .ok_or_else(|| Error::Model(format!("joint `{}` has unknown parent `{}`", j.name, j.parent_body)))?;
        if body_parent[child] != Some(parent) {
            return Err(Error::Model(format!(
                "joint `{}` connects `{}` -> `{}` but body `{}` declares a different parent",
                j.name, j.parent_body, j.child_body, j.child_body
            )));
        }
        if incoming_joint[child].replace(ji).is_some() {
            return Err(Error::Model(format!(
                "body `{}` is the child of more than one joint",
                j.child_body
            )));
        }
        outgoing_joints[parent].push(ji);
        dof_offset[ji] = Some(dof_names.len());
        for d in &j.dofs {
            if dof_by_name.insert(d.name.clone(), dof_names.len()).is_some() {
                return Err(Error::Model(format!("duplicate dof `{}`", d.name)));
            }
            dof_names.push(d.name.clone());
            dof_joint.push(ji);
        }
    }
    for (i, b) in bodies.iter().enumerate() {
        if i != root && incoming_joint[i].is_none() {
            return Err(Error::Model(format!("body `{}` is not the child of any joint", b.name)));
        }
    }

    let mut level_order = Vec::with_capacity(bodies.len());
    let mut queue = VecDeque::from([root]);
    while let Some(b) = queue.pop_front() {
        level_order.push(b);
        for &j in &outgoing_joints[b] {
            queue.push_back(body_by_name[&joints[j].child_body]);
        }
    }
    if level_order.len() != bodies.len() {
        return Err(Error::Model("level-order traversal does not reach every body".into()));
    }

    let mut marker_by_name = HashMap::new();
    let mut marker_body = Vec::with_capacity(markers.len());
    for (i, m) in markers.iter().enumerate() {
        if marker_by_name.insert(m.name.clone(), i).is_some() {
            return Err(Error::Model(format!("duplicate marker `{}`", m.name)));
        }
        let b = *body_by_name
            .get(&m.body)
            .ok_or_else(|| Error::Model(format!("marker `{}` on unknown body `{}`", m.name, m.body)))?;
        if !(m.weight >= 0.0) || !m.weight.is_finite() {
            return Err(Error::Model(format!("marker `{}` has negative weight", m.name)));
        }
        marker_body.push(b);
    }

    for p in pairs {
        if !body_by_name.contains_key(&p.body) {
            return Err(Error::Model(format!("scaling pair on unknown body `{}`", p.body)));
        }
        for m in [&p.marker_a, &p.marker_b] {
            if !marker_by_name.contains_key(m) {
                return Err(Error::Model(format!("scaling pair references unknown marker `{m}`")));
            }
        }
        if p.axis > 2 {
            return Err(Error::Model(format!("scaling pair on `{}` has axis > 2", p.body)));
        }
    }

    Ok(ModelIndex {
        body_by_name,
        marker_by_name,
        dof_by_name,
        body_parent,
        incoming_joint,
        outgoing_joints,
        level_order,
        dof_offset,
        dof_names,
        dof_joint,
        marker_body,
        ground_joint,
        root,
    })
}

pub(crate) fn fmt_num(x: f64) -> String {
    format!("{}", x + 0.0)
}

/// Radians to degrees, rounded to 1e-9 degrees so canonical files round-trip.
pub(crate) fn fmt_deg(rad: f64) -> String {
    let deg = (rad.to_degrees() * 1e9).round() / 1e9;
    fmt_num(deg)
}

fn fmt_vec(v: &Vector3<f64>) -> String {
    format!("{} {} {}", fmt_num(v.x), fmt_num(v.y), fmt_num(v.z))
}

fn fmt_frame(f: &Frame) -> String {
    format!(
        "{} {} {} {}",
        fmt_deg(f.orientation.x),
        fmt_deg(f.orientation.y),
        fmt_deg(f.orientation.z),
        fmt_vec(&f.translation)
    )
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Body,
    Joint,
    Marker,
    ScalingPair,
}

struct Block {
    kind: Section,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Block {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(l, _, v)| (*l, v.as_str()))
    }

    fn require(&self, key: &str) -> Result<(usize, &str)> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.line,
            message: format!("missing key `{key}`"),
        })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(line, format!("expected a number, found `{s}`")))
}

fn parse_numbers(line: usize, s: &str, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|t| parse_f64(line, t))
        .collect::<Result<_>>()?;
    if v.len() != n {
        return Err(parse_err(line, format!("expected {n} numbers, found {}", v.len())));
    }
    Ok(v)
}

fn parse_vec3(line: usize, s: &str) -> Result<Vector3<f64>> {
    let v = parse_numbers(line, s, 3)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_frame(line: usize, s: &str) -> Result<Frame> {
    let v = parse_numbers(line, s, 6)?;
    Ok(Frame {
        orientation: Vector3::new(v[0].to_radians(), v[1].to_radians(), v[2].to_radians()),
        translation: Vector3::new(v[3], v[4], v[5]),
    })
}

fn parse_usize(line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| parse_err(line, format!("expected a nonnegative integer, found `{s}`")))
}

fn parse_dof(line: usize, s: &str) -> Result<Dof> {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    let (name, rest) = tokens
        .split_first()
        .ok_or_else(|| parse_err(line, "empty dof line"))?;
    let bounds = match rest {
        [_, _, _, "unbounded"] => Bounds::Unbounded,
        [_, _, _, min, max] => Bounds::Range {
            min: parse_f64(line, min)?.to_radians(),
            max: parse_f64(line, max)?.to_radians(),
        },
        _ => {
            return Err(parse_err(
                line,
                "dof expects `name ax ay az min max` or `name ax ay az unbounded`",
            ))
        }
    };
    let axis = Vector3::new(
        parse_f64(line, rest[0])?,
        parse_f64(line, rest[1])?,
        parse_f64(line, rest[2])?,
    );
    Ok(Dof {
        name: name.to_string(),
        axis,
        bounds,
    })
}

fn parse_model(text: &str) -> Result<SkeletalModel> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let kind = match name.trim() {
                "body" => Section::Body,
                "joint" => Section::Joint,
                "marker" => Section::Marker,
                "scaling_pair" => Section::ScalingPair,
                other => return Err(parse_err(line_no, format!("unknown section `[{other}]`"))),
            };
            blocks.push(Block {
                kind,
                line: line_no,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, "expected `key = value`"))?;
        let block = blocks
            .last_mut()
            .ok_or_else(|| parse_err(line_no, "entry outside of a section"))?;
        block
            .entries
            .push((line_no, key.trim().to_string(), value.trim().to_string()));
    }

    let mut bodies = Vec::new();
    let mut joints = Vec::new();
    let mut markers = Vec::new();
    let mut pairs = Vec::new();
    for block in &blocks {
        let allowed: &[&str] = match block.kind {
            Section::Body => &["name", "parent", "default_scale", "longest_axis", "reference_length"],
            Section::Joint => &["name", "parent", "child", "parent_frame", "child_frame", "dof"],
            Section::Marker => &["name", "body", "offset", "weight", "bony"],
            Section::ScalingPair => &["body", "marker_a", "marker_b", "axis"],
        };
        for (l, k, _) in &block.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(parse_err(*l, format!("unknown key `{k}`")));
            }
            if k != "dof" && block.entries.iter().filter(|(_, k2, _)| k2 == k).count() > 1 {
                return Err(parse_err(*l, format!("repeated key `{k}`")));
            }
        }
        match block.kind {
            Section::Body => {
                let (_, name) = block.require("name")?;
                let (l, scale) = block.require("default_scale")?;
                let default_scale = parse_vec3(l, scale)?;
                let (l, axis) = block.require("longest_axis")?;
                let longest_axis = parse_usize(l, axis)?;
                let (l, len) = block.require("reference_length")?;
                bodies.push(Body {
                    name: name.to_string(),
                    parent: block.get("parent").map(|(_, p)| p.to_string()),
                    default_scale,
                    longest_axis,
                    reference_length: parse_f64(l, len)?,
                });
            }
            Section::Joint => {
                let (_, name) = block.require("name")?;
                let (_, parent) = block.require("parent")?;
                let (_, child) = block.require("child")?;
                let parent_frame = match block.get("parent_frame") {
                    Some((l, s)) => parse_frame(l, s)?,
                    None => Frame::identity(),
                };
                let child_frame = match block.get("child_frame") {
                    Some((l, s)) => parse_frame(l, s)?,
                    None => Frame::identity(),
                };
                let dofs = block
                    .entries
                    .iter()
                    .filter(|(_, k, _)| k == "dof")
                    .map(|(l, _, v)| parse_dof(*l, v))
                    .collect::<Result<Vec<_>>>()?;
                joints.push(Joint {
                    name: name.to_string(),
                    parent_body: parent.to_string(),
                    child_body: child.to_string(),
                    parent_frame,
                    child_frame,
                    dofs,
                });
            }
            Section::Marker => {
                let (_, name) = block.require("name")?;
                let (_, body) = block.require("body")?;
                let (l, offset) = block.require("offset")?;
                let offset = parse_vec3(l, offset)?;
                let weight = match block.get("weight") {
                    Some((l, w)) => parse_f64(l, w)?,
                    None => 1.0,
                };
                let bony = match block.get("bony") {
                    Some((_, "true")) | None => true,
                    Some((_, "false")) => false,
                    Some((l, other)) => {
                        return Err(parse_err(l, format!("expected true/false, found `{other}`")))
                    }
                };
                markers.push(Marker {
                    name: name.to_string(),
                    body: body.to_string(),
                    offset,
                    weight,
                    bony,
                });
            }
            Section::ScalingPair => {
                let (_, body) = block.require("body")?;
                let (_, a) = block.require("marker_a")?;
                let (_, b) = block.require("marker_b")?;
                let (l, axis) = block.require("axis")?;
                pairs.push(ScalingPair {
                    body: body.to_string(),
                    marker_a: a.to_string(),
                    marker_b: b.to_string(),
                    axis: parse_usize(l, axis)?,
                });
            }
        }
    }
    SkeletalModel::new(bodies, joints, markers, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn chain2_loads() {
        let m = fixtures::chain2();
        assert_eq!(m.bodies().len(), 2);
        assert_eq!(m.joints().len(), 1);
        assert_eq!(m.markers().len(), 1);
        assert_eq!(m.level_order(), &[0, 1]);
        assert_eq!(m.dof_count(), 1);
    }

    #[test]
    fn canonical_text_round_trips() {
        for text in [fixtures::CHAIN2, fixtures::CHAIN2_SCALING, fixtures::FULLBODY] {
            let model = SkeletalModel::parse(text).unwrap();
            let saved = model.to_text();
            let again = SkeletalModel::parse(&saved).unwrap().to_text();
            assert_eq!(saved, again);
        }
        assert_eq!(fixtures::chain2().to_text(), fixtures::CHAIN2);
    }

    #[test]
    fn duplicate_marker_is_named() {
        let text = format!(
            "{}\n[marker]\nname = KNEE\nbody = pelvis\noffset = 0 0 0\n",
            fixtures::CHAIN2
        );
        let err = SkeletalModel::parse(&text).unwrap_err().to_string();
        assert!(err.contains("duplicate marker `KNEE`"), "{err}");
    }

    #[test]
    fn non_unit_axis_rejected() {
        let text = fixtures::CHAIN2.replace("dof = hip_flexion 0 0 1", "dof = hip_flexion 0 0 2");
        let err = SkeletalModel::parse(&text).unwrap_err();
        assert!(matches!(err, Error::NonUnitAxis { .. }), "{err}");
        assert!(err.to_string().contains("non-unit axis"));
    }

    #[test]
    fn cycle_rejected() {
        let text = "[body]\nname = pelvis\ndefault_scale = 1 1 1\nlongest_axis = 1\nreference_length = 1\n\
                    [body]\nname = a\nparent = b\ndefault_scale = 1 1 1\nlongest_axis = 1\nreference_length = 1\n\
                    [body]\nname = b\nparent = a\ndefault_scale = 1 1 1\nlongest_axis = 1\nreference_length = 1\n";
        let err = SkeletalModel::parse(text).unwrap_err().to_string();
        assert!(err.contains("cycle"), "{err}");
    }

    #[test]
    fn missing_root_rejected() {
        let text = fixtures::CHAIN2.replacen("name = pelvis", "name = hips", 1);
        let err = SkeletalModel::parse(&text).unwrap_err().to_string();
        assert!(err.contains("root"), "{err}");
    }

    #[test]
    fn unbounded_only_on_ground_joint() {
        let text = fixtures::CHAIN2.replace("0 0 1 -150 150", "0 0 1 unbounded");
        let err = SkeletalModel::parse(&text).unwrap_err().to_string();
        assert!(err.contains("unbounded"), "{err}");
        // the full-body fixture's ground joint declares unbounded dofs
        let full = fixtures::fullbody();
        assert!(full.ground_joint().unwrap().dofs.iter().all(|d| !d.bounds.is_bounded()));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = SkeletalModel::parse("[body]\nname = pelvis\ndefault_scale = 1 x 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn insensitive_scaling_pair_rejected() {
        // HIP and KNEE differ only along y; measuring x cannot see femur scale
        let text = fixtures::CHAIN2_SCALING.replace("axis = 1", "axis = 0");
        let err = SkeletalModel::parse(&text).unwrap_err().to_string();
        assert!(err.contains("insensitive"), "{err}");
    }

    #[test]
    fn fixture_mutations_are_rejected() {
        let base = fixtures::FULLBODY;
        let mutations: Vec<(&str, &str)> = vec![
            ("name = femur_r\nparent = pelvis", "name = femur_r\nparent = nowhere"),
            ("default_scale = 1 1 1", "default_scale = 1 0 1"),
            ("longest_axis = 1", "longest_axis = 3"),
            ("child = tibia_r", "child = tibia_l"),
            ("body = tibia_r", "body = shin"),
            ("weight = 1", "weight = -1"),
            ("dof = knee_r_flexion 0 0 -1", "dof = knee_r_flexion 0 0.5 -1"),
            ("marker_b = RKNE", "marker_b = NOPE"),
            ("dof = elbow_r_flexion 0 0 1 0 150", "dof = elbow_r_flexion 0 0 1 unbounded"),
            ("dof = elbow_r_flexion 0 0 1 0 150", "dof = elbow_r_flexion 0 0 1 150 0"),
            ("dof = elbow_l_flexion", "dof = elbow_r_flexion"),
        ];
        for (from, to) in mutations {
            assert!(base.contains(from), "fixture lacks `{from}`");
            let text = base.replacen(from, to, 1);
            assert!(SkeletalModel::parse(&text).is_err(), "mutation `{from}` -> `{to}` accepted");
        }
    }
}
