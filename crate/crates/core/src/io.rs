//! Text file formats for marker trajectories, angle trajectories and body
//! scales.
//!
//! Every file is CSV preceded by `#! key = value` metadata lines. Lines that
//! start with a plain `#` are comments. An empty cell is a missing value.
//! Angles are written in degrees, lengths in meters. Numbers use the shortest
//! representation that parses back to the same `f64`.
//!
//! Marker file:
//!
//! ```text
//! #! kind = markers
//! #! frame_rate = 30
//! #! markers = KNEE
//! frame,time,KNEE_x,KNEE_y,KNEE_z
//! 0,0,0,-0.4,0
//! ```
//!
//! Angle file (the pelvis rotation matrix is stored row-major in nine columns):
//!
//! ```text
//! #! kind = angles
//! #! frame_rate = 30
//! #! dofs = hip_flexion
//! #! scale pelvis = 1 1 1
//! #! scale femur = 1 1 1
//! frame,time,hip_flexion,pelvis_r00,pelvis_r01,...,pelvis_r22
//! 0,0,0,1,0,0,0,1,0,0,0,1
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::ik::TrajectorySolution;
use crate::model::SkeletalModel;
use crate::trajectory::{AngleTrajectory, MarkerTrajectory};

const AXES: [&str; 3] = ["x", "y", "z"];

fn num(v: f64) -> String {
    // adding 0.0 turns -0 into 0
    format!("{}", v + 0.0)
}

fn cell(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Table {
    meta: Vec<(usize, String, String)>,
    header_line: usize,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn perr(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

impl Table {
    fn parse(text: &str) -> Result<Table> {
        let mut meta = Vec::new();
        let mut header: Option<(usize, Vec<String>)> = None;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if let Some(m) = line.strip_prefix("#!") {
                if header.is_some() {
                    return Err(perr(line_no, "metadata after the column header"));
                }
                let (k, v) = m
                    .split_once('=')
                    .ok_or_else(|| perr(line_no, "expected `#! key = value`"))?;
                meta.push((line_no, k.trim().to_string(), v.trim().to_string()));
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
            match &header {
                None => header = Some((line_no, cells)),
                Some((_, h)) => {
                    if cells.len() != h.len() {
                        return Err(perr(line_no, format!("expected {} columns, found {}", h.len(), cells.len())));
                    }
                    rows.push((line_no, cells));
                }
            }
        }
        let (header_line, header) = header.ok_or_else(|| perr(text.lines().count().max(1), "missing column header"))?;
        Ok(Table {
            meta,
            header_line,
            header,
            rows,
        })
    }

    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.meta.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()))
    }

    fn require(&self, key: &str) -> Result<(usize, &str)> {
        self.get(key)
            .ok_or_else(|| perr(self.header_line, format!("missing `#! {key} = ...` line")))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        let (line, v) = self.require("kind")?;
        if v != kind {
            return Err(perr(line, format!("expected kind `{kind}`, found `{v}`")));
        }
        Ok(())
    }

    fn expect_header(&self, expected: &[String]) -> Result<()> {
        if self.header != expected {
            return Err(perr(
                self.header_line,
                format!("expected columns `{}`, found `{}`", expected.join(","), self.header.join(",")),
            ));
        }
        Ok(())
    }

    fn frame_rate(&self) -> Result<f64> {
        let (line, v) = self.require("frame_rate")?;
        let fps: f64 = v.parse().map_err(|_| perr(line, format!("bad frame rate `{v}`")))?;
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(perr(line, format!("frame rate must be positive, got {v}")));
        }
        Ok(fps)
    }
}

fn parse_f64(line: usize, s: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|_| perr(line, format!("bad number `{s}`")))?;
    if !v.is_finite() {
        return Err(perr(line, format!("non-finite number `{s}`")));
    }
    Ok(v)
}

fn parse_opt(line: usize, s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(line, s).map(Some)
    }
}

/// Frame index and time columns; times must strictly increase.
fn parse_times(table: &Table) -> Result<Vec<f64>> {
    let mut times = Vec::with_capacity(table.rows.len());
    for (line, cells) in &table.rows {
        cells[0]
            .parse::<usize>()
            .map_err(|_| perr(*line, format!("bad frame index `{}`", cells[0])))?;
        let t = parse_f64(*line, &cells[1])?;
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(perr(*line, format!("time {t} does not increase")));
            }
        }
        times.push(t);
    }
    Ok(times)
}

fn names(v: &str) -> Vec<String> {
    v.split_whitespace().map(str::to_string).collect()
}

fn marker_header(markers: &[String]) -> Vec<String> {
    let mut h = vec!["frame".to_string(), "time".to_string()];
    for m in markers {
        h.extend(AXES.map(|a| format!("{m}_{a}")));
    }
    h
}

pub fn write_markers(traj: &MarkerTrajectory) -> String {
    let mut out = String::new();
    writeln!(out, "#! kind = markers").unwrap();
    writeln!(out, "#! frame_rate = {}", num(traj.frame_rate)).unwrap();
    writeln!(out, "#! markers = {}", traj.marker_names.join(" ")).unwrap();
    out.push_str(&marker_header(&traj.marker_names).join(","));
    out.push('\n');
    for (t, frame) in traj.frames.iter().enumerate() {
        let mut cells = vec![t.to_string(), num(traj.times[t])];
        for p in frame {
            cells.extend((0..3).map(|a| cell(p.map(|p| p[a]))));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_markers(text: &str) -> Result<MarkerTrajectory> {
    let table = Table::parse(text)?;
    table.expect_kind("markers")?;
    let frame_rate = table.frame_rate()?;
    let markers = names(table.require("markers")?.1);
    table.expect_header(&marker_header(&markers))?;
    let times = parse_times(&table)?;
    let mut traj = MarkerTrajectory::new(frame_rate, markers.clone());
    for (line, cells) in &table.rows {
        let mut frame = Vec::with_capacity(markers.len());
        for (m, name) in markers.iter().enumerate() {
            let xyz: Vec<Option<f64>> = (0..3)
                .map(|a| parse_opt(*line, &cells[2 + 3 * m + a]))
                .collect::<Result<_>>()?;
            frame.push(match (xyz[0], xyz[1], xyz[2]) {
                (Some(x), Some(y), Some(z)) => Some(Vector3::new(x, y, z)),
                (None, None, None) => None,
                _ => return Err(perr(*line, format!("marker `{name}` is partially missing"))),
            });
        }
        traj.push(frame);
    }
    traj.times = times;
    Ok(traj)
}

fn angle_header(dofs: &[String]) -> Vec<String> {
    let mut h = vec!["frame".to_string(), "time".to_string()];
    h.extend(dofs.iter().cloned());
    for r in 0..3 {
        for c in 0..3 {
            h.push(format!("pelvis_r{r}{c}"));
        }
    }
    h
}

pub fn write_angles(traj: &AngleTrajectory) -> String {
    let mut out = String::new();
    writeln!(out, "#! kind = angles").unwrap();
    writeln!(out, "#! frame_rate = {}", num(traj.frame_rate)).unwrap();
    writeln!(out, "#! dofs = {}", traj.dof_names.join(" ")).unwrap();
    for (body, s) in &traj.scales {
        writeln!(out, "#! scale {body} = {} {} {}", num(s.x), num(s.y), num(s.z)).unwrap();
    }
    out.push_str(&angle_header(&traj.dof_names).join(","));
    out.push('\n');
    for t in 0..traj.len() {
        let mut cells = vec![t.to_string(), num(traj.times[t])];
        cells.extend(traj.angles[t].iter().map(|a| cell(a.map(f64::to_degrees))));
        for r in 0..3 {
            for c in 0..3 {
                cells.push(cell(traj.pelvis[t].map(|m| m[(r, c)])));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_angles(text: &str) -> Result<AngleTrajectory> {
    let table = Table::parse(text)?;
    table.expect_kind("angles")?;
    let frame_rate = table.frame_rate()?;
    let dofs = names(table.require("dofs")?.1);
    let mut scales = Vec::new();
    for (line, key, value) in &table.meta {
        if let Some(body) = key.strip_prefix("scale ") {
            let v: Vec<f64> = value
                .split_whitespace()
                .map(|s| parse_f64(*line, s))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(perr(*line, format!("scale of `{}` needs 3 numbers", body.trim())));
            }
            scales.push((body.trim().to_string(), Vector3::new(v[0], v[1], v[2])));
        }
    }
    table.expect_header(&angle_header(&dofs))?;
    let times = parse_times(&table)?;
    let mut traj = AngleTrajectory::new(frame_rate, dofs.clone(), scales);
    let n = dofs.len();
    for (line, cells) in &table.rows {
        let angles = (0..n)
            .map(|q| parse_opt(*line, &cells[2 + q]).map(|a| a.map(f64::to_radians)))
            .collect::<Result<Vec<_>>>()?;
        let r: Vec<Option<f64>> = (0..9).map(|k| parse_opt(*line, &cells[2 + n + k])).collect::<Result<_>>()?;
        let pelvis = if r.iter().all(Option::is_some) {
            Some(Matrix3::from_row_iterator(r.into_iter().map(Option::unwrap)))
        } else if r.iter().all(Option::is_none) {
            None
        } else {
            return Err(perr(*line, "pelvis rotation is partially missing"));
        };
        traj.push(angles, pelvis);
    }
    traj.times = times;
    Ok(traj)
}

pub fn write_scales(model: &SkeletalModel, scales: &[Vector3<f64>]) -> String {
    let mut out = String::from("#! kind = scales\nbody,sx,sy,sz\n");
    for (b, s) in model.bodies().iter().zip(scales) {
        writeln!(out, "{},{},{},{}", b.name, num(s.x), num(s.y), num(s.z)).unwrap();
    }
    out
}

/// Scale vectors in model body order. Every body must appear exactly once.
pub fn parse_scales(text: &str, model: &SkeletalModel) -> Result<Vec<Vector3<f64>>> {
    let table = Table::parse(text)?;
    table.expect_kind("scales")?;
    table.expect_header(&["body", "sx", "sy", "sz"].map(String::from))?;
    let mut out: Vec<Option<Vector3<f64>>> = vec![None; model.bodies().len()];
    for (line, cells) in &table.rows {
        let b = model
            .body_index(&cells[0])
            .ok_or_else(|| perr(*line, format!("unknown body `{}`", cells[0])))?;
        if out[b].is_some() {
            return Err(perr(*line, format!("body `{}` listed twice", cells[0])));
        }
        out[b] = Some(Vector3::new(
            parse_f64(*line, &cells[1])?,
            parse_f64(*line, &cells[2])?,
            parse_f64(*line, &cells[3])?,
        ));
    }
    model
        .bodies()
        .iter()
        .zip(out)
        .map(|(b, s)| s.ok_or_else(|| Error::DimensionMismatch(format!("scales file has no row for `{}`", b.name))))
        .collect()
}

/// One row per frame: solver status, iteration count, objective (m²),
/// rejected joints (space separated) and every marker residual in mm.
pub fn write_ik_report(model: &SkeletalModel, solution: &TrajectorySolution) -> String {
    let names = model.marker_names();
    let mut out = String::from("frame,status,iterations,objective_m2,rejected");
    for n in &names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (t, frame) in solution.frames.iter().enumerate() {
        let mut cells = vec![t.to_string()];
        match frame {
            None => {
                cells.extend(["insufficient_markers".to_string(), String::new(), String::new(), String::new()]);
                cells.extend(names.iter().map(|_| String::new()));
            }
            Some(r) => {
                cells.push(if r.converged { "converged" } else { "max_iterations" }.to_string());
                cells.push(r.iterations.to_string());
                cells.push(num(r.objective));
                cells.push(r.rejected_joints.iter().cloned().collect::<Vec<_>>().join(" "));
                cells.extend(names.iter().map(|n| cell(r.per_marker_residual.get(n).map(|v| 1000.0 * v))));
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn write_string(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    Ok(std::fs::write(path, contents)?)
}

pub fn load_markers(path: impl AsRef<Path>) -> Result<MarkerTrajectory> {
    parse_markers(&read_to_string(path)?)
}

pub fn load_angles(path: impl AsRef<Path>) -> Result<AngleTrajectory> {
    parse_angles(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn sample_markers() -> MarkerTrajectory {
        let mut t = MarkerTrajectory::new(30.0, vec!["A".into(), "B".into()]);
        t.push(vec![Some(Vector3::new(0.1, -0.2, 1.0 / 3.0)), None]);
        t.push(vec![Some(Vector3::new(-0.0, 2e-17, 5.0)), Some(Vector3::new(1.0, 2.0, 3.0))]);
        t
    }

    #[test]
    fn markers_round_trip() {
        let t = sample_markers();
        let text = write_markers(&t);
        let back = parse_markers(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(write_markers(&back), text);
        assert!(text.contains("\n1,0.03333333333333333,0,0.00000000000000002,5,1,2,3\n"));
    }

    #[test]
    fn angles_round_trip() {
        let m = fixtures::chain2();
        let mut t = AngleTrajectory::for_model(&m, 30.0, &m.default_scales());
        t.push(vec![Some(0.5)], Some(Matrix3::identity()));
        t.push(vec![None], None);
        let text = write_angles(&t);
        let back = parse_angles(&text).unwrap();
        assert_eq!(write_angles(&back), text);
        assert!((back.angles[0][0].unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(back.angles[1][0], None);
        assert_eq!(back.scales, t.scales);
        assert!(text.contains("#! scale femur = 1 1 1\n"));
    }

    #[test]
    fn scales_round_trip() {
        let m = fixtures::chain2();
        let s = vec![Vector3::new(1.0, 1.1, 0.9), Vector3::new(2.0, 1.0, 1.0)];
        assert_eq!(parse_scales(&write_scales(&m, &s), &m).unwrap(), s);
        let missing = "#! kind = scales\nbody,sx,sy,sz\npelvis,1,1,1\n";
        assert!(matches!(parse_scales(missing, &m), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = write_markers(&sample_markers());
        let broken = text.replacen("0.1,", "zero,", 1);
        match parse_markers(&broken) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let short = text.replacen(",5,", ",", 1);
        assert!(matches!(parse_markers(&short), Err(Error::Parse { line: 6, .. })));
        let partial = text.replacen("0.1,-0.2,", ",-0.2,", 1);
        assert!(matches!(parse_markers(&partial), Err(Error::Parse { line: 5, .. })));
        let backwards = text.replacen("\n1,0.03333333333333333,", "\n1,0,", 1);
        assert!(matches!(parse_markers(&backwards), Err(Error::Parse { line: 6, .. })));
        assert!(matches!(parse_angles(&text), Err(Error::Parse { line: 1, .. })));
    }
}
