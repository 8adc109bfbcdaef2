//! Training losses and evaluation metrics.
//!
//! Units: angle metrics in degrees, landmark metrics in millimeters, velocities
//! per second. Missing samples are dropped pairwise and the number of samples
//! used is reported next to each aggregate.

use std::fmt;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::SkeletalModel;
use crate::trajectory::{AngleTrajectory, MarkerTrajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub joint: f64,
    pub marker: f64,
    pub body: f64,
    pub angle: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            joint: 1.0,
            marker: 2.0,
            body: 0.1,
            angle: 0.06,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub joint: f64,
    pub marker: f64,
    pub body: f64,
    pub angle: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    w.joint * c.joint + w.marker * c.marker + w.body * c.body + w.angle * c.angle
}

/// Mean over points of the L1 distance between root-relative positions.
pub fn root_relative_l1(
    est: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    est_root: &Vector3<f64>,
    gt_root: &Vector3<f64>,
) -> Result<f64> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} estimated points vs {} ground truth", est.len(), gt.len())));
    }
    if est.is_empty() {
        return Err(Error::Empty("no points".into()));
    }
    let sum: f64 = est
        .iter()
        .zip(gt)
        .map(|(e, g)| ((e - est_root) - (g - gt_root)).lp_norm(1))
        .sum();
    Ok(sum / est.len() as f64)
}

/// Reference point used to align trajectories before measuring landmark error.
#[derive(Debug, Clone, PartialEq)]
pub enum RootAlignment {
    /// Subtract a named marker in each trajectory.
    Marker(String),
    /// Subtract the centroid of the landmarks present in both trajectories.
    Centroid,
}

/// Mean root-aligned Euclidean landmark distance in millimeters, and the
/// number of landmark samples it averages.
pub fn mpblpe(
    est: &MarkerTrajectory,
    gt: &MarkerTrajectory,
    landmarks: &[String],
    root: &RootAlignment,
) -> Result<(f64, usize)> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} estimated frames vs {} ground truth", est.len(), gt.len())));
    }
    let column = |traj: &MarkerTrajectory, name: &str, which: &str| {
        traj.marker_column(name)
            .ok_or_else(|| Error::DimensionMismatch(format!("{which} trajectory has no marker `{name}`")))
    };
    let cols: Vec<(usize, usize)> = landmarks
        .iter()
        .map(|n| Ok((column(est, n, "estimated")?, column(gt, n, "ground truth")?)))
        .collect::<Result<_>>()?;
    let root_cols = match root {
        RootAlignment::Marker(n) => Some((column(est, n, "estimated")?, column(gt, n, "ground truth")?)),
        RootAlignment::Centroid => None,
    };

    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..est.len() {
        let (fe, fg) = (&est.frames[t], &gt.frames[t]);
        let present: Vec<(Vector3<f64>, Vector3<f64>)> = cols
            .iter()
            .filter_map(|&(ce, cg)| Some((fe[ce]?, fg[cg]?)))
            .collect();
        if present.is_empty() {
            continue;
        }
        let (re, rg) = match root_cols {
            Some((ce, cg)) => match (fe[ce], fg[cg]) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            },
            None => {
                let k = present.len() as f64;
                (
                    present.iter().map(|p| p.0).sum::<Vector3<f64>>() / k,
                    present.iter().map(|p| p.1).sum::<Vector3<f64>>() / k,
                )
            }
        };
        for (e, g) in present {
            sum += ((e - re) - (g - rg)).norm();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("no landmark observed in both trajectories".into()));
    }
    Ok((1000.0 * sum / count as f64, count))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyScaleErrors {
    /// RMSE over all scale components, dimensionless.
    pub rmse_body: f64,
    /// MAE of the longest-axis scale converted to millimeters.
    pub mae_body_mm: f64,
}

pub fn body_scale_errors(
    est: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    model: &SkeletalModel,
) -> Result<BodyScaleErrors> {
    let n = model.bodies().len();
    if est.len() != n || gt.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "model has {n} bodies, got {} estimated and {} ground-truth scales",
            est.len(),
            gt.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("model has no bodies".into()));
    }
    let mut sq = 0.0;
    let mut abs_mm = 0.0;
    for ((e, g), body) in est.iter().zip(gt).zip(model.bodies()) {
        sq += (e - g).norm_squared();
        let axis = body.longest_axis;
        abs_mm += (e[axis] - g[axis]).abs() * body.reference_length * 1000.0;
    }
    Ok(BodyScaleErrors {
        rmse_body: (sq / (3 * n) as f64).sqrt(),
        mae_body_mm: abs_mm / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    /// Population standard deviation of the signed errors.
    pub sd: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::Empty("no overlapping samples".into()));
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / n;
        let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        Ok(ErrorStats {
            n: errors.len(),
            mae,
            rmse: mse.sqrt(),
            sd: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleErrors {
    /// Pooled over every frame and DOF sample, degrees.
    pub pooled: ErrorStats,
    /// Per DOF in ground-truth column order; `None` when a DOF has no overlap.
    pub per_dof: Vec<(String, Option<ErrorStats>)>,
}

/// Signed errors `est - gt` in degrees for each ground-truth DOF.
fn dof_errors(est: &AngleTrajectory, gt: &AngleTrajectory) -> Result<Vec<(String, Vec<f64>)>> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} estimated frames vs {} ground truth", est.len(), gt.len())));
    }
    gt.dof_names
        .iter()
        .enumerate()
        .map(|(qg, name)| {
            let qe = est
                .dof_column(name)
                .ok_or_else(|| Error::DimensionMismatch(format!("estimate has no dof `{name}`")))?;
            let errs = (0..gt.len())
                .filter_map(|t| Some((est.angles[t][qe]? - gt.angles[t][qg]?).to_degrees()))
                .collect();
            Ok((name.clone(), errs))
        })
        .collect()
}

pub fn angle_errors(est: &AngleTrajectory, gt: &AngleTrajectory) -> Result<AngleErrors> {
    let per = dof_errors(est, gt)?;
    let all: Vec<f64> = per.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    let pooled = ErrorStats::from_errors(&all)?;
    let per_dof = per
        .into_iter()
        .map(|(name, e)| (name, ErrorStats::from_errors(&e).ok()))
        .collect();
    Ok(AngleErrors { pooled, per_dof })
}

/// Mean absolute rate of change: `Σ |s_t - s_{t+1}| / Δt` over the
/// consecutive pairs where both samples are present, divided by their count.
pub fn mean_velocity(series: &[Option<f64>], dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("frame interval must be positive, got {dt}")));
    }
    if series.len() < 2 {
        return Err(Error::Empty("mean velocity needs at least 2 samples".into()));
    }
    let diffs: Vec<f64> = series
        .windows(2)
        .filter_map(|w| Some((w[1]? - w[0]?).abs() / dt))
        .collect();
    if diffs.is_empty() {
        return Err(Error::Empty("no consecutive samples present".into()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

fn mean_over_channels(channels: impl Iterator<Item = Vec<Option<f64>>>, dt: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for c in channels {
        match mean_velocity(&c, dt) {
            Ok(v) => {
                sum += v;
                n += 1;
            }
            Err(Error::Empty(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if n == 0 {
        return Err(Error::Empty("no channel has two consecutive samples".into()));
    }
    Ok(sum / n as f64)
}

/// Mean joint-angle velocity over all DOFs, degrees per second.
pub fn mv_angle(traj: &AngleTrajectory) -> Result<f64> {
    let deg = |q: usize| traj.series(q).into_iter().map(|v| v.map(f64::to_degrees)).collect();
    mean_over_channels((0..traj.dof_names.len()).map(deg), traj.frame_interval())
}

/// Mean landmark velocity over every coordinate of the named markers, mm/s.
pub fn mv_landmarks(traj: &MarkerTrajectory, landmarks: &[String]) -> Result<f64> {
    let cols: Vec<usize> = landmarks
        .iter()
        .map(|n| {
            traj.marker_column(n)
                .ok_or_else(|| Error::DimensionMismatch(format!("trajectory has no marker `{n}`")))
        })
        .collect::<Result<_>>()?;
    let channels = cols.into_iter().flat_map(|m| {
        (0..3).map(move |axis| traj.channel(m, axis).into_iter().map(|v| v.map(|x| 1000.0 * x)).collect())
    });
    mean_over_channels(channels, traj.frame_interval())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Grade {
    Weak,
    Moderate,
    Strong,
    Excellent,
}

impl Grade {
    /// Grade of a correlation coefficient, judged on its absolute value.
    pub fn of(rho: f64) -> Grade {
        let r = rho.abs();
        if r <= 0.35 {
            Grade::Weak
        } else if r <= 0.67 {
            Grade::Moderate
        } else if r <= 0.90 {
            Grade::Strong
        } else {
            Grade::Excellent
        }
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grade::Weak => "weak",
            Grade::Moderate => "moderate",
            Grade::Strong => "strong",
            Grade::Excellent => "excellent",
        })
    }
}

/// Pearson correlation over the samples present in both series.
pub fn pearson_rho(est: &[Option<f64>], gt: &[Option<f64>]) -> Result<(f64, Grade)> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} samples", est.len(), gt.len())));
    }
    let pairs: Vec<(f64, f64)> = est.iter().zip(gt).filter_map(|(a, b)| Some(((*a)?, (*b)?))).collect();
    if pairs.len() < 2 {
        return Err(Error::Empty("correlation needs at least 2 paired samples".into()));
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    // relative floor: a series that is constant up to rounding has no variance
    let floor = |s: f64, m: f64| s <= (n * 1e-13 * (1.0 + m.abs())).powi(2);
    if floor(saa, ma) || floor(sbb, mb) {
        return Err(Error::ZeroVariance);
    }
    let rho = (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0);
    Ok((rho, Grade::of(rho)))
}

/// Linear-interpolation quantile of sorted data, `p` in [0, 1].
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Median and interquartile range.
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.5)?, quantile(&v, 0.75)? - quantile(&v, 0.25)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofReport {
    pub dof: String,
    pub errors: Option<ErrorStats>,
    /// `None` when the correlation is undefined (constant series).
    pub rho: Option<(f64, Grade)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub angle: ErrorStats,
    pub mv_angle_deg_s: f64,
    pub mv_angle_gt_deg_s: f64,
    pub mpblpe_mm: Option<f64>,
    pub mpblpe_samples: Option<usize>,
    pub mv_bl_mm_s: Option<f64>,
    pub body: Option<BodyScaleErrors>,
    pub per_dof: Vec<DofReport>,
}

/// Marker trajectories to compare, with the landmark subset and root reference.
pub struct LandmarkInput<'a> {
    pub est: &'a MarkerTrajectory,
    pub gt: &'a MarkerTrajectory,
    pub landmarks: Vec<String>,
    pub root: RootAlignment,
}

/// Full metric suite for an estimate against ground truth. Body-scale errors
/// use the scale blocks of the two angle trajectories when `model` is given.
pub fn evaluate(
    est: &AngleTrajectory,
    gt: &AngleTrajectory,
    landmarks: Option<&LandmarkInput<'_>>,
    model: Option<&SkeletalModel>,
) -> Result<MetricsReport> {
    let errors = angle_errors(est, gt)?;
    let mut per_dof = Vec::with_capacity(errors.per_dof.len());
    for (qg, (name, stats)) in errors.per_dof.iter().enumerate() {
        let qe = est.dof_column(name).expect("checked by angle_errors");
        let rho = match pearson_rho(&est.series(qe), &gt.series(qg)) {
            Ok(r) => Some(r),
            Err(Error::ZeroVariance | Error::Empty(_)) => None,
            Err(e) => return Err(e),
        };
        per_dof.push(DofReport {
            dof: name.clone(),
            errors: *stats,
            rho,
        });
    }
    let (mpblpe_mm, mpblpe_samples, mv_bl_mm_s) = match landmarks {
        Some(l) => {
            let (v, n) = mpblpe(l.est, l.gt, &l.landmarks, &l.root)?;
            (Some(v), Some(n), Some(mv_landmarks(l.est, &l.landmarks)?))
        }
        None => (None, None, None),
    };
    let body = match model {
        Some(m) => Some(body_scale_errors(&est.model_scales(m)?, &gt.model_scales(m)?, m)?),
        None => None,
    };
    Ok(MetricsReport {
        angle: errors.pooled,
        mv_angle_deg_s: mv_angle(est)?,
        mv_angle_gt_deg_s: mv_angle(gt)?,
        mpblpe_mm,
        mpblpe_samples,
        mv_bl_mm_s,
        body,
        per_dof,
    })
}

impl MetricsReport {
    /// `key: value` lines; absent metrics are written as `n/a`.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
        let undefined = self.per_dof.iter().filter(|d| d.rho.is_none()).count();
        let mut lines = vec![
            format!("samples_angle: {}", self.angle.n),
            format!("mae_angle_deg: {}", self.angle.mae),
            format!("rmse_angle_deg: {}", self.angle.rmse),
            format!("sd_angle_deg: {}", self.angle.sd),
            format!("mv_angle_deg_s: {}", self.mv_angle_deg_s),
            format!("mv_angle_gt_deg_s: {}", self.mv_angle_gt_deg_s),
            format!("mpblpe_mm: {}", opt(self.mpblpe_mm)),
            format!("samples_mpblpe: {}", self.mpblpe_samples.map_or_else(|| "n/a".into(), |n| n.to_string())),
            format!("mv_bl_mm_s: {}", opt(self.mv_bl_mm_s)),
            format!("mae_body_mm: {}", opt(self.body.map(|b| b.mae_body_mm))),
            format!("rmse_body: {}", opt(self.body.map(|b| b.rmse_body))),
        ];
        let rhos: Vec<f64> = self.per_dof.iter().filter_map(|d| d.rho.map(|r| r.0)).collect();
        match median_iqr(&rhos) {
            Some((med, iqr)) => {
                lines.push(format!("rho_median: {med}"));
                lines.push(format!("rho_iqr: {iqr}"));
                lines.push(format!("rho_median_grade: {}", Grade::of(med)));
            }
            None => {
                lines.push("rho_median: undefined".into());
                lines.push("rho_iqr: undefined".into());
                lines.push("rho_median_grade: undefined".into());
            }
        }
        lines.push(format!("rho_undefined_dofs: {undefined}"));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// Per-DOF rows followed by `median` and `iqr` aggregate rows.
    pub fn per_dof_csv(&self) -> String {
        let mut out = String::from("dof,n,mae_deg,rmse_deg,sd_deg,rho,grade\n");
        let num = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for d in &self.per_dof {
            let e = d.errors;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                d.dof,
                e.map_or(0, |e| e.n),
                num(e.map(|e| e.mae)),
                num(e.map(|e| e.rmse)),
                num(e.map(|e| e.sd)),
                d.rho.map_or_else(|| "undefined".into(), |r| r.0.to_string()),
                d.rho.map_or_else(String::new, |r| r.1.to_string()),
            ));
        }
        let column = |f: &dyn Fn(&DofReport) -> Option<f64>| -> Vec<f64> { self.per_dof.iter().filter_map(f).collect() };
        let cols = [
            column(&|d| d.errors.map(|e| e.mae)),
            column(&|d| d.errors.map(|e| e.rmse)),
            column(&|d| d.errors.map(|e| e.sd)),
            column(&|d| d.rho.map(|r| r.0)),
        ];
        let stats: Vec<Option<(f64, f64)>> = cols.iter().map(|c| median_iqr(c)).collect();
        let n_rows = self.per_dof.iter().filter(|d| d.errors.is_some()).count();
        for (label, pick) in [("median", 0usize), ("iqr", 1)] {
            let cells: Vec<String> = stats
                .iter()
                .map(|s| num(s.map(|(m, i)| if pick == 0 { m } else { i })))
                .collect();
            out.push_str(&format!("{label},{n_rows},{},\n", cells.join(",")));
        }
        out
    }
}
