//! Gap filling and temporal smoothing of trajectories.

use crate::error::{Error, Result};
use crate::trajectory::{AngleTrajectory, MarkerTrajectory};

pub const DEFAULT_MAX_GAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmoothMethod {
    /// Centered window of odd length. Near the ends the series is extended by
    /// mirroring (`x[-1] = x[0]`, `x[-2] = x[1]`, ...), so a fully present
    /// series keeps its mean.
    MovingAverage { window: usize },
    /// `s_t = α x_t + (1 - α) s_{t-1}`, starting from the first present sample.
    Exponential { alpha: f64 },
}

impl SmoothMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SmoothMethod::MovingAverage { window } if window == 0 || window % 2 == 0 => Err(
                Error::InvalidParameter(format!("moving-average window must be odd and >= 1, got {window}")),
            ),
            SmoothMethod::Exponential { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::InvalidParameter(format!("exponential alpha must be in (0, 1], got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

/// Fills interior runs of at most `max_gap` missing samples by linear
/// interpolation. Leading, trailing and longer runs stay missing.
pub fn interpolate_series(series: &[Option<f64>], max_gap: usize) -> Vec<Option<f64>> {
    let mut out = series.to_vec();
    let mut last: Option<usize> = None;
    for (i, v) in series.iter().enumerate() {
        let Some(b) = *v else { continue };
        if let Some(l) = last {
            let gap = i - l - 1;
            if gap > 0 && gap <= max_gap {
                let a = series[l].unwrap();
                for (k, slot) in out[l + 1..i].iter_mut().enumerate() {
                    let f = (k + 1) as f64 / (i - l) as f64;
                    *slot = Some(a + f * (b - a));
                }
            }
        }
        last = Some(i);
    }
    out
}

/// Gap filling per marker. A marker sample is filled only when all three
/// coordinates are, which holds because coordinates go missing together.
pub fn interpolate_gaps(traj: &MarkerTrajectory, max_gap: usize) -> MarkerTrajectory {
    let mut out = traj.clone();
    for m in 0..traj.marker_names.len() {
        let filled: Vec<Vec<Option<f64>>> = (0..3)
            .map(|axis| interpolate_series(&traj.channel(m, axis), max_gap))
            .collect();
        for (t, frame) in out.frames.iter_mut().enumerate() {
            if let (Some(x), Some(y), Some(z)) = (filled[0][t], filled[1][t], filled[2][t]) {
                frame[m] = Some(nalgebra::Vector3::new(x, y, z));
            }
        }
    }
    out
}

pub fn smooth_series(series: &[Option<f64>], method: SmoothMethod) -> Result<Vec<Option<f64>>> {
    method.validate()?;
    let n = series.len();
    Ok(match method {
        SmoothMethod::MovingAverage { window } => {
            let half = (window / 2) as isize;
            let reflect = |i: isize| -> usize {
                // half-sample symmetric extension, period 2n
                let period = 2 * n as isize;
                let j = i.rem_euclid(period);
                (if j < n as isize { j } else { period - 1 - j }) as usize
            };
            (0..n)
                .map(|t| {
                    series[t]?;
                    let (mut sum, mut k) = (0.0, 0usize);
                    for d in -half..=half {
                        if let Some(v) = series[reflect(t as isize + d)] {
                            sum += v;
                            k += 1;
                        }
                    }
                    Some(sum / k as f64)
                })
                .collect()
        }
        SmoothMethod::Exponential { alpha } => {
            let mut state: Option<f64> = None;
            series
                .iter()
                .map(|v| {
                    let x = (*v)?;
                    let s = match state {
                        Some(s) => alpha * x + (1.0 - alpha) * s,
                        None => x,
                    };
                    state = Some(s);
                    Some(s)
                })
                .collect()
        }
    })
}

pub fn smooth_markers(traj: &MarkerTrajectory, method: SmoothMethod) -> Result<MarkerTrajectory> {
    let mut out = traj.clone();
    for m in 0..traj.marker_names.len() {
        let axes: Vec<Vec<Option<f64>>> = (0..3)
            .map(|axis| smooth_series(&traj.channel(m, axis), method))
            .collect::<Result<_>>()?;
        for (t, frame) in out.frames.iter_mut().enumerate() {
            if let Some(p) = frame[m].as_mut() {
                for axis in 0..3 {
                    p[axis] = axes[axis][t].expect("present samples stay present");
                }
            }
        }
    }
    Ok(out)
}

/// Smooths every DOF series. The pelvis rotation is left unchanged.
pub fn smooth_angles(traj: &AngleTrajectory, method: SmoothMethod) -> Result<AngleTrajectory> {
    let mut out = traj.clone();
    for q in 0..traj.dof_names.len() {
        let s = smooth_series(&traj.series(q), method)?;
        for (frame, v) in out.angles.iter_mut().zip(s) {
            frame[q] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn fills_short_interior_gap() {
        let mut t = MarkerTrajectory::new(30.0, vec!["M".into()]);
        t.push(vec![Some(Vector3::zeros())]);
        t.push(vec![None]);
        t.push(vec![None]);
        t.push(vec![Some(Vector3::new(0.3, 0.0, 0.0))]);
        let f = interpolate_gaps(&t, 10);
        assert!((f.frames[1][0].unwrap() - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-15);
        assert!((f.frames[2][0].unwrap() - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
        assert_eq!(f.frames[0], t.frames[0]);
        assert_eq!(f.frames[3], t.frames[3]);
    }

    #[test]
    fn long_and_boundary_gaps_untouched() {
        let s = [None, Some(1.0), None, None, None, Some(4.0), None];
        assert_eq!(interpolate_series(&s, 2), s.to_vec());
        let filled = interpolate_series(&s, 3);
        assert_eq!(filled[0], None);
        assert_eq!(filled[6], None);
        assert_eq!(filled[3], Some(2.5));
        let full = [Some(1.0), Some(2.0)];
        assert_eq!(interpolate_series(&full, 10), full.to_vec());
    }

    #[test]
    fn identity_settings() {
        let s: Vec<_> = (0..7).map(|i| Some((i as f64).sin())).collect();
        assert_eq!(smooth_series(&s, SmoothMethod::MovingAverage { window: 1 }).unwrap(), s);
        assert_eq!(smooth_series(&s, SmoothMethod::Exponential { alpha: 1.0 }).unwrap(), s);
    }

    #[test]
    fn constants_unchanged() {
        let s = vec![Some(2.5); 9];
        for m in [SmoothMethod::MovingAverage { window: 5 }, SmoothMethod::Exponential { alpha: 0.3 }] {
            assert_eq!(smooth_series(&s, m).unwrap(), s);
        }
    }

    #[test]
    fn moving_average_mean_and_missing() {
        let s: Vec<_> = (0..11).map(|i| Some((i * i) as f64 * 0.1)).collect();
        let out = smooth_series(&s, SmoothMethod::MovingAverage { window: 5 }).unwrap();
        let mean = |v: &[Option<f64>]| v.iter().map(|x| x.unwrap()).sum::<f64>() / v.len() as f64;
        assert!((mean(&s) - mean(&out)).abs() < 1e-12);

        let gappy = vec![Some(1.0), None, Some(3.0)];
        let out = smooth_series(&gappy, SmoothMethod::MovingAverage { window: 3 }).unwrap();
        assert_eq!(out[1], None);
        assert_eq!(out[2], Some(3.0));
    }

    #[test]
    fn invalid_parameters() {
        let s = vec![Some(1.0)];
        assert!(smooth_series(&s, SmoothMethod::MovingAverage { window: 4 }).is_err());
        assert!(smooth_series(&s, SmoothMethod::MovingAverage { window: 0 }).is_err());
        assert!(smooth_series(&s, SmoothMethod::Exponential { alpha: 0.0 }).is_err());
        assert!(smooth_series(&s, SmoothMethod::Exponential { alpha: 1.5 }).is_err());
    }
}
