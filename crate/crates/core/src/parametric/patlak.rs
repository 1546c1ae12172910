use rayon::prelude::*;

use super::BloodInputCurve;
use crate::blood_input::TimeActivityCurve;
use crate::error::{Error, Result};
use crate::volume::{DynamicVolume, Mask, Unit, Volume3D};

/// Default onset of the linear phase, minutes.
pub const DEFAULT_T_STAR: f64 = 20.0;

/// Frames whose input falls below this fraction of its peak are dropped.
const VANISHING: f64 = 1e-9;

/// Patlak coordinates of the retained frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PatlakPoints {
    /// Index of each retained frame in the source curve.
    pub frames: Vec<usize>,
    pub t: Vec<f64>,
    /// `integral_0^t Cp / Cp(t)` (minutes)
    pub x: Vec<f64>,
    /// `C(t) / Cp(t)`
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatlakFit {
    /// Slope, 1/min.
    pub ki: f64,
    /// Intercept.
    pub v: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Retained frames with their shared x coordinate and input value.
struct Design {
    frames: Vec<usize>,
    t: Vec<f64>,
    x: Vec<f64>,
    cp: Vec<f64>,
}

fn design(t_mid: &[f64], input: &BloodInputCurve) -> Result<Design> {
    let cp: Vec<f64> = t_mid.iter().map(|&t| input.value(t)).collect();
    let peak = cp.iter().cloned().fold(0.0, f64::max);
    let mut d = Design {
        frames: vec![],
        t: vec![],
        x: vec![],
        cp: vec![],
    };
    for (i, (&t, &c)) in t_mid.iter().zip(&cp).enumerate() {
        if c > 0.0 && c >= VANISHING * peak {
            d.frames.push(i);
            d.t.push(t);
            d.x.push(input.integral(t) / c);
            d.cp.push(c);
        }
    }
    if d.frames.is_empty() {
        return Err(Error::InputVanishes);
    }
    Ok(d)
}

impl Design {
    /// Keep only points at or after `t_star`.
    fn late(self, t_star: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.t.len()).filter(|&i| self.t[i] >= t_star).collect();
        if keep.len() < 3 {
            return Err(Error::TooFewLateFrames {
                found: keep.len(),
                t_star,
            });
        }
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            frames: keep.iter().map(|&i| self.frames[i]).collect(),
            t: pick(&self.t),
            x: pick(&self.x),
            cp: pick(&self.cp),
        })
    }
}

pub fn patlak_transform(tac: &TimeActivityCurve, input: &BloodInputCurve) -> Result<PatlakPoints> {
    let d = design(tac.t_mid(), input)?;
    let y = d.frames.iter().zip(&d.cp).map(|(&f, &c)| tac.value()[f] / c).collect();
    Ok(PatlakPoints {
        frames: d.frames,
        t: d.t,
        x: d.x,
        y,
    })
}

/// Ordinary least squares; `None` when `x` has no spread.
fn ols(x: &[f64], y: &[f64]) -> Option<PatlakFit> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let ki = sxy / sxx;
    let v = my - ki * mx;
    let sse: f64 = x.iter().zip(y).map(|(&a, &b)| (b - v - ki * a).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 0.0 };
    let fit = PatlakFit {
        ki,
        v,
        r2,
        n_points: x.len(),
    };
    (ki.is_finite() && v.is_finite()).then_some(fit)
}

/// Patlak slope and intercept from the points with `t_mid >= t_star`.
///
/// A fit with no spread in x gives `Ki = V = r2 = 0`; a flat curve has
/// `r2 = 0` by convention.
pub fn patlak_fit(tac: &TimeActivityCurve, input: &BloodInputCurve, t_star: f64) -> Result<PatlakFit> {
    let d = design(tac.t_mid(), input)?.late(t_star)?;
    let y: Vec<f64> = d.frames.iter().zip(&d.cp).map(|(&f, &c)| tac.value()[f] / c).collect();
    Ok(ols(&d.x, &y).unwrap_or(PatlakFit {
        ki: 0.0,
        v: 0.0,
        r2: 0.0,
        n_points: y.len(),
    }))
}

/// Voxel-wise Patlak maps.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricMap {
    /// 1/min
    pub ki: Volume3D,
    pub v: Volume3D,
    pub r2: Volume3D,
    /// Voxels with a valid fit.
    pub mask: Mask,
}

/// [`patlak_fit`] at every voxel of `mask` (all voxels when `None`), on a
/// pool of `workers` threads (0 = rayon's default).
///
/// Voxels are independent, so the maps are bit-identical for any worker
/// count. Voxels outside the mask, and voxels whose fit is degenerate, are 0
/// and absent from the output mask.
pub fn patlak_map(
    dynamic: &DynamicVolume,
    input: &BloodInputCurve,
    t_star: f64,
    mask: Option<&Mask>,
    workers: usize,
) -> Result<ParametricMap> {
    let g = dynamic.geometry();
    if let Some(m) = mask {
        g.ensure_same(m.geometry(), "Patlak mask")?;
    }
    let d = design(&dynamic.schedule().mids(), input)?.late(t_star)?;
    let frames: Vec<&[f64]> = d.frames.iter().map(|&f| dynamic.frame(f).data()).collect();
    let fit_voxel = |idx: usize| -> Option<PatlakFit> {
        if mask.is_some_and(|m| !m.data()[idx]) {
            return None;
        }
        let y: Vec<f64> = frames.iter().zip(&d.cp).map(|(f, &c)| f[idx] / c).collect();
        ols(&d.x, &y)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    let fits: Vec<Option<PatlakFit>> = pool.install(|| (0..g.len()).into_par_iter().map(fit_voxel).collect());

    let field = |f: fn(&PatlakFit) -> f64| fits.iter().map(|p| p.as_ref().map_or(0.0, f)).collect::<Vec<_>>();
    Ok(ParametricMap {
        ki: Volume3D::new(g.clone(), field(|p| p.ki), Unit::PerMinute)?,
        v: Volume3D::new(g.clone(), field(|p| p.v), Unit::Unitless)?,
        r2: Volume3D::new(g.clone(), field(|p| p.r2), Unit::Unitless)?,
        mask: Mask::new(g.clone(), fits.iter().map(Option::is_some).collect())?,
    })
}
