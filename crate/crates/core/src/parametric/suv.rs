use crate::error::{Error, Result};
use crate::volume::{DynamicVolume, Unit, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuvConfig {
    /// MBq
    pub injected_dose: f64,
    /// kg
    pub body_weight: f64,
    /// Must be true: reconstructed frames are taken as decay-corrected and
    /// no decay term is applied.
    pub decay_corrected: bool,
}

impl SuvConfig {
    pub fn new(injected_dose: f64, body_weight: f64) -> Result<Self> {
        let c = Self {
            injected_dose,
            body_weight,
            decay_corrected: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.injected_dose > 0.0) || !self.injected_dose.is_finite() {
            return Err(Error::NonpositiveDose(self.injected_dose));
        }
        if !(self.body_weight > 0.0) || !self.body_weight.is_finite() {
            return Err(Error::NonpositiveWeight(self.body_weight));
        }
        if !self.decay_corrected {
            return Err(Error::ConfigInvalid("only decay-corrected input is supported".into()));
        }
        Ok(())
    }
}

/// `SUV = C[Bq/mL] * weight[g] / dose[Bq]`.
pub fn suv_map(static_pet: &Volume3D, cfg: &SuvConfig) -> Result<Volume3D> {
    cfg.validate()?;
    let factor = cfg.body_weight * 1000.0 / (cfg.injected_dose * 1e6);
    Ok(static_pet.map(|c| c * factor)?.with_unit(Unit::Unitless))
}

/// Default static window, minutes.
pub const DEFAULT_STATIC_WINDOW: (f64, f64) = (40.0, 60.0);

/// Duration-weighted mean of the frames whose midpoints lie in `window`.
pub fn static_frame_average(dynamic: &DynamicVolume, window: (f64, f64)) -> Result<Volume3D> {
    let s = dynamic.schedule();
    let picked: Vec<usize> = (0..s.len())
        .filter(|&i| (window.0..=window.1).contains(&s.mid(i)))
        .collect();
    if picked.is_empty() {
        return Err(Error::EmptyWindow(window.0, window.1));
    }
    let total: f64 = picked.iter().map(|&i| s.duration()[i]).sum();
    let g = dynamic.geometry();
    let data = (0..g.len())
        .map(|v| picked.iter().map(|&i| s.duration()[i] * dynamic.frame(i).data()[v]).sum::<f64>() / total)
        .collect();
    Volume3D::new(g.clone(), data, Unit::Activity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{FrameSchedule, Geometry};

    fn g() -> Geometry {
        Geometry::centered([3, 3, 3], [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn unit_suv_at_dose_over_weight() {
        let c = 1e6 * 370.0 / (1000.0 * 70.0);
        let v = Volume3D::filled(g(), c, Unit::Activity);
        let suv = suv_map(&v, &SuvConfig::new(370.0, 70.0).unwrap()).unwrap();
        assert!(suv.data().iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hand_value() {
        let v = Volume3D::filled(g(), 5000.0, Unit::Activity);
        let suv = suv_map(&v, &SuvConfig::new(370.0, 70.0).unwrap()).unwrap();
        assert!((suv.data()[0] - 5000.0 * 70000.0 / 3.7e8).abs() < 1e-12);
        assert!((suv.data()[0] - 0.9459).abs() < 1e-4);
        let zero = suv_map(&Volume3D::filled(g(), 0.0, Unit::Activity), &SuvConfig::new(1.0, 1.0).unwrap()).unwrap();
        assert!(zero.data().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(SuvConfig::new(0.0, 70.0), Err(Error::NonpositiveDose(_))));
        assert!(matches!(SuvConfig::new(370.0, -1.0), Err(Error::NonpositiveWeight(_))));
    }

    #[test]
    fn weighted_frame_mean() {
        let s = FrameSchedule::new(vec![40.0, 41.0], vec![1.0, 3.0]).unwrap();
        let frames = vec![Volume3D::filled(g(), 2.0, Unit::Activity), Volume3D::filled(g(), 4.0, Unit::Activity)];
        let d = DynamicVolume::new(g(), s, frames).unwrap();
        let avg = static_frame_average(&d, DEFAULT_STATIC_WINDOW).unwrap();
        assert!(avg.data().iter().all(|&v| (v - 3.5).abs() < 1e-12));
        assert!(matches!(static_frame_average(&d, (0.0, 10.0)), Err(Error::EmptyWindow(..))));
        let single = static_frame_average(&d, (40.0, 41.0)).unwrap();
        assert_eq!(single, *d.frame(0));
    }
}
