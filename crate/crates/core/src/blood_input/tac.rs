use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::FrameSchedule;

/// Concentration per frame, keyed by frame midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeActivityCurve {
    t_mid: Vec<f64>,
    value: Vec<f64>,
    duration: Vec<f64>,
}

const CSV_HEADER: &str = "t_mid_min,value,duration_min";

impl TimeActivityCurve {
    pub fn new(t_mid: Vec<f64>, value: Vec<f64>, duration: Vec<f64>) -> Result<Self> {
        if t_mid.len() != value.len() || t_mid.len() != duration.len() {
            return Err(Error::VolumeInvalid(format!(
                "TAC columns differ in length: {} / {} / {}",
                t_mid.len(),
                value.len(),
                duration.len()
            )));
        }
        if t_mid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::VolumeInvalid("TAC midpoints must be strictly increasing".into()));
        }
        if value.iter().chain(&t_mid).any(|v| !v.is_finite()) {
            return Err(Error::VolumeInvalid("TAC contains non-finite values".into()));
        }
        if duration.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::VolumeInvalid("TAC frame durations must be positive".into()));
        }
        Ok(Self { t_mid, value, duration })
    }

    pub fn from_schedule(schedule: &FrameSchedule, value: Vec<f64>) -> Result<Self> {
        Self::new(schedule.mids(), value, schedule.duration().to_vec())
    }

    pub fn t_mid(&self) -> &[f64] {
        &self.t_mid
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn duration(&self) -> &[f64] {
        &self.duration
    }

    pub fn len(&self) -> usize {
        self.t_mid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_mid.is_empty()
    }

    /// Frame start times.
    pub fn starts(&self) -> Vec<f64> {
        self.t_mid.iter().zip(&self.duration).map(|(m, d)| m - 0.5 * d).collect()
    }

    pub fn with_values(&self, value: Vec<f64>) -> Result<Self> {
        Self::new(self.t_mid.clone(), value, self.duration.clone())
    }

    pub fn render_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for i in 0..self.len() {
            let _ = writeln!(s, "{},{},{}", self.t_mid[i], self.value[i], self.duration[i]);
        }
        s
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            Some((n, _)) => {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("expected header '{CSV_HEADER}'"),
                })
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "empty TAC file".into(),
                })
            }
        }
        let (mut t, mut v, mut d) = (vec![], vec![], vec![]);
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = |msg: String| Error::Parse { line: n + 1, msg };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            t.push(num(fields[0])?);
            v.push(num(fields[1])?);
            d.push(num(fields[2])?);
        }
        Self::new(t, v, d)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse_csv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let tac = TimeActivityCurve::new(vec![0.5, 1.0 / 3.0 + 1.0], vec![1e-300, -2.5], vec![1.0, 0.1]).unwrap();
        assert_eq!(TimeActivityCurve::parse_csv(&tac.render_csv()).unwrap(), tac);
    }

    #[test]
    fn rejects_bad_curves() {
        assert!(TimeActivityCurve::new(vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(TimeActivityCurve::new(vec![1.0], vec![f64::NAN], vec![1.0]).is_err());
        assert!(TimeActivityCurve::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(TimeActivityCurve::new(vec![1.0], vec![0.0, 1.0], vec![1.0]).is_err());
        let e = TimeActivityCurve::parse_csv("t_mid_min,value,duration_min\n1,2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(TimeActivityCurve::parse_csv("t,v,d\n").is_err());
    }

    #[test]
    fn schedule_midpoints() {
        let s = FrameSchedule::new(vec![0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let tac = TimeActivityCurve::from_schedule(&s, vec![3.0, 4.0]).unwrap();
        assert_eq!(tac.t_mid(), &[0.5, 2.0]);
        assert_eq!(tac.starts(), vec![0.0, 1.0]);
    }
}
