use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::FrameSchedule;

const SCHEDULE_HEADER: &str = "frame_start_min,frame_duration_min";

/// Render a schedule as the `.sched.csv` table. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn render_schedule(s: &FrameSchedule) -> String {
    let mut out = String::from(SCHEDULE_HEADER);
    out.push('\n');
    for (start, dur) in s.start().iter().zip(s.duration()) {
        out.push_str(&format!("{start},{dur}\n"));
    }
    out
}

pub fn parse_schedule(text: &str) -> Result<FrameSchedule> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == SCHEDULE_HEADER => {}
        Some((n, l)) => {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected header `{SCHEDULE_HEADER}`, found `{}`", l.trim()),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                msg: "empty schedule file".into(),
            })
        }
    }
    let mut start = Vec::new();
    let mut duration = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected 2 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: n + 1,
                msg: format!("`{s}`: {e}"),
            })
        };
        start.push(parse(fields[0])?);
        duration.push(parse(fields[1])?);
    }
    FrameSchedule::new(start, duration)
}

pub fn read_schedule_sidecar(path: impl AsRef<Path>) -> Result<FrameSchedule> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schedule(&text)
}

pub fn write_schedule_sidecar(s: &FrameSchedule, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_schedule(s)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Mr,
    PetDynamic,
    PetStatic,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Mr => "MR",
            Modality::PetDynamic => "PET-dynamic",
            Modality::PetStatic => "PET-static",
        })
    }
}

impl FromStr for Modality {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "MR" => Ok(Modality::Mr),
            "PET-dynamic" => Ok(Modality::PetDynamic),
            "PET-static" => Ok(Modality::PetStatic),
            _ => Err(format!("unknown modality `{s}`")),
        }
    }
}

/// Tumor outcome class: progression or treatment-related necrosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassLabel {
    Tp,
    Tn,
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassLabel::Tp => "TP",
            ClassLabel::Tn => "TN",
        })
    }
}

impl FromStr for ClassLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "TP" => Ok(ClassLabel::Tp),
            "TN" => Ok(ClassLabel::Tn),
            _ => Err(format!("unknown class label `{s}` (expected TP or TN)")),
        }
    }
}

/// Per-study acquisition facts stored next to an image as `key=value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyMeta {
    /// MBq
    pub injected_dose: f64,
    /// kg
    pub body_weight: f64,
    /// Scan start after injection, minutes.
    pub injection_time_offset: f64,
    pub modality: Modality,
    pub class_label: Option<ClassLabel>,
}

impl StudyMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.injected_dose > 0.0) {
            return Err(Error::NonpositiveDose(self.injected_dose));
        }
        if !(self.body_weight > 0.0) {
            return Err(Error::NonpositiveWeight(self.body_weight));
        }
        if !(self.injection_time_offset >= 0.0) {
            return Err(Error::SpecInvalid(format!(
                "injection offset must be >= 0, got {}",
                self.injection_time_offset
            )));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "injected_dose_mbq={}\nbody_weight_kg={}\ninjection_offset_min={}\nmodality={}\n",
            self.injected_dose, self.body_weight, self.injection_time_offset, self.modality
        );
        if let Some(l) = self.class_label {
            s.push_str(&format!("class_label={l}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dose = None;
        let mut weight = None;
        let mut offset = 0.0;
        let mut modality = None;
        let mut label = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: n + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || v.parse::<f64>().map_err(|e| err(format!("{k}: {e}")));
            match k {
                "injected_dose_mbq" => dose = Some(num()?),
                "body_weight_kg" => weight = Some(num()?),
                "injection_offset_min" => offset = num()?,
                "modality" => modality = Some(v.parse().map_err(err)?),
                "class_label" => label = Some(v.parse().map_err(err)?),
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        let missing = |k: &str| Error::Parse {
            line: 0,
            msg: format!("missing key `{k}`"),
        };
        let meta = StudyMeta {
            injected_dose: dose.ok_or_else(|| missing("injected_dose_mbq"))?,
            body_weight: weight.ok_or_else(|| missing("body_weight_kg"))?,
            injection_time_offset: offset,
            modality: modality.ok_or_else(|| missing("modality"))?,
            class_label: label,
        };
        meta.validate()?;
        Ok(meta)
    }
}

pub fn read_meta(path: impl AsRef<Path>) -> Result<StudyMeta> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    StudyMeta::parse(&text)
}

pub fn write_meta(meta: &StudyMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, meta.render()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frame_schedule() {
        let s = parse_schedule("frame_start_min,frame_duration_min\n0,0.5\n0.5,0.5\n").unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn overlap_rejected() {
        let e = parse_schedule("frame_start_min,frame_duration_min\n0,1\n0.5,1\n").unwrap_err();
        assert!(matches!(e, Error::ScheduleInvalid(_)));
    }

    #[test]
    fn parse_error_reports_line() {
        let e = parse_schedule("frame_start_min,frame_duration_min\n0,1\n1,x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_schedule("start,dur\n0,1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn standard_schedule_round_trips() {
        let s = FrameSchedule::standard_60min();
        let text = render_schedule(&s);
        let back = parse_schedule(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.len(), 39);
        let total: f64 = back.duration().iter().sum();
        assert!((total - 60.0).abs() < 1e-9);
    }

    #[test]
    fn meta_round_trip_and_validation() {
        let m = StudyMeta {
            injected_dose: 370.0,
            body_weight: 70.0,
            injection_time_offset: 0.0,
            modality: Modality::PetDynamic,
            class_label: Some(ClassLabel::Tn),
        };
        assert_eq!(StudyMeta::parse(&m.render()).unwrap(), m);
        assert!(StudyMeta::parse("injected_dose_mbq=0\nbody_weight_kg=70\nmodality=MR\n").is_err());
        assert!(StudyMeta::parse("injected_dose_mbq=1\nbody_weight_kg=70\nmodality=MR\ncolor=red\n").is_err());
    }
}
