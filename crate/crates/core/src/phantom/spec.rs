use std::fmt;
use std::str::FromStr;

use super::{InputModel, KineticParams};
use crate::error::{Error, Result};
use crate::volume::{FrameSchedule, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Background,
    Gray,
    White,
    TumorTp,
    TumorTn,
    Artery,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionLabel::Background => "background",
            RegionLabel::Gray => "gray",
            RegionLabel::White => "white",
            RegionLabel::TumorTp => "tumor-TP",
            RegionLabel::TumorTn => "tumor-TN",
            RegionLabel::Artery => "artery",
        })
    }
}

impl FromStr for RegionLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "background" => RegionLabel::Background,
            "gray" => RegionLabel::Gray,
            "white" => RegionLabel::White,
            "tumor-TP" => RegionLabel::TumorTp,
            "tumor-TN" => RegionLabel::TumorTn,
            "artery" => RegionLabel::Artery,
            _ => return Err(format!("unknown region label `{s}`")),
        })
    }
}

/// Ellipsoidal region with uniform kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: RegionLabel,
    /// mm, LPS
    pub center: [f64; 3],
    /// mm
    pub radii: [f64; 3],
    pub kinetics: KineticParams,
    /// Synthetic T1 intensity.
    pub mr_intensity: f64,
    /// Artery only: fraction of the blood signal that survives partial
    /// volume loss.
    pub recovery: f64,
    /// Artery only: fraction of the surrounding tissue signal spilling in.
    pub spillover: f64,
}

impl Region {
    pub fn new(label: RegionLabel, center: [f64; 3], radii: [f64; 3], kinetics: KineticParams, mr_intensity: f64) -> Self {
        Self {
            label,
            center,
            radii,
            kinetics,
            mr_intensity,
            recovery: 1.0,
            spillover: 0.0,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Everything needed to synthesize a dynamic PET study and matching MR.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub geometry: Geometry,
    /// Painted in order; later regions override earlier ones.
    pub regions: Vec<Region>,
    pub input: InputModel,
    pub schedule: FrameSchedule,
    pub noise_seed: u64,
    /// PET noise: per-frame standard deviation is
    /// `noise_scale * sqrt(mean / duration_min)`.
    pub noise_scale: f64,
    /// MR noise standard deviation (intensity units).
    pub mr_noise: f64,
    /// MBq, for the study metadata.
    pub injected_dose: f64,
    /// kg
    pub body_weight: f64,
}

impl PhantomSpec {
    /// The desk-scale brain phantom: 48^3 voxels of 2 mm, the standard
    /// 39-frame hour, two tumors, and one arterial tube.
    pub fn desk(seed: u64) -> Self {
        let kp = |k1, k2, k3, vb| KineticParams::new(k1, k2, k3, vb).expect("static kinetics are valid");
        let geometry = Geometry::centered([48; 3], [2.0; 3], [0.0; 3]).expect("static geometry");
        let regions = vec![
            Region::new(RegionLabel::Background, [0.0; 3], [44.0, 44.0, 29.0], kp(0.05, 0.15, 0.0375, 0.04), 40.0),
            Region::new(RegionLabel::White, [0.0, -4.0, 0.0], [26.0, 24.0, 16.0], kp(0.03, 0.1, 0.02, 0.03), 70.0),
            Region::new(RegionLabel::TumorTp, [-18.0, -14.0, 6.0], [8.0; 3], kp(0.1, 0.15, 0.05, 0.0), 110.0),
            Region::new(RegionLabel::TumorTn, [18.0, 10.0, -4.0], [7.0; 3], kp(0.06, 0.2, 0.02, 0.0), 95.0),
            Region::new(RegionLabel::Artery, [22.0, 26.0, 0.0], [2.5, 2.5, 16.0], kp(0.0, 0.0, 0.0, 0.0), 20.0),
        ];
        Self {
            geometry,
            regions,
            input: InputModel::standard_fdg(),
            schedule: FrameSchedule::standard_60min(),
            noise_seed: seed,
            noise_scale: 0.0,
            mr_noise: 0.0,
            injected_dose: 370.0,
            body_weight: 70.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.input.validate().map_err(|e| Error::SpecInvalid(e.to_string()))?;
        if !(self.noise_scale >= 0.0) || !(self.mr_noise >= 0.0) {
            return Err(Error::SpecInvalid("noise levels must be >= 0".into()));
        }
        if !(self.injected_dose > 0.0) || !(self.body_weight > 0.0) {
            return Err(Error::SpecInvalid("dose and weight must be > 0".into()));
        }
        let arteries = self.regions.iter().filter(|r| r.label == RegionLabel::Artery).count();
        if arteries > 1 {
            return Err(Error::SpecInvalid(format!("{arteries} artery regions; at most one allowed")));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.kinetics.validate()?;
            if r.radii.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::SpecInvalid(format!("region {i}: radii must be > 0")));
            }
            if !(r.recovery >= 0.0) || !(r.spillover >= 0.0) {
                return Err(Error::SpecInvalid(format!("region {i}: recovery/spillover must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn region(&self, label: RegionLabel) -> Option<&Region> {
        self.regions.iter().find(|r| r.label == label)
    }

    pub fn region_mut(&mut self, label: RegionLabel) -> Option<&mut Region> {
        self.regions.iter_mut().find(|r| r.label == label)
    }

    /// Serialize as `key=value` lines followed by a `[regions]` table.
    pub fn render(&self) -> Result<String> {
        let g = &self.geometry;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let d = g.dims();
        let mut s = String::new();
        s.push_str(&format!("dims={},{},{}\n", d[0], d[1], d[2]));
        s.push_str(&format!("voxel_size={}\n", list(&g.voxel_size())));
        s.push_str(&format!("center={}\n", list(&g.center())));
        s.push_str(&format!("frames={}\n", render_blocks(&self.schedule)?));
        s.push_str(&format!("input={}\n", list(&self.input.params())));
        s.push_str(&format!("noise_seed={}\n", self.noise_seed));
        s.push_str(&format!("noise_scale={}\n", self.noise_scale));
        s.push_str(&format!("mr_noise={}\n", self.mr_noise));
        s.push_str(&format!("injected_dose_mbq={}\n", self.injected_dose));
        s.push_str(&format!("body_weight_kg={}\n", self.body_weight));
        s.push_str("[regions]\n");
        s.push_str("label,cx,cy,cz,rx,ry,rz,K1,k2,k3,vb,mr,recovery,spillover\n");
        for r in &self.regions {
            let k = &r.kinetics;
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.label,
                list(&r.center),
                list(&r.radii),
                list(&[k.k1, k.k2, k.k3, k.vb]),
                r.mr_intensity,
                r.recovery,
                r.spillover
            ));
        }
        Ok(s)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = PhantomSpec::desk(0);
        let mut dims = spec.geometry.dims();
        let mut voxel_size = spec.geometry.voxel_size();
        let mut center = spec.geometry.center();
        let mut regions = None;
        let mut lines = text.lines().enumerate();
        while let Some((n, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse { line: n + 1, msg };
            if line == "[regions]" {
                regions = Some(parse_regions(&mut lines)?);
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let floats = |want: usize| -> Result<Vec<f64>> {
                let out = v
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| err(format!("{k}: {e}")))?;
                if out.len() != want {
                    return Err(err(format!("{k}: expected {want} values, found {}", out.len())));
                }
                Ok(out)
            };
            match k {
                "dims" => {
                    let f = floats(3)?;
                    dims = [f[0] as usize, f[1] as usize, f[2] as usize];
                }
                "voxel_size" => voxel_size = floats(3)?.try_into().unwrap(),
                "center" => center = floats(3)?.try_into().unwrap(),
                "frames" => spec.schedule = parse_blocks(v).map_err(err)?,
                "input" => spec.input = InputModel::from_params(floats(6)?.try_into().unwrap()),
                "noise_seed" => spec.noise_seed = v.parse().map_err(|e| err(format!("{k}: {e}")))?,
                "noise_scale" => spec.noise_scale = floats(1)?[0],
                "mr_noise" => spec.mr_noise = floats(1)?[0],
                "injected_dose_mbq" => spec.injected_dose = floats(1)?[0],
                "body_weight_kg" => spec.body_weight = floats(1)?[0],
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        spec.geometry = Geometry::centered(dims, voxel_size, center)?;
        if let Some(r) = regions {
            spec.regions = r;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_regions<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<Vec<Region>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (n, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: n + 1, msg };
        if !saw_header {
            if !line.starts_with("label,") {
                return Err(err("region table needs a header row".into()));
            }
            saw_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 12 && f.len() != 14 {
            return Err(err(format!("expected 12 or 14 fields, found {}", f.len())));
        }
        let label: RegionLabel = f[0].parse().map_err(err)?;
        let nums = f[1..]
            .iter()
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(e.to_string()))?;
        let kinetics = KineticParams::new(nums[6], nums[7], nums[8], nums[9]).map_err(|e| err(e.to_string()))?;
        let mut r = Region::new(label, [nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]], kinetics, nums[10]);
        if nums.len() == 13 {
            r.recovery = nums[11];
            r.spillover = nums[12];
        }
        out.push(r);
    }
    Ok(out)
}

/// Parse `12x5s,8x30s,10x1m` into a contiguous schedule starting at 0.
pub fn parse_blocks(text: &str) -> std::result::Result<FrameSchedule, String> {
    let mut blocks = Vec::new();
    for b in text.split(',') {
        let b = b.trim();
        let (n, d) = b.split_once('x').ok_or_else(|| format!("frame block `{b}` is not COUNTxDURATION"))?;
        let n: usize = n.parse().map_err(|e| format!("`{b}`: {e}"))?;
        let minutes = if let Some(s) = d.strip_suffix('s') {
            s.parse::<f64>().map_err(|e| format!("`{b}`: {e}"))? / 60.0
        } else if let Some(m) = d.strip_suffix('m') {
            m.parse::<f64>().map_err(|e| format!("`{b}`: {e}"))?
        } else {
            return Err(format!("frame block `{b}` needs an s or m unit"));
        };
        blocks.push((n, minutes));
    }
    FrameSchedule::contiguous(&blocks).map_err(|e| e.to_string())
}

fn render_blocks(s: &FrameSchedule) -> Result<String> {
    let mut t = 0.0;
    let mut blocks: Vec<(usize, f64)> = Vec::new();
    for i in 0..s.len() {
        if (s.start()[i] - t).abs() > 1e-9 {
            return Err(Error::SpecInvalid("only contiguous schedules starting at 0 can be written".into()));
        }
        let d = s.duration()[i];
        match blocks.last_mut() {
            Some((n, bd)) if *bd == d => *n += 1,
            _ => blocks.push((1, d)),
        }
        t += d;
    }
    Ok(blocks
        .iter()
        .map(|&(n, d)| {
            let secs = d * 60.0;
            if (secs - secs.round()).abs() < 1e-9 {
                format!("{n}x{}s", secs.round())
            } else {
                format!("{n}x{d}m")
            }
        })
        .collect::<Vec<_>>()
        .join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_spec_round_trips_through_text() {
        let mut spec = PhantomSpec::desk(42);
        spec.noise_scale = 3.5;
        spec.region_mut(RegionLabel::Artery).unwrap().recovery = 0.5;
        let text = spec.render().unwrap();
        let back = PhantomSpec::parse(&text).unwrap();
        assert_eq!(back.regions, spec.regions);
        assert_eq!(back.noise_seed, 42);
        assert_eq!(back.noise_scale, 3.5);
        assert!(back.geometry.approx_eq(&spec.geometry, 1e-12));
        assert_eq!(back.schedule.len(), 39);
        assert_eq!(back.input, spec.input);
    }

    #[test]
    fn blocks_syntax() {
        let s = parse_blocks("12x5s,8x30s,10x60s,9x300s").unwrap();
        assert_eq!(s.len(), 39);
        assert!((s.total_end() - 60.0).abs() < 1e-9);
        assert_eq!(parse_blocks("2x1.5m").unwrap().total_end(), 3.0);
        assert!(parse_blocks("3x10").is_err());
        assert_eq!(render_blocks(&s).unwrap(), "12x5s,8x30s,10x60s,9x300s");
    }

    #[test]
    fn unknown_key_rejected() {
        let e = PhantomSpec::parse("dims=4,4,4\nbogus=1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn two_arteries_rejected() {
        let mut spec = PhantomSpec::desk(0);
        let a = spec.region(RegionLabel::Artery).unwrap().clone();
        spec.regions.push(a);
        assert!(spec.validate().is_err());
    }
}
