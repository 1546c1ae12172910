use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nifti::{read_volume, write_volume, ClassLabel};
use crate::registration::RigidTransform;
use crate::volume::{bounding_box, center_crop, center_crop_mask, connected_components, crop_window, Connectivity, Mask, Volume3D};

/// Crop applied to atlas-space tensors.
pub const DEFAULT_CROP: [usize; 3] = [170, 170, 120];

/// Co-registered modalities on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Modalities {
    pub mr: Volume3D,
    pub suv: Volume3D,
    pub ki: Volume3D,
}

impl Modalities {
    fn each(&self) -> [&Volume3D; 3] {
        [&self.mr, &self.suv, &self.ki]
    }
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    /// Subject-to-atlas transform.
    pub transform: RigidTransform,
    /// Atlas voxel index of the crop's first voxel.
    pub crop_offset: [usize; 3],
    pub crop_dims: [usize; 3],
}

impl Provenance {
    pub fn render(&self) -> String {
        let [a, b, c] = self.crop_offset;
        let [x, y, z] = self.crop_dims;
        format!("crop_offset {a} {b} {c}\ncrop_dims {x} {y} {z}\n{}", self.transform.render())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.splitn(3, '\n');
        let mut triple = |n: usize, key: &str| -> Result<[usize; 3]> {
            let bad = |msg: String| Error::Parse { line: n, msg };
            let line = lines.next().ok_or_else(|| bad(format!("missing '{key}'")))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(format!("expected '{key}'")));
            }
            let v: Vec<usize> = it.map(|t| t.parse().map_err(|e| bad(format!("{e}")))).collect::<Result<_>>()?;
            <[usize; 3]>::try_from(v).map_err(|_| bad("expected three integers".into()))
        };
        let crop_offset = triple(1, "crop_offset")?;
        let crop_dims = triple(2, "crop_dims")?;
        let rest = lines.next().unwrap_or("");
        Ok(Self {
            transform: RigidTransform::parse(rest)?,
            crop_offset,
            crop_dims,
        })
    }
}

/// One tumor's aligned tensors. Every modality and the mask share a grid,
/// and modalities are exactly 0 outside the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TumorSample {
    pub sample_id: String,
    pub subject_id: String,
    pub label: ClassLabel,
    pub modalities: Modalities,
    pub mask: Mask,
    pub provenance: Provenance,
    /// Set once an expert has confirmed the segmentation.
    pub verified: bool,
}

impl TumorSample {
    pub fn voxel_count(&self) -> usize {
        self.mask.count()
    }
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("identifier '{id}' must be non-empty [A-Za-z0-9._-]")))
    }
}

/// Mask and center-crop atlas-space modalities into samples.
///
/// Each 26-connected component of `mask` becomes its own sample, largest
/// first. A single component keeps `sample_id`; several get `-1`, `-2`, ...
/// appended.
pub fn extract_sample(
    modalities: &Modalities,
    mask: &Mask,
    crop: [usize; 3],
    sample_id: &str,
    subject_id: &str,
    label: ClassLabel,
    transform: RigidTransform,
) -> Result<Vec<TumorSample>> {
    check_id(sample_id)?;
    check_id(subject_id)?;
    let g = mask.geometry();
    for v in modalities.each() {
        g.ensure_same(v.geometry(), "modalities and mask must share the atlas grid")?;
    }
    let window = crop_window(g.dims(), crop)?;
    let comps = connected_components(mask, Connectivity::TwentySix);
    if comps.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut out = Vec::with_capacity(comps.len());
    for label_id in 1..=comps.len() as u32 {
        let part = comps.mask(label_id);
        let bbox = bounding_box(&part)?;
        if (0..3).any(|a| bbox[a].0 < window[a].0 || bbox[a].1 > window[a].1) {
            return Err(Error::MaskOutsideCrop { bbox, window });
        }
        let cut = |v: &Volume3D| center_crop(&v.masked(&part)?, crop);
        let id = if comps.len() == 1 {
            sample_id.to_string()
        } else {
            format!("{sample_id}-{label_id}")
        };
        out.push(TumorSample {
            sample_id: id,
            subject_id: subject_id.to_string(),
            label,
            modalities: Modalities {
                mr: cut(&modalities.mr)?,
                suv: cut(&modalities.suv)?,
                ki: cut(&modalities.ki)?,
            },
            mask: center_crop_mask(&part, crop)?,
            provenance: Provenance {
                transform,
                crop_offset: window.map(|r| r.0),
                crop_dims: crop,
            },
            verified: false,
        });
    }
    Ok(out)
}

pub const MANIFEST_HEADER: &str = "sample_id,subject_id,label,verified,mr_path,suv_path,ki_path,mask_path";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// One exported sample. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub sample_id: String,
    pub subject_id: String,
    pub label: ClassLabel,
    pub verified: bool,
    pub mr_path: PathBuf,
    pub suv_path: PathBuf,
    pub ki_path: PathBuf,
    pub mask_path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.sample_id,
                r.subject_id,
                r.label,
                r.verified,
                r.mr_path.display(),
                r.suv_path.display(),
                r.ki_path.display(),
                r.mask_path.display()
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == MANIFEST_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header '{MANIFEST_HEADER}'"),
                })
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines {
            let bad = |msg: String| Error::Parse { line: n + 1, msg };
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 8 {
                return Err(bad(format!("expected 8 fields, found {}", f.len())));
            }
            rows.push(ManifestRow {
                sample_id: f[0].to_string(),
                subject_id: f[1].to_string(),
                label: f[2].parse().map_err(bad)?,
                verified: f[3].parse().map_err(|_| bad(format!("bad verified flag '{}'", f[3])))?,
                mr_path: f[4].into(),
                suv_path: f[5].into(),
                ki_path: f[6].into(),
                mask_path: f[7].into(),
            });
        }
        Ok(Self { rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn provenance_path(dir: &Path, sample_id: &str) -> PathBuf {
    dir.join(format!("{sample_id}.prov.txt"))
}

/// Write one sample's float32 NIfTI tensors and provenance file into
/// `dir`, returning its manifest row.
pub fn write_sample(s: &TumorSample, dir: &Path) -> Result<ManifestRow> {
    check_id(&s.sample_id)?;
    check_id(&s.subject_id)?;
    let name = |kind: &str| PathBuf::from(format!("{}_{kind}.nii", s.sample_id));
    let row = ManifestRow {
        sample_id: s.sample_id.clone(),
        subject_id: s.subject_id.clone(),
        label: s.label,
        verified: s.verified,
        mr_path: name("mr"),
        suv_path: name("suv"),
        ki_path: name("ki"),
        mask_path: name("mask"),
    };
    write_volume(&s.modalities.mr, dir.join(&row.mr_path))?;
    write_volume(&s.modalities.suv, dir.join(&row.suv_path))?;
    write_volume(&s.modalities.ki, dir.join(&row.ki_path))?;
    write_volume(&s.mask.to_volume(), dir.join(&row.mask_path))?;
    let prov = provenance_path(dir, &s.sample_id);
    fs::write(&prov, s.provenance.render()).map_err(|e| Error::io(&prov, e))?;
    Ok(row)
}

/// Write every sample plus the manifest listing them. Output is
/// byte-identical across runs.
pub fn export_samples(samples: &[TumorSample], out_dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = Manifest {
        rows: samples.iter().map(|s| write_sample(s, out_dir)).collect::<Result<_>>()?,
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Load the samples listed in `<dir>/manifest.csv`.
pub fn load_samples(dir: &Path) -> Result<Vec<TumorSample>> {
    let manifest = Manifest::read(&dir.join(MANIFEST_FILE))?;
    manifest
        .rows
        .into_iter()
        .map(|r| {
            let prov = provenance_path(dir, &r.sample_id);
            let text = fs::read_to_string(&prov).map_err(|e| Error::io(&prov, e))?;
            Ok(TumorSample {
                modalities: Modalities {
                    mr: read_volume(dir.join(&r.mr_path))?,
                    suv: read_volume(dir.join(&r.suv_path))?,
                    ki: read_volume(dir.join(&r.ki_path))?,
                },
                mask: Mask::from_volume(&read_volume(dir.join(&r.mask_path))?),
                provenance: Provenance::parse(&text)?,
                sample_id: r.sample_id,
                subject_id: r.subject_id,
                label: r.label,
                verified: r.verified,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Geometry, Unit};

    fn grid() -> Geometry {
        Geometry::centered([12, 10, 8], [1.0; 3], [0.0; 3]).unwrap()
    }

    fn modalities(g: &Geometry) -> Modalities {
        let f = |s: f64| Volume3D::from_fn(g.clone(), Unit::Unitless, |[i, j, k]| s + (i + 2 * j + 3 * k) as f64).unwrap();
        Modalities {
            mr: f(1.0),
            suv: f(2.0),
            ki: f(3.0),
        }
    }

    #[test]
    fn full_mask_full_crop_equals_inputs() {
        let g = grid();
        let m = modalities(&g);
        let s = extract_sample(&m, &Mask::full(g.clone()), g.dims(), "a", "s1", ClassLabel::Tp, RigidTransform::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].modalities, m);
        assert_eq!(s[0].sample_id, "a");
    }

    #[test]
    fn components_split_and_zero_outside() {
        let g = grid();
        let mask = Mask::from_fn(g.clone(), |[i, j, k]| (4..6).contains(&j) && (3..5).contains(&k) && (i == 3 || i == 4 || i == 8));
        let s = extract_sample(&modalities(&g), &mask, [8, 8, 6], "t", "s1", ClassLabel::Tn, RigidTransform::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].voxel_count(), s[1].voxel_count()), (8, 4));
        assert_eq!((s[0].sample_id.as_str(), s[1].sample_id.as_str()), ("t-1", "t-2"));
        for sample in &s {
            assert_eq!(sample.mask.dims(), [8, 8, 6]);
            assert_eq!(sample.provenance.crop_offset, [2, 1, 1]);
            for v in [&sample.modalities.mr, &sample.modalities.suv, &sample.modalities.ki] {
                for (x, &inside) in v.data().iter().zip(sample.mask.data()) {
                    assert!(inside == (*x != 0.0));
                }
            }
        }
    }

    #[test]
    fn extraction_errors() {
        let g = grid();
        let m = modalities(&g);
        let t = RigidTransform::default();
        let empty = Mask::empty(g.clone());
        assert!(matches!(extract_sample(&m, &empty, [4; 3], "a", "s", ClassLabel::Tp, t), Err(Error::EmptyMask)));
        let corner = Mask::from_fn(g.clone(), |c| c == [0, 0, 0]);
        assert!(matches!(
            extract_sample(&m, &corner, [4; 3], "a", "s", ClassLabel::Tp, t),
            Err(Error::MaskOutsideCrop { .. })
        ));
        assert!(extract_sample(&m, &corner, [4; 3], "a/b", "s", ClassLabel::Tp, t).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let text = format!("{MANIFEST_HEADER}\nx,s,TP,true,x_mr.nii,x_suv.nii,x_ki.nii,x_mask.nii\n");
        let m = Manifest::parse(&text).unwrap();
        assert_eq!(m.rows[0].label, ClassLabel::Tp);
        assert!(m.rows[0].verified);
        assert_eq!(m.render(), text);
        assert!(Manifest::parse("sample_id\n").is_err());
        assert!(Manifest::parse(&format!("{MANIFEST_HEADER}\nx,s,XX,true,a,b,c,d\n")).is_err());
    }

    #[test]
    fn provenance_round_trip() {
        let p = Provenance {
            transform: RigidTransform::new([1.0, 2.0, 3.0], [0.5, -0.25, 4.0], [1.0, 1.0, 1.0]),
            crop_offset: [35, 35, 17],
            crop_dims: DEFAULT_CROP,
        };
        assert_eq!(Provenance::parse(&p.render()).unwrap(), p);
    }
}
