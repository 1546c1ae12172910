//! Single-file NIfTI-1 images plus the two text sidecars that travel with
//! them: the frame schedule (`.sched.csv`) and study metadata (`.meta.txt`).
//!
//! Only uint8, int16 and float32 voxels are supported. Files are written
//! little-endian with `vox_offset = 352`; either byte order is read.
//! Physical coordinates in the file are RAS (NIfTI convention) and are
//! converted to the crate's LPS convention on load.

mod header;
mod sidecar;

use std::fs;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub use header::{DataType, Endianness, NiftiHeader, HEADER_SIZE, MAGIC_PAIR, MAGIC_SINGLE, SINGLE_FILE_OFFSET};
pub use sidecar::{
    parse_schedule, read_meta, read_schedule_sidecar, render_schedule, write_meta, write_schedule_sidecar, ClassLabel,
    Modality, StudyMeta,
};

use crate::error::{Error, Result};
use crate::volume::{DynamicVolume, FrameSchedule, Geometry, Unit, Volume3D};

/// A loaded image: one volume or a frame series.
#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Static(Volume3D),
    Dynamic(DynamicVolume),
}

impl Image {
    pub fn geometry(&self) -> &Geometry {
        match self {
            Image::Static(v) => v.geometry(),
            Image::Dynamic(d) => d.geometry(),
        }
    }

    pub fn into_static(self) -> Result<Volume3D> {
        match self {
            Image::Static(v) => Ok(v),
            Image::Dynamic(_) => Err(Error::VolumeInvalid("expected a 3D image, found 4D".into())),
        }
    }

    pub fn into_dynamic(self) -> Result<DynamicVolume> {
        match self {
            Image::Dynamic(d) => Ok(d),
            Image::Static(_) => Err(Error::VolumeInvalid("expected a 4D image, found 3D".into())),
        }
    }
}

impl From<Volume3D> for Image {
    fn from(v: Volume3D) -> Self {
        Image::Static(v)
    }
}

impl From<DynamicVolume> for Image {
    fn from(d: DynamicVolume) -> Self {
        Image::Dynamic(d)
    }
}

/// `dir/name.nii` -> `dir/name<suffix>`.
pub fn sidecar_path(image_path: &Path, suffix: &str) -> PathBuf {
    let name = image_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".nii")
        .or_else(|| name.strip_suffix(".hdr"))
        .unwrap_or(&name);
    image_path.with_file_name(format!("{stem}{suffix}"))
}

pub fn schedule_path(image_path: &Path) -> PathBuf {
    sidecar_path(image_path, ".sched.csv")
}

pub fn meta_path(image_path: &Path) -> PathBuf {
    sidecar_path(image_path, ".meta.txt")
}

const RAS_TO_LPS: [f64; 3] = [-1.0, -1.0, 1.0];

fn flip(v: Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.x * RAS_TO_LPS[0], v.y * RAS_TO_LPS[1], v.z * RAS_TO_LPS[2])
}

fn flip_rows(m: Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::from(RAS_TO_LPS)) * m
}

/// Derive LPS geometry from the header (sform, then qform, then pixdim).
pub fn header_geometry(h: &NiftiHeader) -> Result<Geometry> {
    let dims = h.spatial_dims();
    let pix = [1, 2, 3].map(|i| h.pixdim[i].abs() as f64);
    let (dir_ras, offset, spacing) = if h.sform_code > 0 {
        let rows = [h.srow_x, h.srow_y, h.srow_z];
        let m = Matrix3::from_fn(|r, c| rows[r][c] as f64);
        let mut dir = Matrix3::zeros();
        let mut spacing = [0.0; 3];
        for c in 0..3 {
            let col = m.column(c).into_owned();
            let n = col.norm();
            if n == 0.0 {
                return Err(Error::HeaderInvalid(format!("sform column {c} is zero")));
            }
            dir.set_column(c, &(col / n));
            spacing[c] = if pix[c] > 0.0 { pix[c] } else { n };
        }
        let offset = Vector3::new(rows[0][3] as f64, rows[1][3] as f64, rows[2][3] as f64);
        (dir, offset, spacing)
    } else if h.qform_code > 0 {
        let (b, c, d) = (h.quatern_b as f64, h.quatern_c as f64, h.quatern_d as f64);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(a, b, c, d));
        let mut dir = *q.to_rotation_matrix().matrix();
        if h.pixdim[0] < 0.0 {
            let col = dir.column(2) * -1.0;
            dir.set_column(2, &col);
        }
        let offset = Vector3::new(h.qoffset[0] as f64, h.qoffset[1] as f64, h.qoffset[2] as f64);
        (dir, offset, pix.map(|p| if p > 0.0 { p } else { 1.0 }))
    } else {
        (Matrix3::identity(), Vector3::zeros(), pix.map(|p| if p > 0.0 { p } else { 1.0 }))
    };
    // re-orthonormalize away float32 noise
    let svd = dir_ras.svd(true, true);
    let dir_ras = svd.u.unwrap() * svd.v_t.unwrap();
    let dir = flip_rows(dir_ras);
    let origin = flip(offset);
    Geometry::new(dims, spacing, [origin.x, origin.y, origin.z], dir)
}

/// Fill the qform/sform fields of `h` from an LPS geometry.
fn set_header_geometry(h: &mut NiftiHeader, g: &Geometry) {
    let vs = g.voxel_size();
    let dir_ras = flip_rows(*g.direction());
    let o = flip(Vector3::from(g.origin()));
    let rows = [&mut h.srow_x, &mut h.srow_y, &mut h.srow_z];
    for (r, row) in rows.into_iter().enumerate() {
        for c in 0..3 {
            row[c] = (dir_ras[(r, c)] * vs[c]) as f32;
        }
        row[3] = o[r] as f32;
    }
    h.sform_code = 1;

    let mut rot = dir_ras;
    let qfac = if rot.determinant() < 0.0 {
        let col = rot.column(2) * -1.0;
        rot.set_column(2, &col);
        -1.0
    } else {
        1.0
    };
    let mut q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(rot)).into_inner();
    if q.w < 0.0 {
        q = -q;
    }
    h.qform_code = 1;
    h.quatern_b = q.i as f32;
    h.quatern_c = q.j as f32;
    h.quatern_d = q.k as f32;
    h.qoffset = [o.x as f32, o.y as f32, o.z as f32];
    h.pixdim[0] = qfac;
    h.pixdim[1] = vs[0] as f32;
    h.pixdim[2] = vs[1] as f32;
    h.pixdim[3] = vs[2] as f32;
}

fn unit_tag(u: Unit) -> &'static str {
    match u {
        Unit::Activity => "Bq/mL",
        Unit::Unitless => "1",
        Unit::PerMinute => "1/min",
    }
}

fn unit_from_description(d: &str) -> Unit {
    match d.split_whitespace().find_map(|w| w.strip_prefix("unit=")) {
        Some("Bq/mL") => Unit::Activity,
        Some("1/min") => Unit::PerMinute,
        _ => Unit::Unitless,
    }
}

fn decode_values(h: &NiftiHeader, bytes: &[u8]) -> Result<Vec<f64>> {
    let dt = h.data_type()?;
    let n = h.n_voxels();
    let expected = n * dt.size();
    if bytes.len() != expected {
        return Err(Error::TruncatedData {
            expected,
            found: bytes.len(),
        });
    }
    let raw: Vec<f64> = match (dt, h.endianness) {
        (DataType::Uint8, _) => bytes.iter().map(|&b| b as f64).collect(),
        (DataType::Int16, Endianness::Little) => bytes.chunks_exact(2).map(|c| LittleEndian::read_i16(c) as f64).collect(),
        (DataType::Int16, Endianness::Big) => bytes.chunks_exact(2).map(|c| BigEndian::read_i16(c) as f64).collect(),
        (DataType::Float32, Endianness::Little) => bytes.chunks_exact(4).map(|c| LittleEndian::read_f32(c) as f64).collect(),
        (DataType::Float32, Endianness::Big) => bytes.chunks_exact(4).map(|c| BigEndian::read_f32(c) as f64).collect(),
    };
    let slope = h.scl_slope as f64;
    let inter = h.scl_inter as f64;
    if slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0) {
        Ok(raw.into_iter().map(|r| slope * r + inter).collect())
    } else {
        Ok(raw)
    }
}

/// Parse a complete single-file image held in memory. 4D images need the
/// frame schedule, which lives outside the file.
pub fn decode_nifti(bytes: &[u8], schedule: Option<FrameSchedule>) -> Result<(Image, NiftiHeader)> {
    let h = NiftiHeader::parse(bytes)?;
    if h.magic != MAGIC_SINGLE {
        return Err(Error::HeaderInvalid("in-memory decoding needs a single-file (n+1) image".into()));
    }
    let off = h.vox_offset as usize;
    if off < HEADER_SIZE || off > bytes.len() {
        return Err(Error::HeaderInvalid(format!("vox_offset {} out of range", h.vox_offset)));
    }
    let image = build_image(&h, &bytes[off..], schedule)?;
    Ok((image, h))
}

fn build_image(h: &NiftiHeader, data: &[u8], schedule: Option<FrameSchedule>) -> Result<Image> {
    let values = decode_values(h, data)?;
    let geometry = header_geometry(h)?;
    let unit = unit_from_description(&h.description());
    if h.ndim() == 3 {
        let v = Volume3D::new(geometry, values, unit)?;
        return Ok(Image::Static(v.to_lps()?));
    }
    let schedule = schedule.ok_or_else(|| Error::MissingSchedule(PathBuf::new()))?;
    let nf = h.n_frames();
    if schedule.len() != nf {
        return Err(Error::ScheduleInvalid(format!("{} schedule rows for {nf} frames", schedule.len())));
    }
    let per = geometry.len();
    let frames = values
        .chunks_exact(per)
        .map(|c| Volume3D::new(geometry.clone(), c.to_vec(), unit))
        .collect::<Result<Vec<_>>>()?;
    Ok(Image::Dynamic(DynamicVolume::new(geometry, schedule, frames)?.to_lps()?))
}

/// Read a NIfTI-1 image. 4D images pick up their `.sched.csv` sidecar.
pub fn read_nifti(path: impl AsRef<Path>) -> Result<(Image, NiftiHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = NiftiHeader::parse(&bytes)?;
    let data: Vec<u8>;
    let slice: &[u8] = if h.magic == MAGIC_SINGLE {
        let off = h.vox_offset as usize;
        if off < HEADER_SIZE || off > bytes.len() {
            return Err(Error::TruncatedData {
                expected: h.n_voxels() * h.data_type()?.size(),
                found: bytes.len().saturating_sub(off.min(bytes.len())),
            });
        }
        &bytes[off..]
    } else {
        let img = sidecar_path(path, ".img");
        data = fs::read(&img).map_err(|e| Error::io(&img, e))?;
        let off = (h.vox_offset as usize).min(data.len());
        &data[off..]
    };
    let schedule = if h.ndim() == 4 {
        let sp = schedule_path(path);
        if !sp.exists() {
            return Err(Error::MissingSchedule(sp));
        }
        Some(read_schedule_sidecar(&sp)?)
    } else {
        None
    };
    let image = build_image(&h, slice, schedule)?;
    Ok((image, h))
}

/// Pick a linear mapping `value = slope * raw + inter` for integer storage.
fn integer_scaling(values: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || (values.iter().all(|v| v.fract() == 0.0) && min >= lo && max <= hi) {
        return (1.0, 0.0);
    }
    if max == min {
        return (1.0, min);
    }
    let slope = (max - min) / (hi - lo);
    let inter = min - slope * lo;
    (slope, inter)
}

/// Encode an image as single-file NIfTI-1 bytes.
pub fn encode_nifti(image: &Image, datatype: DataType, endianness: Endianness) -> Vec<u8> {
    let (g, frames): (&Geometry, Vec<&Volume3D>) = match image {
        Image::Static(v) => (v.geometry(), vec![v]),
        Image::Dynamic(d) => (d.geometry(), d.frames().iter().collect()),
    };
    let dims = g.dims();
    let mut h = NiftiHeader {
        endianness,
        datatype: datatype.code(),
        bitpix: datatype.bitpix(),
        ..Default::default()
    };
    h.dim = [3, dims[0] as i16, dims[1] as i16, dims[2] as i16, 1, 1, 1, 1];
    if let Image::Dynamic(d) = image {
        h.dim[0] = 4;
        h.dim[4] = d.n_frames() as i16;
        h.pixdim[4] = 0.0;
    }
    set_header_geometry(&mut h, g);
    let unit = match image {
        Image::Static(v) => v.unit(),
        Image::Dynamic(d) => d.frame(0).unit(),
    };
    h.set_description(&format!("dpet unit={}", unit_tag(unit)));

    let all: Vec<f64> = frames.iter().flat_map(|f| f.data().iter().copied()).collect();
    let (slope, inter) = match datatype {
        DataType::Float32 => (1.0, 0.0),
        DataType::Int16 => integer_scaling(&all, -32767.0, 32767.0),
        DataType::Uint8 => integer_scaling(&all, 0.0, 255.0),
    };
    h.scl_slope = slope as f32;
    h.scl_inter = inter as f32;
    // quantize against the stored (f32) scaling so reads invert it
    let (s32, i32_) = (h.scl_slope as f64, h.scl_inter as f64);

    let mut out = h.to_bytes();
    out.extend_from_slice(&[0u8; 4]);
    let mut buf = [0u8; 4];
    for v in all {
        match datatype {
            DataType::Float32 => {
                match endianness {
                    Endianness::Little => LittleEndian::write_f32(&mut buf, v as f32),
                    Endianness::Big => BigEndian::write_f32(&mut buf, v as f32),
                }
                out.extend_from_slice(&buf);
            }
            DataType::Int16 => {
                let raw = ((v - i32_) / s32).round().clamp(-32768.0, 32767.0) as i16;
                match endianness {
                    Endianness::Little => LittleEndian::write_i16(&mut buf, raw),
                    Endianness::Big => BigEndian::write_i16(&mut buf, raw),
                }
                out.extend_from_slice(&buf[..2]);
            }
            DataType::Uint8 => {
                out.push(((v - i32_) / s32).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

/// Write a single-file little-endian NIfTI-1 image. Dynamic volumes also
/// get their `.sched.csv` sidecar.
pub fn write_nifti(image: &Image, path: impl AsRef<Path>, datatype: DataType) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(image, datatype, Endianness::Little);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    if let Image::Dynamic(d) = image {
        write_schedule_sidecar(d.schedule(), schedule_path(path))?;
    }
    Ok(())
}

/// Convenience wrappers for the common cases.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume3D> {
    read_nifti(path)?.0.into_static()
}

pub fn read_dynamic(path: impl AsRef<Path>) -> Result<DynamicVolume> {
    read_nifti(path)?.0.into_dynamic()
}

pub fn write_volume(v: &Volume3D, path: impl AsRef<Path>) -> Result<()> {
    write_nifti(&Image::Static(v.clone()), path, DataType::Float32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> Geometry {
        Geometry::lps([7, 6, 5], [2.0, 2.0, 2.0], [-10.0, 5.5, 3.25]).unwrap()
    }

    fn vol(g: Geometry) -> Volume3D {
        Volume3D::from_fn(g, Unit::Unitless, |[i, j, k]| (i as f64 * 1.5 - j as f64 * 0.25 + k as f64).sin() * 100.0)
            .unwrap()
    }

    #[test]
    fn float32_round_trip_in_memory() {
        let v = vol(geom()).map(|x| x as f32 as f64).unwrap();
        let bytes = encode_nifti(&Image::Static(v.clone()), DataType::Float32, Endianness::Little);
        assert_eq!(bytes.len(), 352 + 7 * 6 * 5 * 4);
        let (img, h) = decode_nifti(&bytes, None).unwrap();
        let back = img.into_static().unwrap();
        assert_eq!(back.data(), v.data());
        assert!(back.geometry().approx_eq(v.geometry(), 1e-5));
        assert_eq!(back.geometry().axis_codes(), "LPS");
        assert_eq!(&h.pixdim[1..4], &[2.0, 2.0, 2.0]);
        assert_eq!(h.vox_offset, 352.0);
    }

    #[test]
    fn int16_scaling_formula() {
        let mut h = NiftiHeader {
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: 4,
            bitpix: 16,
            scl_slope: 0.5,
            scl_inter: 10.0,
            ..Default::default()
        };
        h.sform_code = 0;
        let mut bytes = h.to_bytes();
        bytes.extend_from_slice(&[0; 4]);
        bytes.extend_from_slice(&4i16.to_le_bytes());
        let v = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        assert_eq!(v.data(), &[12.0]);
    }

    #[test]
    fn truncated_data_detected() {
        let v = vol(geom());
        let mut bytes = encode_nifti(&Image::Static(v), DataType::Float32, Endianness::Little);
        bytes.pop();
        assert!(matches!(decode_nifti(&bytes, None), Err(Error::TruncatedData { .. })));
    }

    #[test]
    fn int16_within_quantization() {
        let v = vol(geom());
        let bytes = encode_nifti(&Image::Static(v.clone()), DataType::Int16, Endianness::Little);
        let (img, h) = decode_nifti(&bytes, None).unwrap();
        let back = img.into_static().unwrap();
        let step = h.scl_slope as f64;
        for (a, b) in back.data().iter().zip(v.data()) {
            assert!((a - b).abs() <= 0.5 * step + 1e-9 * b.abs().max(1.0), "{a} vs {b} step {step}");
        }
    }

    #[test]
    fn mask_as_uint8_is_exact() {
        let g = geom();
        let m = Volume3D::from_fn(g, Unit::Unitless, |[i, j, _]| ((i + j) % 2) as f64).unwrap();
        let bytes = encode_nifti(&Image::Static(m.clone()), DataType::Uint8, Endianness::Little);
        let back = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        assert_eq!(back.data(), m.data());
    }

    #[test]
    fn rotated_geometry_round_trip() {
        let rot = Rotation3::from_euler_angles(0.3, -0.1, 0.05);
        let g = Geometry::new([4, 5, 6], [1.0, 1.5, 2.5], [3.0, -7.0, 11.0], *rot.matrix()).unwrap();
        let v = Volume3D::filled(g.clone(), 1.0, Unit::Unitless);
        let bytes = encode_nifti(&Image::Static(v), DataType::Float32, Endianness::Little);
        let back = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        assert!(back.geometry().approx_eq(&g, 1e-5), "{:?} vs {:?}", back.geometry(), g);
    }

    #[test]
    fn qform_only_header_is_honored() {
        let g = geom();
        let v = vol(g.clone()).map(|x| x as f32 as f64).unwrap();
        let bytes = encode_nifti(&Image::Static(v.clone()), DataType::Float32, Endianness::Little);
        let mut h = NiftiHeader::parse(&bytes).unwrap();
        h.sform_code = 0;
        let mut patched = h.to_bytes();
        patched.extend_from_slice(&bytes[348..]);
        let back = decode_nifti(&patched, None).unwrap().0.into_static().unwrap();
        assert!(back.geometry().approx_eq(&g, 1e-5));
        assert_eq!(back.data(), v.data());
    }

    #[test]
    fn ras_file_is_reoriented_on_load() {
        // a file whose voxel axes run R, A, S (identity sform)
        let mut h = NiftiHeader {
            dim: [3, 3, 2, 1, 1, 1, 1, 1],
            sform_code: 1,
            ..Default::default()
        };
        h.pixdim[0] = 1.0;
        let mut bytes = h.to_bytes();
        bytes.extend_from_slice(&[0; 4]);
        for x in 0..6 {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        let v = decode_nifti(&bytes, None).unwrap().0.into_static().unwrap();
        assert_eq!(v.geometry().axis_codes(), "LPS");
        // RAS voxel (0,0,0) sits at the physical origin; after the flip it is
        // the last voxel along x and y
        assert_eq!(v.get(2, 1, 0), 0.0);
        assert_eq!(v.get(0, 0, 0), 5.0);
    }

    #[test]
    fn four_d_requires_schedule() {
        let g = Geometry::lps([2, 2, 2], [1.0; 3], [0.0; 3]).unwrap();
        let sched = FrameSchedule::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        let frames = vec![Volume3D::filled(g.clone(), 1.0, Unit::Activity), Volume3D::filled(g.clone(), 2.0, Unit::Activity)];
        let d = DynamicVolume::new(g, sched.clone(), frames).unwrap();
        let bytes = encode_nifti(&Image::Dynamic(d), DataType::Float32, Endianness::Little);
        let h = NiftiHeader::parse(&bytes).unwrap();
        assert_eq!(h.dim[0], 4);
        assert_eq!(h.dim[4], 2);
        assert!(matches!(decode_nifti(&bytes, None), Err(Error::MissingSchedule(_))));
        let back = decode_nifti(&bytes, Some(sched)).unwrap().0.into_dynamic().unwrap();
        assert_eq!(back.frame(1).data(), &[2.0; 8]);
    }

    #[test]
    fn sidecar_paths() {
        assert_eq!(schedule_path(Path::new("/a/dyn.nii")), PathBuf::from("/a/dyn.sched.csv"));
        assert_eq!(meta_path(Path::new("x.nii")), PathBuf::from("x.meta.txt"));
    }
}
