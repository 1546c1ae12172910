//! The 348-byte NIfTI-1 header.

use std::io::{Cursor, Read, Write};

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag of single-file images.
pub const SINGLE_FILE_OFFSET: usize = 352;
pub const MAGIC_SINGLE: [u8; 4] = *b"n+1\0";
pub const MAGIC_PAIR: [u8; 4] = *b"ni1\0";

/// Byte order of a file on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

/// Voxel storage types this crate reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    Uint8,
    Int16,
    Float32,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(DataType::Uint8),
            4 => Ok(DataType::Int16),
            16 => Ok(DataType::Float32),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
        }
    }

    pub fn bitpix(self) -> i16 {
        8 * self.size() as i16
    }
}

/// NIfTI-1 header fields. Fields not listed here are written as zeros and
/// ignored on read.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub descrip: [u8; 80],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern_b: f32,
    pub quatern_c: f32,
    pub quatern_d: f32,
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub magic: [u8; 4],
    pub endianness: Endianness,
}

impl Default for NiftiHeader {
    fn default() -> Self {
        Self {
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: DataType::Float32.code(),
            bitpix: DataType::Float32.bitpix(),
            pixdim: [1.0; 8],
            vox_offset: SINGLE_FILE_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2,
            descrip: [0; 80],
            qform_code: 0,
            sform_code: 0,
            quatern_b: 0.0,
            quatern_c: 0.0,
            quatern_d: 0.0,
            qoffset: [0.0; 3],
            srow_x: [1.0, 0.0, 0.0, 0.0],
            srow_y: [0.0, 1.0, 0.0, 0.0],
            srow_z: [0.0, 0.0, 1.0, 0.0],
            magic: MAGIC_SINGLE,
            endianness: Endianness::Little,
        }
    }
}

impl NiftiHeader {
    pub fn ndim(&self) -> usize {
        self.dim[0] as usize
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dim[1] as usize, self.dim[2] as usize, self.dim[3] as usize]
    }

    /// Frames along the 4th axis (1 for 3D images).
    pub fn n_frames(&self) -> usize {
        if self.dim[0] >= 4 {
            self.dim[4] as usize
        } else {
            1
        }
    }

    pub fn n_voxels(&self) -> usize {
        (1..=self.ndim()).map(|i| self.dim[i] as usize).product()
    }

    pub fn data_type(&self) -> Result<DataType> {
        DataType::from_code(self.datatype)
    }

    pub fn set_description(&mut self, text: &str) {
        self.descrip = [0; 80];
        let bytes = text.as_bytes();
        let n = bytes.len().min(79);
        self.descrip[..n].copy_from_slice(&bytes[..n]);
    }

    pub fn description(&self) -> String {
        let end = self.descrip.iter().position(|&b| b == 0).unwrap_or(80);
        String::from_utf8_lossy(&self.descrip[..end]).into_owned()
    }

    fn validate(&self) -> Result<()> {
        if self.magic != MAGIC_SINGLE && self.magic != MAGIC_PAIR {
            return Err(Error::BadMagic(self.magic));
        }
        if !(3..=4).contains(&self.dim[0]) {
            return Err(Error::HeaderInvalid(format!("dim[0] = {} (need 3 or 4)", self.dim[0])));
        }
        for i in 1..=self.ndim() {
            if self.dim[i] < 1 {
                return Err(Error::HeaderInvalid(format!("dim[{i}] = {}", self.dim[i])));
            }
        }
        let dt = self.data_type()?;
        if self.bitpix != dt.bitpix() {
            return Err(Error::HeaderInvalid(format!(
                "bitpix {} does not match datatype {}",
                self.bitpix, self.datatype
            )));
        }
        Ok(())
    }

    /// Parse a header, detecting byte order from `sizeof_hdr`.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::HeaderInvalid(format!("{} bytes, need {HEADER_SIZE}", bytes.len())));
        }
        let hdr = if LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<LittleEndian>(bytes, Endianness::Little)
        } else if BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32 {
            Self::parse_with::<BigEndian>(bytes, Endianness::Big)
        } else {
            return Err(Error::HeaderInvalid("sizeof_hdr is not 348 in either byte order".into()));
        }
        .map_err(|e| Error::HeaderInvalid(e.to_string()))?;
        hdr.validate()?;
        Ok(hdr)
    }

    fn parse_with<B: ByteOrder>(bytes: &[u8], endianness: Endianness) -> std::io::Result<Self> {
        let mut r = Cursor::new(bytes);
        r.set_position(40);
        let mut dim = [0i16; 8];
        r.read_i16_into::<B>(&mut dim)?;
        r.set_position(70);
        let datatype = r.read_i16::<B>()?;
        let bitpix = r.read_i16::<B>()?;
        r.set_position(76);
        let mut pixdim = [0f32; 8];
        r.read_f32_into::<B>(&mut pixdim)?;
        let vox_offset = r.read_f32::<B>()?;
        let scl_slope = r.read_f32::<B>()?;
        let scl_inter = r.read_f32::<B>()?;
        r.set_position(123);
        let xyzt_units = r.read_u8()?;
        r.set_position(148);
        let mut descrip = [0u8; 80];
        r.read_exact(&mut descrip)?;
        r.set_position(252);
        let qform_code = r.read_i16::<B>()?;
        let sform_code = r.read_i16::<B>()?;
        let quatern_b = r.read_f32::<B>()?;
        let quatern_c = r.read_f32::<B>()?;
        let quatern_d = r.read_f32::<B>()?;
        let mut qoffset = [0f32; 3];
        r.read_f32_into::<B>(&mut qoffset)?;
        let mut srow_x = [0f32; 4];
        let mut srow_y = [0f32; 4];
        let mut srow_z = [0f32; 4];
        r.read_f32_into::<B>(&mut srow_x)?;
        r.read_f32_into::<B>(&mut srow_y)?;
        r.read_f32_into::<B>(&mut srow_z)?;
        r.set_position(344);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        Ok(Self {
            dim,
            datatype,
            bitpix,
            pixdim,
            vox_offset,
            scl_slope,
            scl_inter,
            xyzt_units,
            descrip,
            qform_code,
            sform_code,
            quatern_b,
            quatern_c,
            quatern_d,
            qoffset,
            srow_x,
            srow_y,
            srow_z,
            magic,
            endianness,
        })
    }

    /// Serialize to exactly 348 bytes in `self.endianness`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let out = match self.endianness {
            Endianness::Little => self.write_with::<LittleEndian>(),
            Endianness::Big => self.write_with::<BigEndian>(),
        };
        debug_assert_eq!(out.len(), HEADER_SIZE);
        out
    }

    fn write_with<B: ByteOrder>(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(HEADER_SIZE);
        // writes into a Vec cannot fail
        (|| -> std::io::Result<()> {
            w.write_i32::<B>(HEADER_SIZE as i32)?; // sizeof_hdr
            w.write_all(&[0u8; 10])?; // data_type
            w.write_all(&[0u8; 18])?; // db_name
            w.write_i32::<B>(0)?; // extents
            w.write_i16::<B>(0)?; // session_error
            w.write_u8(b'r')?; // regular
            w.write_u8(0)?; // dim_info
            for d in self.dim {
                w.write_i16::<B>(d)?;
            }
            for _ in 0..3 {
                w.write_f32::<B>(0.0)?; // intent_p1..3
            }
            w.write_i16::<B>(0)?; // intent_code
            w.write_i16::<B>(self.datatype)?;
            w.write_i16::<B>(self.bitpix)?;
            w.write_i16::<B>(0)?; // slice_start
            for p in self.pixdim {
                w.write_f32::<B>(p)?;
            }
            w.write_f32::<B>(self.vox_offset)?;
            w.write_f32::<B>(self.scl_slope)?;
            w.write_f32::<B>(self.scl_inter)?;
            w.write_i16::<B>(0)?; // slice_end
            w.write_u8(0)?; // slice_code
            w.write_u8(self.xyzt_units)?;
            w.write_f32::<B>(0.0)?; // cal_max
            w.write_f32::<B>(0.0)?; // cal_min
            w.write_f32::<B>(0.0)?; // slice_duration
            w.write_f32::<B>(0.0)?; // toffset
            w.write_i32::<B>(0)?; // glmax
            w.write_i32::<B>(0)?; // glmin
            w.write_all(&self.descrip)?;
            w.write_all(&[0u8; 24])?; // aux_file
            w.write_i16::<B>(self.qform_code)?;
            w.write_i16::<B>(self.sform_code)?;
            w.write_f32::<B>(self.quatern_b)?;
            w.write_f32::<B>(self.quatern_c)?;
            w.write_f32::<B>(self.quatern_d)?;
            for q in self.qoffset {
                w.write_f32::<B>(q)?;
            }
            for row in [self.srow_x, self.srow_y, self.srow_z] {
                for v in row {
                    w.write_f32::<B>(v)?;
                }
            }
            w.write_all(&[0u8; 16])?; // intent_name
            w.write_all(&self.magic)?;
            Ok(())
        })()
        .expect("in-memory write");
        w
    }
}
