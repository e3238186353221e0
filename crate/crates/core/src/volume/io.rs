//! MetaImage (`.mhd` + raw, or single-file `.mha`) reader and writer.
//!
//! Only the subset needed here is supported: `NDims = 3`, element types
//! `MET_UCHAR`, `MET_SHORT` and `MET_FLOAT`, either byte order, and an
//! `ElementDataFile` that is either `LOCAL` or a path relative to the header.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::volume::{Dims, Grid, LabelMask, ProbabilityMap, Spacing, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementType {
    UChar,
    Short,
    Float,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::UChar => 1,
            ElementType::Short => 2,
            ElementType::Float => 4,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "MET_UCHAR" => Ok(ElementType::UChar),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_FLOAT" => Ok(ElementType::Float),
            other => Err(Error::UnsupportedElementType(other.to_string())),
        }
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementType::UChar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Float => "MET_FLOAT",
        })
    }
}

/// The parsed header fields this reader understands.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub element_type: ElementType,
    pub big_endian: bool,
    /// `None` for `LOCAL` (data follows the header in the same file).
    pub data_file: Option<PathBuf>,
}

fn header_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn parse_bool(path: &Path, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(header_err(path, format!("{key}: expected True/False, got `{v}`"))),
    }
}

fn parse_triple<T: std::str::FromStr>(path: &Path, key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(header_err(path, format!("{key}: expected 3 values, got `{v}`")));
    }
    let mut parsed = Vec::with_capacity(3);
    for p in parts {
        parsed.push(
            p.parse::<T>()
                .map_err(|_| header_err(path, format!("{key}: cannot parse `{p}`")))?,
        );
    }
    let mut it = parsed.into_iter();
    Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
}

/// Parse header text. Returns the header and the byte offset where `LOCAL`
/// data starts (end of the `ElementDataFile` line).
fn parse_header(path: &Path, bytes: &[u8]) -> Result<(MetaHeader, usize)> {
    let mut ndims = None;
    let mut dims = None;
    let mut spacing: Spacing = [1.0; 3];
    let mut element_type = None;
    let mut big_endian = false;
    let mut data_file = None;
    let mut offset = 0usize;
    let mut found_data_line = false;

    while offset < bytes.len() {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| offset + p + 1)
            .unwrap_or(bytes.len());
        let line = std::str::from_utf8(&bytes[offset..end])
            .map_err(|_| header_err(path, "header is not valid text"))?
            .trim();
        offset = end;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| header_err(path, format!("line without `=`: `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "NDims" => {
                ndims = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| header_err(path, format!("NDims: `{value}`")))?,
                )
            }
            "DimSize" => dims = Some(parse_triple::<usize>(path, key, value)?),
            "ElementSpacing" | "ElementSize" => spacing = parse_triple::<f64>(path, key, value)?,
            "ElementType" => element_type = Some(ElementType::parse(value)?),
            "ElementByteOrderMSB" | "BinaryDataByteOrderMSB" => {
                big_endian = parse_bool(path, key, value)?
            }
            "ElementDataFile" => {
                data_file = if value == "LOCAL" {
                    None
                } else {
                    Some(PathBuf::from(value))
                };
                found_data_line = true;
                break;
            }
            // ObjectType, BinaryData, CompressedData, Offset, ... are accepted and ignored
            "CompressedData" if parse_bool(path, key, value)? => {
                return Err(header_err(path, "compressed data is not supported"));
            }
            _ => {}
        }
    }

    if !found_data_line {
        return Err(header_err(path, "missing ElementDataFile"));
    }
    match ndims {
        Some(3) => {}
        Some(n) => return Err(header_err(path, format!("NDims must be 3, got {n}"))),
        None => return Err(header_err(path, "missing NDims")),
    }
    let dims = dims.ok_or_else(|| header_err(path, "missing DimSize"))?;
    if dims.contains(&0) {
        return Err(Error::InvalidDims(dims));
    }
    let element_type = element_type.ok_or_else(|| header_err(path, "missing ElementType"))?;
    Ok((
        MetaHeader {
            dims,
            spacing,
            element_type,
            big_endian,
            data_file,
        },
        offset,
    ))
}

enum RawData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

fn read_raw(path: &Path) -> Result<(MetaHeader, RawData)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, local_offset) = parse_header(path, &bytes)?;
    let owned;
    let payload: &[u8] = match &header.data_file {
        None => &bytes[local_offset..],
        Some(rel) => {
            let data_path = path.parent().unwrap_or(Path::new(".")).join(rel);
            owned = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
            &owned
        }
    };
    let n = header.dims.iter().product::<usize>();
    let size = header.element_type.size();
    if payload.len() != n * size {
        return Err(Error::LengthMismatch {
            expected: n,
            found: payload.len() / size,
        });
    }
    let be = header.big_endian;
    let data = match header.element_type {
        ElementType::UChar => RawData::U8(payload.to_vec()),
        ElementType::Short => RawData::I16(
            payload
                .chunks_exact(2)
                .map(|c| {
                    let b = [c[0], c[1]];
                    if be {
                        i16::from_be_bytes(b)
                    } else {
                        i16::from_le_bytes(b)
                    }
                })
                .collect(),
        ),
        ElementType::Float => RawData::F32(
            payload
                .chunks_exact(4)
                .map(|c| {
                    let b = [c[0], c[1], c[2], c[3]];
                    if be {
                        f32::from_be_bytes(b)
                    } else {
                        f32::from_le_bytes(b)
                    }
                })
                .collect(),
        ),
    };
    Ok((header, data))
}

fn to_f32(data: RawData) -> Vec<f32> {
    match data {
        RawData::U8(v) => v.into_iter().map(f32::from).collect(),
        RawData::I16(v) => v.into_iter().map(f32::from).collect(),
        RawData::F32(v) => v,
    }
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let (header, data) = read_raw(path)?;
    Grid::new(header.dims, header.spacing, to_f32(data))
}

/// Load a mask; any element type is accepted as long as every value is 0 or 1.
pub fn load_label_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    let path = path.as_ref();
    let (header, data) = read_raw(path)?;
    let values = to_f32(data);
    let mut labels = Vec::with_capacity(values.len());
    for v in values {
        if v == 0.0 {
            labels.push(0);
        } else if v == 1.0 {
            labels.push(1);
        } else {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("label value {v} is not 0 or 1"),
            });
        }
    }
    Grid::new(header.dims, header.spacing, labels)
}

pub fn load_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    ProbabilityMap::new(load_volume(path)?)
}

/// Values that can be written to one of the supported element types.
pub trait Element: Copy {
    fn to_f64(self) -> f64;
}

impl Element for u8 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Element for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Element for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

fn encode<T: Element>(data: &[T], ty: ElementType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * ty.size());
    for &v in data {
        let v = v.to_f64();
        match ty {
            ElementType::UChar => {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::param(format!("value {v} does not fit MET_UCHAR")));
                }
                out.push(v as u8);
            }
            ElementType::Short => {
                if !(i16::MIN as f64..=i16::MAX as f64).contains(&v) || v.fract() != 0.0 {
                    return Err(Error::param(format!("value {v} does not fit MET_SHORT")));
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
            ElementType::Float => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    Ok(out)
}

/// Write `grid` as MetaImage. A `.mha` path produces a single file with
/// `LOCAL` data; anything else writes the header at `path` and the raw data
/// next to it with a `.raw` extension. Data is little-endian.
pub fn save_grid<T: Element>(grid: &Grid<T>, path: impl AsRef<Path>, ty: ElementType) -> Result<()> {
    let path = path.as_ref();
    let dims = grid.dims();
    if dims.contains(&0) || grid.is_empty() {
        return Err(Error::InvalidDims(dims));
    }
    let payload = encode(grid.data(), ty)?;
    let local = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mha"));
    let raw_path = path.with_extension("raw");
    let data_file = if local {
        "LOCAL".to_string()
    } else {
        raw_path
            .file_name()
            .ok_or_else(|| Error::param(format!("bad output path {}", path.display())))?
            .to_string_lossy()
            .into_owned()
    };
    let s = grid.spacing();
    let header = format!(
        "ObjectType = Image\nNDims = 3\nBinaryData = True\nBinaryDataByteOrderMSB = False\n\
         CompressedData = False\nDimSize = {} {} {}\nElementSpacing = {} {} {}\n\
         ElementType = {}\nElementDataFile = {}\n",
        dims[0], dims[1], dims[2], s[0], s[1], s[2], ty, data_file
    );
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    if local {
        file.write_all(&payload).map_err(|e| Error::io(path, e))?;
    } else {
        fs::write(&raw_path, &payload).map_err(|e| Error::io(&raw_path, e))?;
    }
    Ok(())
}

/// Write a volume as `MET_FLOAT`, which round-trips bit-exactly.
pub fn save_volume(vol: &Volume, path: impl AsRef<Path>) -> Result<()> {
    save_grid(vol, path, ElementType::Float)
}
