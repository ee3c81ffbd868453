//! Uncompressed little-endian MetaImage (`.mhd` header plus raw payload).

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::volume::{Spacing, Volume};
use crate::error::{Error, Result};

/// Supported voxel encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementType {
    Uchar,
    Short,
    Ushort,
    Float,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::Uchar => 1,
            ElementType::Short | ElementType::Ushort => 2,
            ElementType::Float => 4,
        }
    }

    fn decode(self, b: &[u8]) -> f32 {
        match self {
            ElementType::Uchar => b[0] as f32,
            ElementType::Short => i16::from_le_bytes([b[0], b[1]]) as f32,
            ElementType::Ushort => u16::from_le_bytes([b[0], b[1]]) as f32,
            ElementType::Float => f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
        }
    }

    /// Encodes `v`, or `None` if the type cannot hold it exactly.
    fn encode(self, v: f32, out: &mut Vec<u8>) -> Option<()> {
        let int = |lo: f32, hi: f32| (v.fract() == 0.0 && v >= lo && v <= hi).then_some(v);
        match self {
            ElementType::Uchar => out.push(int(0.0, 255.0)? as u8),
            ElementType::Short => out.extend_from_slice(&(int(-32768.0, 32767.0)? as i16).to_le_bytes()),
            ElementType::Ushort => out.extend_from_slice(&(int(0.0, 65535.0)? as u16).to_le_bytes()),
            ElementType::Float => out.extend_from_slice(&v.to_le_bytes()),
        }
        Some(())
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementType::Uchar => "MET_UCHAR",
            ElementType::Short => "MET_SHORT",
            ElementType::Ushort => "MET_USHORT",
            ElementType::Float => "MET_FLOAT",
        })
    }
}

impl FromStr for ElementType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "MET_UCHAR" => Ok(ElementType::Uchar),
            "MET_SHORT" => Ok(ElementType::Short),
            "MET_USHORT" => Ok(ElementType::Ushort),
            "MET_FLOAT" => Ok(ElementType::Float),
            other => Err(format!(
                "unsupported ElementType {other} (expected MET_UCHAR, MET_SHORT, MET_USHORT or MET_FLOAT)"
            )),
        }
    }
}

fn err(path: &Path, msg: impl Into<String>) -> Error {
    Error::MetaImage {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_list<V: FromStr>(path: &Path, key: &str, raw: &str) -> Result<[V; 3]> {
    let vals: Vec<V> = raw
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(path, format!("{key}: cannot parse {t:?}"))))
        .collect::<Result<_>>()?;
    vals.try_into()
        .map_err(|_| err(path, format!("{key} must have 3 entries, got {raw:?}")))
}

fn is_true(v: &str) -> bool {
    v.eq_ignore_ascii_case("true") || v == "1"
}

/// Reads a 3D MetaImage; values are widened to `f32`.
pub fn read_metaimage(path: impl AsRef<Path>) -> Result<Volume> {
    read_metaimage_typed(path).map(|(v, _)| v)
}

/// Like [`read_metaimage`], also returning the stored element type.
pub fn read_metaimage_typed(path: impl AsRef<Path>) -> Result<(Volume, ElementType)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = HashMap::new();
    let mut pos = 0;
    let mut data_file = None;
    while pos < bytes.len() {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(bytes.len(), |i| pos + i + 1);
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| err(path, "header is not UTF-8"))?
            .trim();
        pos = end;
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(path, format!("malformed header line {line:?}")))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key == "ElementDataFile" {
            data_file = Some(value);
            break;
        }
        fields.insert(key, value);
    }
    let get = |k: &str| fields.get(k).map(String::as_str);
    let data_file = data_file.ok_or_else(|| err(path, "missing ElementDataFile"))?;

    if let Some(n) = get("NDims") {
        if n != "3" {
            return Err(err(path, format!("NDims must be 3, got {n}")));
        }
    } else {
        return Err(err(path, "missing NDims"));
    }
    if get("CompressedData").is_some_and(is_true) {
        return Err(err(path, "compressed data is not supported"));
    }
    for key in ["ElementByteOrderMSB", "BinaryDataByteOrderMSB"] {
        if get(key).is_some_and(is_true) {
            return Err(err(path, format!("{key} = True (big-endian) is not supported")));
        }
    }
    if let Some(c) = get("ElementNumberOfChannels") {
        if c != "1" {
            return Err(err(path, format!("only single-channel images are supported, got {c}")));
        }
    }
    let ty: ElementType = get("ElementType")
        .ok_or_else(|| err(path, "missing ElementType"))?
        .parse()
        .map_err(|m: String| err(path, m))?;
    let dims: [usize; 3] = parse_list(
        path,
        "DimSize",
        get("DimSize").ok_or_else(|| err(path, "missing DimSize"))?,
    )?;
    if dims.contains(&0) {
        return Err(err(path, format!("DimSize entries must be >= 1, got {dims:?}")));
    }
    let sp: [f64; 3] = match get("ElementSpacing").or(get("ElementSize")) {
        Some(raw) => parse_list(path, "ElementSpacing", raw)?,
        None => [1.0; 3],
    };
    let origin: [f64; 3] = match get("Offset").or(get("Origin")).or(get("Position")) {
        Some(raw) => parse_list(path, "Offset", raw)?,
        None => [0.0; 3],
    };

    let payload: std::borrow::Cow<[u8]> = if data_file == "LOCAL" {
        std::borrow::Cow::Borrowed(&bytes[pos..])
    } else {
        let raw_path = path.parent().unwrap_or(Path::new("")).join(&data_file);
        std::borrow::Cow::Owned(fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?)
    };
    let n: usize = dims.iter().product();
    let need = n * ty.size();
    if payload.len() != need {
        return Err(err(
            path,
            format!(
                "payload holds {} bytes but DimSize {dims:?} of {ty} needs {need}",
                payload.len()
            ),
        ));
    }
    let values = payload.chunks_exact(ty.size()).map(|b| ty.decode(b)).collect();
    let spacing = Spacing::new(sp[0], sp[1], sp[2]).map_err(|e| err(path, e.to_string()))?;
    let vol = Volume::new([dims[2], dims[1], dims[0]], spacing, values)?.with_origin(origin);
    Ok((vol, ty))
}

/// Path of the raw payload written next to `header`.
pub fn raw_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

/// Writes `volume` as `MET_FLOAT`.
pub fn write_metaimage(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_metaimage_as(volume, path, ElementType::Float)
}

/// Writes `volume` with the given element type. Integer types require every
/// value to be exactly representable.
pub fn write_metaimage_as(volume: &Volume, path: impl AsRef<Path>, ty: ElementType) -> Result<()> {
    let path = path.as_ref();
    let mut payload = Vec::with_capacity(volume.len() * ty.size());
    for &v in volume.values() {
        ty.encode(v, &mut payload)
            .ok_or_else(|| err(path, format!("value {v} is not representable as {ty}")))?;
    }
    let raw = raw_path(path);
    let raw_name = raw
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| err(path, "header path has no file name"))?;
    let [z, y, x] = volume.extents();
    let s = volume.spacing;
    let o = volume.origin;
    let header = format!(
        "ObjectType = Image\n\
         NDims = 3\n\
         BinaryData = True\n\
         BinaryDataByteOrderMSB = False\n\
         CompressedData = False\n\
         TransformMatrix = 1 0 0 0 1 0 0 0 1\n\
         Offset = {} {} {}\n\
         ElementSpacing = {} {} {}\n\
         DimSize = {x} {y} {z}\n\
         ElementType = {ty}\n\
         ElementDataFile = {raw_name}\n",
        o[0], o[1], o[2], s.x, s.y, s.z
    );
    fs::write(&raw, payload).map_err(|e| Error::io(&raw, e))?;
    fs::write(path, header).map_err(|e| Error::io(path, e))?;
    Ok(())
}
