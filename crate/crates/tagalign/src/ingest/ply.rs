//! PLY point clouds: `ascii 1.0` and `binary_little_endian 1.0` are read,
//! `binary_little_endian 1.0` is written.
//!
//! Only the `vertex` element is loaded. It must have `x`, `y`, `z` as
//! `float`/`double`; `red`, `green`, `blue` as `uchar` are picked up when all
//! three are present. Other scalar vertex properties are skipped. Elements
//! before `vertex` can be skipped when they hold only scalar properties (or
//! any properties in ascii files); elements after it are ignored.

use tagalign_core::{Point3, PointCloud};

use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List,
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, IngestError> {
    let malformed = |m: &str| IngestError::MalformedHeader(m.into());
    if !bytes.starts_with(b"ply") {
        return Err(malformed("missing `ply` magic"));
    }
    let mut offset = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("missing `end_header`"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| malformed("header is not UTF-8"))?
            .trim_end_matches('\r');
        offset += end + 1;
        if first {
            if line.trim() != "ply" {
                return Err(malformed("first line must be `ply`"));
            }
            first = false;
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let fmt = tokens.next().ok_or_else(|| malformed("empty format line"))?;
                let version = tokens.next().ok_or_else(|| malformed("format without version"))?;
                if version != "1.0" {
                    return Err(IngestError::UnsupportedFormat(format!("version {version}")));
                }
                encoding = Some(match fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    other => return Err(IngestError::UnsupportedFormat(other.into())),
                });
            }
            Some("element") => {
                let name = tokens.next().ok_or_else(|| malformed("element without name"))?;
                let count = tokens
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| malformed("element count is not a nonnegative integer"))?;
                elements.push(Element {
                    name: name.into(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed("property before any element"))?;
                let ty = tokens.next().ok_or_else(|| malformed("property without type"))?;
                if ty == "list" {
                    let (count_ty, item_ty) = (tokens.next(), tokens.next());
                    for t in [count_ty, item_ty] {
                        let t = t.ok_or_else(|| malformed("incomplete list property"))?;
                        ScalarType::parse(t)
                            .ok_or_else(|| IngestError::UnsupportedFormat(format!("property type `{t}`")))?;
                    }
                    element.properties.push(Property::List);
                } else {
                    let ty = ScalarType::parse(ty)
                        .ok_or_else(|| IngestError::UnsupportedFormat(format!("property type `{ty}`")))?;
                    let name = tokens.next().ok_or_else(|| malformed("property without name"))?;
                    element.properties.push(Property::Scalar { name: name.into(), ty });
                }
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(malformed(&format!("unknown keyword `{other}`"))),
        }
    }
    Ok(Header {
        encoding: encoding.ok_or_else(|| malformed("missing format line"))?,
        elements,
        body_offset: offset,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    types: Vec<ScalarType>,
}

fn vertex_layout(element: &Element) -> Result<VertexLayout, IngestError> {
    let mut types = Vec::new();
    let find = |name: &str| {
        element.properties.iter().position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
    };
    for p in &element.properties {
        match p {
            Property::Scalar { ty, .. } => types.push(*ty),
            Property::List => {
                return Err(IngestError::UnsupportedFormat("list property on vertex".into()))
            }
        }
    }
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(name).ok_or_else(|| IngestError::MalformedHeader(format!("vertex has no `{name}`")))?;
        if !matches!(types[*slot], ScalarType::F32 | ScalarType::F64) {
            return Err(IngestError::UnsupportedFormat(format!("`{name}` must be float or double")));
        }
    }
    let rgb = match (find("red"), find("green"), find("blue")) {
        (Some(r), Some(g), Some(b)) => {
            if [r, g, b].iter().any(|&i| types[i] != ScalarType::U8) {
                return Err(IngestError::UnsupportedFormat("colors must be uchar".into()));
            }
            Some([r, g, b])
        }
        _ => None,
    };
    Ok(VertexLayout { xyz, rgb, types })
}

fn finite_point(v: [f64; 3], index: usize) -> Result<Point3, IngestError> {
    Point3::try_new(v[0], v[1], v[2]).map_err(|_| IngestError::NonFinite(format!("vertex {index}")))
}

/// Reads the vertices of a PLY file.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud, IngestError> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| IngestError::MalformedHeader("no vertex element".into()))?;
    let vertex = &header.elements[vertex_pos];
    let layout = vertex_layout(vertex)?;
    let body = &bytes[header.body_offset..];

    let mut points = Vec::with_capacity(vertex.count);
    let mut colors = layout.rgb.map(|_| Vec::with_capacity(vertex.count));
    match header.encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body)
                .map_err(|_| IngestError::UnsupportedFormat("ascii body is not UTF-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for e in &header.elements[..vertex_pos] {
                for _ in 0..e.count {
                    lines.next().ok_or_else(|| IngestError::TruncatedBody(format!("element `{}`", e.name)))?;
                }
            }
            for i in 0..vertex.count {
                let line = lines
                    .next()
                    .ok_or_else(|| IngestError::TruncatedBody(format!("vertex {i} of {}", vertex.count)))?;
                let values: Vec<f64> = line
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| IngestError::TruncatedBody(format!("vertex {i}: non-numeric value")))?;
                if values.len() < layout.types.len() {
                    return Err(IngestError::TruncatedBody(format!("vertex {i}: too few values")));
                }
                points.push(finite_point(layout.xyz.map(|k| values[k]), i)?);
                if let (Some(rgb), Some(colors)) = (layout.rgb, colors.as_mut()) {
                    let mut c = [0u8; 3];
                    for (slot, k) in c.iter_mut().zip(rgb) {
                        let v = values[k];
                        if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                            return Err(IngestError::UnsupportedFormat(format!("vertex {i}: color {v}")));
                        }
                        *slot = v as u8;
                    }
                    colors.push(c);
                }
            }
        }
        Encoding::BinaryLittleEndian => {
            let mut offset = 0;
            for e in &header.elements[..vertex_pos] {
                let mut stride = 0;
                for p in &e.properties {
                    match p {
                        Property::Scalar { ty, .. } => stride += ty.size(),
                        Property::List => {
                            return Err(IngestError::UnsupportedFormat(format!(
                                "binary list element `{}` before vertex",
                                e.name
                            )))
                        }
                    }
                }
                offset += stride * e.count;
            }
            let offsets: Vec<usize> = layout
                .types
                .iter()
                .scan(0, |acc, t| {
                    let o = *acc;
                    *acc += t.size();
                    Some(o)
                })
                .collect();
            let stride: usize = layout.types.iter().map(|t| t.size()).sum();
            let needed = offset + stride * vertex.count;
            if body.len() < needed {
                return Err(IngestError::TruncatedBody(format!(
                    "need {needed} bytes, have {}",
                    body.len()
                )));
            }
            for i in 0..vertex.count {
                let rec = &body[offset + i * stride..offset + (i + 1) * stride];
                let read = |k: usize| layout.types[k].read_le(&rec[offsets[k]..]);
                points.push(finite_point(layout.xyz.map(read), i)?);
                if let (Some(rgb), Some(colors)) = (layout.rgb, colors.as_mut()) {
                    colors.push(rgb.map(|k| rec[offsets[k]]));
                }
            }
        }
    }
    Ok(PointCloud::new(points, colors).expect("one color per vertex"))
}

/// Writes a binary little-endian PLY with `float` coordinates and, when the
/// cloud has colors, `uchar` red/green/blue.
pub fn write_ply(cloud: &PointCloud) -> Vec<u8> {
    let mut header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n",
        cloud.len()
    );
    if cloud.colors().is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    header.push_str("end_header\n");
    let stride = if cloud.colors().is_some() { 15 } else { 12 };
    let mut out = Vec::with_capacity(header.len() + stride * cloud.len());
    out.extend_from_slice(header.as_bytes());
    for (i, p) in cloud.points().iter().enumerate() {
        for v in [p.x, p.y, p.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(colors) = cloud.colors() {
            out.extend_from_slice(&colors[i]);
        }
    }
    out
}
