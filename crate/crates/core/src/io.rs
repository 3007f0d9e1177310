//! XYZ and PLY point cloud files.
//!
//! XYZ: one point per line, 3 or 6 reals separated by whitespace and/or
//! commas; `#` starts a comment. PLY: `ascii 1.0` and
//! `binary_little_endian 1.0`, reading the `vertex` element's `x y z`,
//! optional `nx ny nz` and optional integer `label`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Xyz,
    Ply,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "csv" | "pts" => Some(Format::Xyz),
            "ply" => Some(Format::Ply),
            _ => None,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(Format::Xyz),
            "ply" => Ok(Format::Ply),
            other => Err(Error::invalid(format!("unknown format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    #[default]
    Ascii,
    BinaryLittleEndian,
}

/// Extra per-vertex scalar columns written after the geometry.
pub struct ExtraProperty<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

pub fn load_cloud<T: Real>(path: impl AsRef<Path>, format: Format) -> Result<PointCloud<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Xyz => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::parse(format!("offset {}", e.valid_up_to()), "invalid UTF-8"))?;
            parse_xyz(text)
        }
        Format::Ply => parse_ply(&bytes),
    }
}

pub fn save_cloud<T: Real>(
    cloud: &PointCloud<T>,
    path: impl AsRef<Path>,
    format: Format,
    encoding: PlyEncoding,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Xyz => format_xyz(cloud).into_bytes(),
        Format::Ply => encode_ply(cloud, encoding, &[])?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
}

pub fn parse_xyz<T: Real>(text: &str) -> Result<PointCloud<T>> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", lineno + 1);
        let mut vals = [0.0f64; 6];
        let mut count = 0;
        for field in split_fields(line) {
            if count == 6 {
                return Err(Error::parse(loc(), "more than 6 columns"));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(loc(), format!("cannot parse '{field}' as a real")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite(loc()));
            }
            vals[count] = v;
            count += 1;
        }
        if count != 3 && count != 6 {
            return Err(Error::parse(loc(), format!("expected 3 or 6 columns, found {count}")));
        }
        match columns {
            None => columns = Some(count),
            Some(c) if c != count => {
                return Err(Error::parse(loc(), format!("expected {c} columns, found {count}")))
            }
            _ => {}
        }
        positions.push(Point3::new(T::lit(vals[0]), T::lit(vals[1]), T::lit(vals[2])));
        if count == 6 {
            normals.push(Vector3::new(T::lit(vals[3]), T::lit(vals[4]), T::lit(vals[5])));
        }
    }
    let cloud = PointCloud::new(positions)?;
    if columns == Some(6) {
        cloud.with_normals(normals)
    } else {
        Ok(cloud)
    }
}

pub fn format_xyz<T: Real>(cloud: &PointCloud<T>) -> String {
    let mut out = String::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        // `{:?}` on f64 prints the shortest round-tripping representation
        let _ = write!(out, "{:?} {:?} {:?}", p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
        if let Some(ns) = cloud.normals() {
            let n = ns[i];
            let _ = write!(out, " {:?} {:?} {:?}", n.x.as_f64(), n.y.as_f64(), n.z.as_f64());
        }
        out.push('\n');
    }
    out
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
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            ScalarType::U32 => u32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            ScalarType::F32 => f32::from_le_bytes(b[..4].try_into().expect("4 bytes")) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[offset..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(format!("offset {offset}"), "unterminated PLY header"))?;
        let line = std::str::from_utf8(&rest[..end])
            .map_err(|_| Error::parse(format!("offset {offset}"), "non-ASCII PLY header"))?
            .trim_end_matches('\r')
            .trim()
            .to_string();
        offset += end + 1;
        let done = line == "end_header";
        lines.push(line);
        if done {
            break;
        }
    }
    if lines.first().map(String::as_str) != Some("ply") {
        return Err(Error::parse("line 1", "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let loc = || format!("header line {}", i + 1);
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["format", fmt, _version] => {
                binary = Some(match *fmt {
                    "ascii" => false,
                    "binary_little_endian" => true,
                    other => {
                        return Err(Error::parse(loc(), format!("unsupported PLY format '{other}'")))
                    }
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(loc(), "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", cty, ity, _name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(loc(), "property before element"))?;
                el.properties.push(Property::List {
                    count: ScalarType::parse(cty)
                        .ok_or_else(|| Error::parse(loc(), format!("unknown type '{cty}'")))?,
                    item: ScalarType::parse(ity)
                        .ok_or_else(|| Error::parse(loc(), format!("unknown type '{ity}'")))?,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(loc(), "property before element"))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty: ScalarType::parse(ty)
                        .ok_or_else(|| Error::parse(loc(), format!("unknown type '{ty}'")))?,
                });
            }
            _ => return Err(Error::parse(loc(), format!("unrecognized header line '{line}'"))),
        }
    }
    Ok(Header {
        binary: binary.ok_or_else(|| Error::parse("header", "missing format line"))?,
        elements,
        body_offset: offset,
    })
}

struct VertexColumns {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
    label: Option<usize>,
}

fn vertex_columns(el: &Element) -> Result<VertexColumns> {
    let find = |name: &str| {
        el.properties.iter().position(
            |p| matches!(p, Property::Scalar { name: n, .. } if n == name),
        )
    };
    let need = |name: &str| {
        find(name).ok_or_else(|| Error::parse("header", format!("vertex element lacks '{name}'")))
    };
    if el.properties.iter().any(|p| matches!(p, Property::List { .. })) {
        return Err(Error::parse("header", "list properties on vertices are not supported"));
    }
    let xyz = [need("x")?, need("y")?, need("z")?];
    let normal = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    Ok(VertexColumns {
        xyz,
        normal,
        label: find("label"),
    })
}

fn build_cloud<T: Real>(rows: &[Vec<f64>], cols: &VertexColumns) -> Result<PointCloud<T>> {
    let mut positions = Vec::with_capacity(rows.len());
    let mut normals = Vec::new();
    let mut labels = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vertex {i}")));
        }
        positions.push(Point3::new(
            T::lit(r[cols.xyz[0]]),
            T::lit(r[cols.xyz[1]]),
            T::lit(r[cols.xyz[2]]),
        ));
        if let Some(n) = cols.normal {
            normals.push(Vector3::new(T::lit(r[n[0]]), T::lit(r[n[1]]), T::lit(r[n[2]])));
        }
        if let Some(l) = cols.label {
            if r[l] < 0.0 {
                return Err(Error::parse(format!("vertex {i}"), "negative label"));
            }
            labels.push(r[l] as u32);
        }
    }
    let mut cloud = PointCloud::new(positions)?;
    if cols.normal.is_some() {
        cloud = cloud.with_normals(normals)?;
    }
    if cols.label.is_some() {
        cloud = cloud.with_labels(labels)?;
    }
    Ok(cloud)
}

pub fn parse_ply<T: Real>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let header = parse_header(bytes)?;
    let vidx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse("header", "no vertex element"))?;
    let vertex = &header.elements[vidx];
    let cols = vertex_columns(vertex)?;
    if vertex.count == 0 {
        return Err(Error::ZeroPoints);
    }
    let body = &bytes[header.body_offset..];
    let mut rows = Vec::with_capacity(vertex.count);
    if header.binary {
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            let s = body.get(*off..*off + n).ok_or_else(|| {
                Error::parse(format!("offset {}", header.body_offset + *off), "truncated binary body")
            })?;
            *off += n;
            Ok(s)
        };
        for el in &header.elements[..=vidx] {
            for _ in 0..el.count {
                let mut row = Vec::with_capacity(el.properties.len());
                for p in &el.properties {
                    match p {
                        Property::Scalar { ty, .. } => {
                            row.push(ty.read_le(take(&mut off, ty.size())?));
                        }
                        Property::List { count, item } => {
                            let n = count.read_le(take(&mut off, count.size())?) as usize;
                            take(&mut off, n * item.size())?;
                        }
                    }
                }
                if el.name == "vertex" {
                    rows.push(row);
                }
            }
        }
    } else {
        let text = std::str::from_utf8(body)
            .map_err(|e| Error::parse(format!("offset {}", header.body_offset + e.valid_up_to()), "invalid UTF-8"))?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        for el in &header.elements[..=vidx] {
            for _ in 0..el.count {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse("body", format!("missing rows for element '{}'", el.name)))?;
                if el.name != "vertex" {
                    continue;
                }
                let loc = || format!("body line {}", ln + 1);
                let row: Vec<f64> = line
                    .split_whitespace()
                    .map(|f| f.parse::<f64>().map_err(|_| Error::parse(loc(), format!("cannot parse '{f}'"))))
                    .collect::<Result<_>>()?;
                if row.len() != el.properties.len() {
                    return Err(Error::parse(
                        loc(),
                        format!("expected {} values, found {}", el.properties.len(), row.len()),
                    ));
                }
                rows.push(row);
            }
        }
    }
    build_cloud(&rows, &cols)
}

/// Encodes a cloud (with optional extra float properties) as PLY.
pub fn encode_ply<T: Real>(
    cloud: &PointCloud<T>,
    encoding: PlyEncoding,
    extras: &[ExtraProperty<'_>],
) -> Result<Vec<u8>> {
    for e in extras {
        if e.values.len() != cloud.len() {
            return Err(Error::LengthMismatch {
                expected: cloud.len(),
                actual: e.values.len(),
            });
        }
    }
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", cloud.len());
    for name in ["x", "y", "z"] {
        let _ = writeln!(header, "property double {name}");
    }
    if cloud.normals().is_some() {
        for name in ["nx", "ny", "nz"] {
            let _ = writeln!(header, "property double {name}");
        }
    }
    if cloud.labels().is_some() {
        header.push_str("property int label\n");
    }
    for e in extras {
        let _ = writeln!(header, "property double {}", e.name);
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        let mut vals = vec![p.x.as_f64(), p.y.as_f64(), p.z.as_f64()];
        if let Some(ns) = cloud.normals() {
            vals.extend([ns[i].x.as_f64(), ns[i].y.as_f64(), ns[i].z.as_f64()]);
        }
        let label = cloud.labels().map(|l| l[i]);
        match encoding {
            PlyEncoding::Ascii => {
                let mut line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
                if let Some(l) = label {
                    line.push(l.to_string());
                }
                line.extend(extras.iter().map(|e| format!("{:?}", e.values[i])));
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
            PlyEncoding::BinaryLittleEndian => {
                for v in &vals {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(l) = label {
                    out.extend_from_slice(&(l as i32).to_le_bytes());
                }
                for e in extras {
                    out.extend_from_slice(&e.values[i].to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Reads one non-negative integer label per line.
pub fn parse_labels(text: &str) -> Result<Vec<u32>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<u32>()
                .map_err(|_| Error::parse(format!("line {}", i + 1), format!("bad label '{}'", l.trim())))
        })
        .collect()
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u32>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn format_labels(labels: &[u32]) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(out, "{l}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_ascii() {
        let c: PointCloud<f64> = parse_xyz("0 0 0\n1 0 0").unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.normals().is_none());
        assert_eq!(c.point(1), &Point3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn normal_column_is_renormalized() {
        let c: PointCloud<f64> = parse_xyz("0 0 0 0 0 2\n").unwrap();
        assert_eq!(c.normals().unwrap()[0], Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn comma_separators() {
        let c: PointCloud<f64> = parse_xyz("1.5,2,3\n4, 5 ,6\n").unwrap();
        assert_eq!(c.point(1), &Point3::new(4.0, 5.0, 6.0));
    }

    #[test]
    fn empty_file_has_zero_points() {
        let err = parse_xyz::<f64>("").unwrap_err();
        assert!(matches!(err, Error::ZeroPoints));
        assert_eq!(err.to_string(), "zero points");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_xyz::<f64>("0 0 0\n1 x 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_xyz::<f64>("0 0 0\n1 0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(matches!(parse_xyz::<f64>("0 nan 0\n"), Err(Error::NonFinite(_))));
    }

    fn sample() -> PointCloud<f64> {
        PointCloud::from_slices(&[[0.1, 0.2, 0.3], [-1.0 / 3.0, 2.5e-7, 1e10], [0.0, -0.0, 7.0]])
            .unwrap()
            .with_normals(vec![
                Vector3::new(0.0, 0.0, 1.0),
                Vector3::new(0.6, 0.8, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
            ])
            .unwrap()
            .with_labels(vec![0, 3, 1])
            .unwrap()
    }

    #[test]
    fn ply_round_trips_bit_exactly() {
        let c = sample();
        for enc in [PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian] {
            let bytes = encode_ply(&c, enc, &[]).unwrap();
            let back: PointCloud<f64> = parse_ply(&bytes).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn ply_with_faces_and_float_properties() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n".to_vec();
        for v in [[1.0f32, 2.0, 3.0], [4.0, 5.0, 6.0]] {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(255);
        }
        bytes.push(3);
        for i in [0i32, 1, 0] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let c: PointCloud<f64> = parse_ply(&bytes).unwrap();
        assert_eq!(c.point(1), &Point3::new(4.0, 5.0, 6.0));
        assert!(c.normals().is_none());
    }

    #[test]
    fn ply_truncation_is_reported() {
        let bytes = encode_ply(&sample(), PlyEncoding::BinaryLittleEndian, &[]).unwrap();
        let err = parse_ply::<f64>(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn xyz_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = sample().without_normals();
        let c = PointCloud::new(c.positions().to_vec()).unwrap();
        let path = dir.path().join("c.xyz");
        save_cloud(&c, &path, Format::Xyz, PlyEncoding::Ascii).unwrap();
        let back: PointCloud<f64> = load_cloud(&path, Format::Xyz).unwrap();
        for (a, b) in c.positions().iter().zip(back.positions()) {
            assert!((a - b).norm() <= 1e-6 * a.coords.norm().max(1.0));
        }
    }

    #[test]
    fn labels_parse() {
        assert_eq!(parse_labels("0\n1\n\n2\n").unwrap(), vec![0, 1, 2]);
        assert!(parse_labels("0\n-1\n").is_err());
    }
}
