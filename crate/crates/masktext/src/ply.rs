//! PLY point clouds (ascii and binary little-endian).
//!
//! The `vertex` element must carry `x`, `y`, `z`; optional integer
//! properties `instance_id` and `semantic_id` become labels. Other elements
//! and properties (including lists) are parsed and discarded. Anything after
//! the last declared element is rejected.

use std::path::Path;

use masktext_core::PointCloud;

use crate::error::{read_bytes, write_bytes, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn err_at(path: &Path, offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::format(format!("PLY {}", path.display()), format!("{msg} at byte {offset}"))
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let mut pos = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let start = pos;
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|i| pos + i)
            .ok_or_else(|| err_at(path, start, "header ends before end_header"))?;
        pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| err_at(path, start, "header line is not UTF-8"))?
            .trim_end_matches('\r');
        let words: Vec<&str> = line.split_whitespace().collect();
        if first {
            if line != "ply" {
                return Err(err_at(path, start, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        match words.as_slice() {
            ["format", "ascii", "1.0"] => encoding = Some(Encoding::Ascii),
            ["format", "binary_little_endian", "1.0"] => encoding = Some(Encoding::BinaryLe),
            ["format", other, ..] => return Err(err_at(path, start, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| err_at(path, start, format!("bad element count '{count}'")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", count, item, _name] => {
                let el = elements.last_mut().ok_or_else(|| err_at(path, start, "property before any element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(err_at(path, start, "unknown list property type"));
                };
                if count.is_float() {
                    return Err(err_at(path, start, "list count type must be an integer"));
                }
                el.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| err_at(path, start, "property before any element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| err_at(path, start, format!("unknown property type '{ty}'")))?;
                el.properties.push(Property::Scalar { name: name.to_string(), ty });
            }
            ["end_header"] => break,
            _ => return Err(err_at(path, start, format!("unrecognized header line '{line}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| err_at(path, 0, "header has no format line"))?;
    Ok(Header { encoding, elements, body_offset: pos })
}

/// Column positions of the vertex properties this loader understands.
struct VertexLayout {
    xyz: [usize; 3],
    instance: Option<usize>,
    semantic: Option<usize>,
}

fn vertex_layout(el: &Element, path: &Path) -> Result<VertexLayout> {
    let find = |want: &str| {
        el.properties.iter().position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
    };
    let scalar_ty = |i: usize| match &el.properties[i] {
        Property::Scalar { ty, .. } => *ty,
        Property::List { .. } => unreachable!(),
    };
    let mut xyz = [0; 3];
    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
        let i = find(axis).ok_or_else(|| err_at(path, 0, format!("vertex element has no '{axis}' property")))?;
        if !scalar_ty(i).is_float() {
            return Err(err_at(path, 0, format!("vertex property '{axis}' must be float or double")));
        }
        *slot = i;
    }
    let label = |name: &str| -> Result<Option<usize>> {
        match find(name) {
            Some(i) if scalar_ty(i).is_float() => Err(err_at(path, 0, format!("'{name}' must be an integer property"))),
            other => Ok(other),
        }
    };
    Ok(VertexLayout { xyz, instance: label("instance_id")?, semantic: label("semantic_id")? })
}

#[derive(Default)]
struct Columns {
    points: Vec<[f64; 3]>,
    instance: Vec<i32>,
    semantic: Vec<i32>,
}

impl Columns {
    fn push_row(&mut self, row: &[f64], layout: &VertexLayout, path: &Path, offset: usize) -> Result<()> {
        self.points.push([row[layout.xyz[0]], row[layout.xyz[1]], row[layout.xyz[2]]]);
        let as_label = |v: f64| -> Result<i32> {
            if v >= i32::MIN as f64 && v <= i32::MAX as f64 {
                Ok(v as i32)
            } else {
                Err(err_at(path, offset, format!("label {v} does not fit in int32")))
            }
        };
        if let Some(i) = layout.instance {
            self.instance.push(as_label(row[i])?);
        }
        if let Some(i) = layout.semantic {
            self.semantic.push(as_label(row[i])?);
        }
        Ok(())
    }
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path, "point cloud")?;
    parse_ply(&bytes, path)
}

/// Parses PLY bytes; `path` only labels error messages.
pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PointCloud> {
    let header = parse_header(bytes, path)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| err_at(path, 0, "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vertex_idx], path)?;
    let mut cols = Columns::default();
    match header.encoding {
        Encoding::BinaryLe => read_binary(bytes, &header, vertex_idx, &layout, &mut cols, path)?,
        Encoding::Ascii => read_ascii(bytes, &header, vertex_idx, &layout, &mut cols, path)?,
    }
    let instance = layout.instance.map(|_| cols.instance);
    let semantic = layout.semantic.map(|_| cols.semantic);
    PointCloud::new(cols.points, instance, semantic)
        .map_err(|e| Error::from_core(format!("PLY {}", path.display()), e))
        .map_err(|e| match e {
            Error::Contract(m) => Error::format("PLY", m),
            other => other,
        })
}

fn read_binary(bytes: &[u8], header: &Header, vertex_idx: usize, layout: &VertexLayout, cols: &mut Columns, path: &Path) -> Result<()> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if bytes.len() - *pos < n {
            return Err(err_at(path, *pos, "truncated payload"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let mut row = Vec::new();
    for (ei, el) in header.elements.iter().enumerate() {
        for _ in 0..el.count {
            let row_start = pos;
            row.clear();
            for prop in &el.properties {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let b = take(&mut pos, ty.size())?;
                        row.push(ty.decode_le(b));
                    }
                    Property::List { count, item } => {
                        let n = count.decode_le(take(&mut pos, count.size())?);
                        if n < 0.0 {
                            return Err(err_at(path, pos, "negative list length"));
                        }
                        take(&mut pos, n as usize * item.size())?;
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_idx {
                cols.push_row(&row, layout, path, row_start)?;
            }
        }
    }
    if pos != bytes.len() {
        return Err(err_at(path, pos, format!("{} bytes of trailing data", bytes.len() - pos)));
    }
    Ok(())
}

fn read_ascii(bytes: &[u8], header: &Header, vertex_idx: usize, layout: &VertexLayout, cols: &mut Columns, path: &Path) -> Result<()> {
    let body = std::str::from_utf8(&bytes[header.body_offset..])
        .map_err(|e| err_at(path, header.body_offset + e.valid_up_to(), "ascii body is not UTF-8"))?;
    let mut tokens = body.split_ascii_whitespace().map(|t| {
        // byte offset of the token within the file
        let off = header.body_offset + (t.as_ptr() as usize - body.as_ptr() as usize);
        (t, off)
    });
    let mut next_number = |ty: Scalar| -> Result<(f64, usize)> {
        let end = bytes.len();
        let (t, off) = tokens.next().ok_or_else(|| err_at(path, end, "truncated payload"))?;
        let v: f64 = match ty {
            Scalar::F32 => t.parse::<f32>().map(f64::from).map_err(|_| err_at(path, off, format!("bad number '{t}'")))?,
            Scalar::F64 => t.parse().map_err(|_| err_at(path, off, format!("bad number '{t}'")))?,
            _ => t.parse::<i64>().map(|v| v as f64).map_err(|_| err_at(path, off, format!("bad integer '{t}'")))?,
        };
        Ok((v, off))
    };
    let mut row = Vec::new();
    for (ei, el) in header.elements.iter().enumerate() {
        for _ in 0..el.count {
            row.clear();
            let mut row_start = None;
            for prop in &el.properties {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let (v, off) = next_number(*ty)?;
                        row_start.get_or_insert(off);
                        row.push(v);
                    }
                    Property::List { count, item } => {
                        let (n, off) = next_number(*count)?;
                        row_start.get_or_insert(off);
                        if n < 0.0 {
                            return Err(err_at(path, off, "negative list length"));
                        }
                        for _ in 0..n as usize {
                            next_number(*item)?;
                        }
                        row.push(f64::NAN);
                    }
                }
            }
            if ei == vertex_idx {
                cols.push_row(&row, layout, path, row_start.unwrap_or(header.body_offset))?;
            }
        }
    }
    if let Some((t, off)) = tokens.next() {
        return Err(err_at(path, off, format!("trailing data '{t}'")));
    }
    Ok(())
}

/// Serializes a cloud with float32 coordinates and int32 labels.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    out.extend_from_slice(format!("ply\nformat {fmt} 1.0\nelement vertex {}\n", cloud.len()).as_bytes());
    out.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
    let labels: Vec<&[i32]> = [cloud.instance_id(), cloud.semantic_id()].into_iter().flatten().collect();
    if cloud.instance_id().is_some() {
        out.extend_from_slice(b"property int instance_id\n");
    }
    if cloud.semantic_id().is_some() {
        out.extend_from_slice(b"property int semantic_id\n");
    }
    out.extend_from_slice(b"end_header\n");
    for (i, p) in cloud.points().iter().enumerate() {
        match format {
            PlyFormat::BinaryLittleEndian => {
                for c in p {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
                for l in &labels {
                    out.extend_from_slice(&l[i].to_le_bytes());
                }
            }
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32);
                for l in &labels {
                    line.push_str(&format!(" {}", l[i]));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    write_bytes(path, &encode_ply(cloud, format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(bytes: &[u8]) -> Result<PointCloud> {
        parse_ply(bytes, Path::new("test.ply"))
    }

    fn offset_of(err: Error) -> String {
        err.to_string()
    }

    #[test]
    fn ascii_fixture() {
        let text = b"ply\nformat ascii 1.0\ncomment three points\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0.5 -2\n3e-1 4 5\n";
        let c = parse(text).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.points()[2], [0.3f32 as f64, 4.0, 5.0]);
        assert_eq!(c.points()[1], [1.0, 0.5, -2.0]);
        assert!(c.instance_id().is_none() && c.semantic_id().is_none());
    }

    #[test]
    fn binary_with_labels_and_extra_elements() {
        let mut b = b"ply\r\nformat binary_little_endian 1.0\r\nelement vertex 2\r\nproperty float x\r\nproperty float y\r\nproperty float z\r\nproperty uchar red\r\nproperty int instance_id\r\nelement face 1\r\nproperty list uchar int vertex_indices\r\nend_header\r\n".to_vec();
        for (xyz, red, inst) in [([1.0f32, 2.0, 3.0], 9u8, 7i32), ([4.0, 5.0, 6.0], 1, -1)] {
            xyz.iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
            b.push(red);
            b.extend_from_slice(&inst.to_le_bytes());
        }
        b.push(3);
        [0i32, 1, 1].iter().for_each(|v| b.extend_from_slice(&v.to_le_bytes()));
        let c = parse(&b).unwrap();
        assert_eq!(c.points(), &[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(c.instance_id(), Some(&[7, -1][..]));
        b.push(0);
        assert!(offset_of(parse(&b).unwrap_err()).contains("trailing"));
    }

    #[test]
    fn errors_carry_byte_offsets() {
        let missing_z = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n";
        assert!(offset_of(parse(missing_z).unwrap_err()).contains("'z'"));
        let bad = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 zz 0\n";
        let e = parse(bad).unwrap_err();
        let at = bad.windows(2).position(|w| w == b"zz").unwrap();
        assert!(e.to_string().contains(&format!("at byte {at}")), "{e}");
        assert_eq!(e.exit_code(), 2);
        let big_endian = b"ply\nformat binary_big_endian 1.0\nend_header\n";
        assert!(parse(big_endian).is_err());
        assert!(parse(b"plx\n").is_err());
        let truncated = b"ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n\0\0\0\0";
        assert!(offset_of(parse(truncated).unwrap_err()).contains("truncated payload at byte"));
    }

    #[test]
    fn label_properties_must_be_integers() {
        let text = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nproperty float semantic_id\nend_header\n0 0 0 1\n";
        assert!(parse(text).is_err());
    }
}
