//! PLY import (ASCII and binary little-endian vertex data).

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SpatialIndex};
use crate::net::nose_tip_heuristic;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn read(self, b: &[u8]) -> f64 {
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
    Scalar(String, Scalar),
    List(String),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    /// Byte offset of the body.
    body: usize,
    /// Line number of the first body line.
    body_line: usize,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut line_no = 0;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(line_no + 1, "header is not terminated by end_header"))?;
        line_no += 1;
        let raw = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_err(line_no, "header is not ASCII"))?
            .trim_end_matches('\r');
        pos += end + 1;
        let words: Vec<&str> = raw.split_whitespace().collect();
        if line_no == 1 {
            if raw.trim() != "ply" {
                return Err(parse_err(1, "missing 'ply' magic"));
            }
            continue;
        }
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => {
                        return Err(parse_err(line_no, format!("unsupported format {other}")));
                    }
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad element count {count}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", _, _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before any element"))?;
                el.props.push(Property::List(name.to_string()));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(line_no, format!("unknown property type {ty}")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(line_no, "property before any element"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(parse_err(line_no, format!("unrecognized header line '{raw}'"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(line_no, "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body: pos,
        body_line: line_no + 1,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    normal: Option<[usize; 3]>,
}

fn vertex_layout(el: &Element) -> Result<VertexLayout> {
    let find = |name: &str| {
        el.props
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, _) if n == name))
    };
    let xyz = match (find("x"), find("y"), find("z")) {
        (Some(x), Some(y), Some(z)) => [x, y, z],
        _ => {
            return Err(Error::Format {
                offset: 0,
                message: "vertex element lacks x, y and z properties".into(),
            })
        }
    };
    let normal = match (find("nx"), find("ny"), find("nz")) {
        (Some(x), Some(y), Some(z)) => Some([x, y, z]),
        _ => None,
    };
    Ok(VertexLayout { xyz, normal })
}

/// Parses PLY bytes into a cloud in the file's units.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vi = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::Format {
            offset: header.body as u64,
            message: "no vertex element".into(),
        })?;
    let vertex = &header.elements[vi];
    let layout = vertex_layout(vertex)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(vertex.count);
    match header.encoding {
        Encoding::Ascii => {
            let body = std::str::from_utf8(&bytes[header.body..])
                .map_err(|_| parse_err(header.body_line, "ASCII body is not UTF-8"))?;
            let mut lines = body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for el in &header.elements[..=vi] {
                for _ in 0..el.count {
                    let (i, line) = lines.next().ok_or_else(|| {
                        parse_err(header.body_line + body.lines().count(), "file ends before all elements")
                    })?;
                    if el.name != "vertex" {
                        continue;
                    }
                    let line_no = header.body_line + i;
                    let vals: Vec<f64> = line
                        .split_whitespace()
                        .map(|w| w.parse::<f64>().map_err(|_| parse_err(line_no, format!("bad number '{w}'"))))
                        .collect::<Result<_>>()?;
                    if vals.len() != el.props.len() {
                        return Err(parse_err(
                            line_no,
                            format!("expected {} values, found {}", el.props.len(), vals.len()),
                        ));
                    }
                    rows.push(vals);
                }
            }
        }
        Encoding::BinaryLe => {
            let mut pos = header.body;
            for el in &header.elements[..=vi] {
                let sizes: Vec<(Scalar, usize)> = el
                    .props
                    .iter()
                    .map(|p| match p {
                        Property::Scalar(_, t) => Ok((*t, t.size())),
                        Property::List(n) => Err(Error::Format {
                            offset: pos as u64,
                            message: format!(
                                "list property {n} in element {} before the vertex data",
                                el.name
                            ),
                        }),
                    })
                    .collect::<Result<_>>()?;
                let stride: usize = sizes.iter().map(|s| s.1).sum();
                let need = stride.checked_mul(el.count).ok_or_else(|| Error::Format {
                    offset: pos as u64,
                    message: "element size overflows".into(),
                })?;
                if bytes.len() - pos < need {
                    return Err(Error::Format {
                        offset: bytes.len() as u64,
                        message: format!("file ends inside element {}", el.name),
                    });
                }
                if el.name == "vertex" {
                    for r in 0..el.count {
                        let mut off = pos + r * stride;
                        let mut vals = Vec::with_capacity(sizes.len());
                        for (t, s) in &sizes {
                            vals.push(t.read(&bytes[off..off + s]));
                            off += s;
                        }
                        rows.push(vals);
                    }
                }
                pos += need;
            }
        }
    }
    let pick = |row: &[f64], idx: [usize; 3]| -> Point3 { [row[idx[0]], row[idx[1]], row[idx[2]]] };
    let points: Vec<Point3> = rows.iter().map(|r| pick(r, layout.xyz)).collect();
    let mut cloud = PointCloud::new(points);
    if let Some(n) = layout.normal {
        cloud.normals = Some(rows.iter().map(|r| pick(r, n)).collect());
    }
    Ok(cloud)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportOptions {
    /// Multiplies coordinates (e.g. 1000 for meter input).
    pub scale: f64,
    pub nose_tip: Option<Point3>,
    /// Use the max-z point after centering when no nose tip is given.
    pub nose_heuristic: bool,
    /// Statistical outlier removal: `(k, std_ratio)`.
    pub outlier_filter: Option<(usize, f64)>,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            nose_tip: None,
            nose_heuristic: false,
            outlier_filter: None,
        }
    }
}

/// Drops points whose mean distance to their `k` nearest neighbors exceeds
/// the cloud average by more than `std_ratio` standard deviations.
pub fn remove_outliers(cloud: &PointCloud, k: usize, std_ratio: f64) -> Result<PointCloud> {
    if k == 0 || cloud.len() <= k {
        return Ok(cloud.clone());
    }
    let index = SpatialIndex::build(&cloud.points)?;
    let mean_d: Vec<f64> = cloud
        .points
        .iter()
        .map(|p| {
            let nn = index.k_nearest(p, k + 1);
            nn.iter().skip(1).map(|n| n.dist_sq.sqrt()).sum::<f64>() / k as f64
        })
        .collect();
    let n = mean_d.len() as f64;
    let mu = mean_d.iter().sum::<f64>() / n;
    let sd = (mean_d.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / n).sqrt();
    let keep: Vec<usize> = (0..cloud.len())
        .filter(|&i| mean_d[i] <= mu + std_ratio * sd)
        .collect();
    Ok(cloud.select(&keep))
}

pub fn import_ply_bytes(bytes: &[u8], opts: &ImportOptions) -> Result<PointCloud> {
    if !(opts.scale > 0.0 && opts.scale.is_finite()) {
        return Err(Error::invalid("scale must be positive"));
    }
    let mut cloud = parse_ply(bytes)?;
    if cloud.is_empty() {
        return Err(Error::Format {
            offset: 0,
            message: "PLY has no vertices".into(),
        });
    }
    if opts.scale != 1.0 {
        cloud.points.iter_mut().for_each(|p| p.iter_mut().for_each(|c| *c *= opts.scale));
    }
    if let Some((k, ratio)) = opts.outlier_filter {
        cloud = remove_outliers(&cloud, k, ratio)?;
    }
    if let Some(t) = opts.nose_tip {
        cloud.nose_tip = Some(t);
    } else if opts.nose_heuristic {
        cloud.nose_tip = Some(nose_tip_heuristic(&cloud)?);
    }
    cloud.validate()?;
    Ok(cloud)
}

pub fn import_ply(path: impl AsRef<Path>, opts: &ImportOptions) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    import_ply_bytes(&bytes, opts)
}
