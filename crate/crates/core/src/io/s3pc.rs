//! `S3PC` point-cloud container.
//!
//! Little-endian: magic `S3PC`, `u32` version, `u32` point count, `u32`
//! flags, then `f32` xyz for every point followed by the optional blocks in
//! flag order: normals (xyz per point), eigenvalues (one per point), nose
//! tip (xyz), labels (identity then expression, each a `u8` presence byte and
//! a `u32`-prefixed UTF-8 string).

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

const MAGIC: &[u8; 4] = b"S3PC";
const VERSION: u32 = 1;

pub const HAS_NORMALS: u32 = 1;
pub const HAS_EIGENVALUES: u32 = 1 << 1;
pub const HAS_NOSE_TIP: u32 = 1 << 2;
pub const HAS_LABELS: u32 = 1 << 3;

pub fn flags_of(cloud: &PointCloud) -> u32 {
    let mut f = 0;
    if cloud.normals.is_some() {
        f |= HAS_NORMALS;
    }
    if cloud.eigenvalues.is_some() {
        f |= HAS_EIGENVALUES;
    }
    if cloud.nose_tip.is_some() {
        f |= HAS_NOSE_TIP;
    }
    if cloud.id_label.is_some() || cloud.expr_label.is_some() {
        f |= HAS_LABELS;
    }
    f
}

fn put_xyz(out: &mut Vec<u8>, p: &Point3) {
    for c in p {
        out.extend_from_slice(&(*c as f32).to_le_bytes());
    }
}

fn put_label(out: &mut Vec<u8>, label: &Option<String>) {
    match label {
        Some(s) => {
            out.push(1);
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        None => out.push(0),
    }
}

pub fn to_bytes(cloud: &PointCloud) -> Result<Vec<u8>> {
    cloud.validate()?;
    let flags = flags_of(cloud);
    let mut out = Vec::with_capacity(16 + cloud.len() * 28);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    cloud.points.iter().for_each(|p| put_xyz(&mut out, p));
    if let Some(n) = &cloud.normals {
        n.iter().for_each(|p| put_xyz(&mut out, p));
    }
    if let Some(e) = &cloud.eigenvalues {
        e.iter()
            .for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes()));
    }
    if let Some(t) = &cloud.nose_tip {
        put_xyz(&mut out, t);
    }
    if flags & HAS_LABELS != 0 {
        put_label(&mut out, &cloud.id_label);
        put_label(&mut out, &cloud.expr_label);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} remain",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(4).ok_or_else(|| self.err("size overflow"))?;
        let start = self.pos;
        let raw = self.take(len, what)?;
        let vals: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format {
                offset: (start + 4 * i) as u64,
                message: format!("non-finite value in {what}"),
            });
        }
        Ok(vals)
    }

    fn xyz(&mut self, n: usize, what: &str) -> Result<Vec<Point3>> {
        Ok(self
            .f32s(n * 3, what)?
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect())
    }

    fn label(&mut self, what: &str) -> Result<Option<String>> {
        match self.take(1, what)?[0] {
            0 => Ok(None),
            1 => {
                let len = self.u32(what)? as usize;
                let start = self.pos;
                let raw = self.take(len, what)?.to_vec();
                String::from_utf8(raw).map(Some).map_err(|_| Error::Format {
                    offset: start as u64,
                    message: format!("{what} is not UTF-8"),
                })
            }
            b => Err(self.err(format!("bad presence byte {b} for {what}"))),
        }
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "not an S3PC file".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let n = r.u32("point count")? as usize;
    let flags = r.u32("flags")?;
    if flags & !(HAS_NORMALS | HAS_EIGENVALUES | HAS_NOSE_TIP | HAS_LABELS) != 0 {
        return Err(Error::Format {
            offset: 12,
            message: format!("unknown flag bits {flags:#x}"),
        });
    }
    let mut cloud = PointCloud::new(r.xyz(n, "points")?);
    if flags & HAS_NORMALS != 0 {
        cloud.normals = Some(r.xyz(n, "normals")?);
    }
    if flags & HAS_EIGENVALUES != 0 {
        cloud.eigenvalues = Some(r.f32s(n, "eigenvalues")?);
    }
    if flags & HAS_NOSE_TIP != 0 {
        cloud.nose_tip = Some(r.xyz(1, "nose tip")?[0]);
    }
    if flags & HAS_LABELS != 0 {
        cloud.id_label = r.label("identity label")?;
        cloud.expr_label = r.label("expression label")?;
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(cloud)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(cloud)?).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Rounds every stored quantity to `f32`, the precision kept on disk.
pub fn quantize(cloud: &PointCloud) -> PointCloud {
    let q = |v: f64| v as f32 as f64;
    let qp = |p: &Point3| p.map(q);
    PointCloud {
        points: cloud.points.iter().map(qp).collect(),
        normals: cloud.normals.as_ref().map(|n| n.iter().map(qp).collect()),
        eigenvalues: cloud.eigenvalues.as_ref().map(|e| e.iter().map(|v| q(*v)).collect()),
        nose_tip: cloud.nose_tip.as_ref().map(qp),
        id_label: cloud.id_label.clone(),
        expr_label: cloud.expr_label.clone(),
    }
}
