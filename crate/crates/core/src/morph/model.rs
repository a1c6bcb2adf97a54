//! Linear morphable face model and its binary container.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::rng;

const MAGIC: &[u8; 4] = b"GPMM";
const VERSION: u32 = 1;

/// `s = mean + B_S √Λ_S α + B_E √Λ_E β` over a fixed vertex ordering, with the
/// shape vector laid out as `x1 y1 z1 x2 y2 z2 ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    pub mean: DVector<f64>,
    pub shape_basis: DMatrix<f64>,
    pub shape_var: DVector<f64>,
    pub expr_basis: DMatrix<f64>,
    pub expr_var: DVector<f64>,
    pub nose_tip_vertex: usize,
}

impl MorphableModel {
    pub fn n_vertices(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.ncols()
    }

    pub fn expr_dim(&self) -> usize {
        self.expr_basis.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.mean.len();
        if len == 0 || len % 3 != 0 {
            return Err(Error::invalid("mean length must be a positive multiple of 3"));
        }
        if self.shape_dim() == 0 || self.expr_dim() == 0 {
            return Err(Error::invalid("basis dimensions must be at least 1"));
        }
        if self.shape_basis.nrows() != len || self.expr_basis.nrows() != len {
            return Err(Error::invalid("basis row count differs from mean length"));
        }
        if self.shape_var.len() != self.shape_dim() || self.expr_var.len() != self.expr_dim() {
            return Err(Error::invalid("variance length differs from basis width"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.mean.as_slice())
            || !finite(self.shape_basis.as_slice())
            || !finite(self.expr_basis.as_slice())
        {
            return Err(Error::invalid("model contains non-finite entries"));
        }
        if self.shape_var.iter().chain(self.expr_var.iter()).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("variances must be finite and nonnegative"));
        }
        if self.nose_tip_vertex >= self.n_vertices() {
            return Err(Error::invalid("nose tip vertex out of range"));
        }
        Ok(())
    }

    /// Shape vector for the given coefficients.
    pub fn shape_vector(&self, alpha: &[f64], beta: &[f64]) -> Result<DVector<f64>> {
        if alpha.len() != self.shape_dim() || beta.len() != self.expr_dim() {
            return Err(Error::invalid(format!(
                "coefficient lengths ({}, {}) do not match model dims ({}, {})",
                alpha.len(),
                beta.len(),
                self.shape_dim(),
                self.expr_dim()
            )));
        }
        let a = DVector::from_iterator(
            alpha.len(),
            alpha.iter().zip(self.shape_var.iter()).map(|(a, v)| a * v.sqrt()),
        );
        let b = DVector::from_iterator(
            beta.len(),
            beta.iter().zip(self.expr_var.iter()).map(|(b, v)| b * v.sqrt()),
        );
        let mut s = self.mean.clone();
        s.gemv(1.0, &self.shape_basis, &a, 1.0);
        s.gemv(1.0, &self.expr_basis, &b, 1.0);
        Ok(s)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * (self.mean.len() * (1 + self.shape_dim() + self.expr_dim())));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.n_vertices() as u32, self.shape_dim() as u32, self.expr_dim() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let put = |out: &mut Vec<u8>, xs: &[f64]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(&mut out, self.mean.as_slice());
        put(&mut out, self.shape_basis.as_slice());
        put(&mut out, self.shape_var.as_slice());
        put(&mut out, self.expr_basis.as_slice());
        put(&mut out, self.expr_var.as_slice());
        out.extend_from_slice(&(self.nose_tip_vertex as u32).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ModelReader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(r.error(0, "bad magic, expected GPMM"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.error(4, format!("unsupported version {version}")));
        }
        let n = r.u32("vertex count")? as usize;
        let ds = r.u32("shape dimension")? as usize;
        let de = r.u32("expression dimension")? as usize;
        if n == 0 {
            return Err(r.error(8, "vertex count is zero"));
        }
        if ds == 0 {
            return Err(r.error(12, "shape dimension is zero"));
        }
        if de == 0 {
            return Err(r.error(16, "expression dimension is zero"));
        }
        let len = 3 * n;
        let mean = r.f64s(len, "mean")?;
        let shape_basis = r.f64s(len * ds, "shape basis")?;
        let shape_var = r.f64s(ds, "shape variances")?;
        let expr_basis = r.f64s(len * de, "expression basis")?;
        let expr_var = r.f64s(de, "expression variances")?;
        let nose_off = r.pos;
        let nose = r.u32("nose tip vertex")? as usize;
        if r.pos != bytes.len() {
            return Err(r.error(r.pos as u64, "trailing bytes after nose tip vertex"));
        }
        if nose >= n {
            return Err(r.error(nose_off as u64, format!("nose tip vertex {nose} >= vertex count {n}")));
        }
        for (v, name) in [(&shape_var, "shape variances"), (&expr_var, "expression variances")] {
            if v.iter().any(|x| *x < 0.0) {
                return Err(Error::ModelFormat {
                    offset: 0,
                    message: format!("negative entry in {name}"),
                });
            }
        }
        Ok(MorphableModel {
            mean: DVector::from_vec(mean),
            shape_basis: DMatrix::from_vec(len, ds, shape_basis),
            shape_var: DVector::from_vec(shape_var),
            expr_basis: DMatrix::from_vec(len, de, expr_basis),
            expr_var: DVector::from_vec(expr_var),
            nose_tip_vertex: nose,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Reads a model from a container file.
pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel> {
    MorphableModel::load(path)
}

struct ModelReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ModelReader<'_> {
    fn error(&self, offset: u64, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            offset,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(
                self.pos as u64,
                format!(
                    "file ends inside {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let start = self.pos;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.error(start as u64, "size overflow"))?, what)?;
        let vals: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(self.error((start + 8 * i) as u64, format!("non-finite value in {what}")));
        }
        Ok(vals)
    }
}

/// Per-vertex RMS displacement (mm) of the leading shape and expression modes
/// of the toy model; later modes decay geometrically.
pub const TOY_SHAPE_MM: f64 = 8.0;
pub const TOY_EXPR_MM: f64 = 2.0;
const TOY_DECAY: f64 = 0.75;

/// Height of the toy face surface at `(x, y)`: an ellipsoidal cap with a
/// nose ridge, eye sockets and a mouth groove. The apex sits at the origin of
/// the parameter plane.
fn toy_height(x: f64, y: f64) -> f64 {
    let cap = 40.0 * (1.0 - (x / 85.0).powi(2) - (y / 105.0).powi(2)).max(0.0).sqrt();
    let sy = if y > 0.0 { 22.0 } else { 10.0 };
    let nose = 15.0 * (-(x * x) / (2.0 * 9.0 * 9.0) - (y * y) / (2.0 * sy * sy)).exp();
    let eye = |cx: f64| -8.0 * (-((x - cx).powi(2) + (y - 25.0).powi(2)) / (2.0 * 100.0)).exp();
    let mouth = -3.0 * (-(x * x) / (2.0 * 18.0 * 18.0) - (y + 35.0).powi(2) / 50.0).exp();
    cap + nose + eye(30.0) + eye(-30.0) + mouth
}

/// Procedural stand-in for a learned face model.
///
/// The mean is a head-like height field sampled on a golden-angle spiral
/// over an elliptical face region, vertex 0 being the nose apex. Basis columns
/// are smooth random displacement fields with their rigid-motion component
/// removed, jointly orthonormalized (shape and expression columns are mutually
/// orthogonal as well).
pub fn make_toy_model(n_vertices: usize, shape_dim: usize, expr_dim: usize, seed: u64) -> Result<MorphableModel> {
    if n_vertices < 100 {
        return Err(Error::invalid("toy model needs at least 100 vertices"));
    }
    if shape_dim == 0 || expr_dim == 0 || shape_dim + expr_dim > 3 * n_vertices {
        return Err(Error::invalid("toy model basis dimensions out of range"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let uv: Vec<(f64, f64)> = (0..n_vertices)
        .map(|i| {
            let r = (i as f64 / n_vertices as f64).sqrt();
            let t = i as f64 * golden;
            (50.0 * r * t.cos(), 65.0 * r * t.sin())
        })
        .collect();
    let mean = DVector::from_iterator(
        3 * n_vertices,
        uv.iter().flat_map(|&(x, y)| [x, y, toy_height(x, y)]),
    );

    let mut rng = rng::stream(seed, &[0x70_79]);
    let len = 3 * n_vertices;
    let mut raw = DMatrix::<f64>::zeros(len, shape_dim + expr_dim);
    for c in 0..shape_dim + expr_dim {
        let expression = c >= shape_dim;
        let waves: Vec<([f64; 3], f64, f64, f64)> = (0..4)
            .map(|_| {
                let amp = [0, 1, 2].map(|_| rng.sample::<f64, _>(StandardNormal));
                let cycles = rng.random_range(1.0..2.5) * 2.0 * PI / 180.0;
                let dir = rng.random_range(0.0..PI);
                let (kx, ky) = (cycles * dir.cos(), cycles * dir.sin());
                let phase = rng.random_range(0.0..2.0 * PI);
                (amp, kx, ky, phase)
            })
            .collect();
        for (v, &(x, y)) in uv.iter().enumerate() {
            let mask = if expression {
                (-(y + 35.0).powi(2) / (2.0 * 30.0 * 30.0)).exp()
                    + 0.5 * (-(y - 30.0).powi(2) / (2.0 * 20.0 * 20.0)).exp()
            } else {
                1.0
            };
            for (amp, kx, ky, phase) in &waves {
                let w = mask * (kx * x + ky * y + phase).cos();
                for a in 0..3 {
                    raw[(3 * v + a, c)] += amp[a] * w;
                }
            }
        }
    }
    let rigid = rigid_motions(&mean).qr().q();
    let raw = &raw - &rigid * (rigid.transpose() * &raw);
    let q = raw.qr().q();
    let shape_basis = q.columns(0, shape_dim).into_owned();
    let expr_basis = q.columns(shape_dim, expr_dim).into_owned();
    let scale = n_vertices as f64;
    let var = |lead: f64, d: usize| {
        DVector::from_iterator(d, (0..d).map(|i| (lead * TOY_DECAY.powi(i as i32)).powi(2) * scale))
    };
    let model = MorphableModel {
        mean,
        shape_basis,
        shape_var: var(TOY_SHAPE_MM, shape_dim),
        expr_basis,
        expr_var: var(TOY_EXPR_MM, expr_dim),
        nose_tip_vertex: 0,
    };
    model.validate()?;
    Ok(model)
}

/// Infinitesimal rigid motions of a `3N` shape: three translations and three
/// rotations about the origin.
fn rigid_motions(s: &DVector<f64>) -> DMatrix<f64> {
    let n = s.len() / 3;
    let mut m = DMatrix::<f64>::zeros(3 * n, 6);
    for v in 0..n {
        let (x, y, z) = (s[3 * v], s[3 * v + 1], s[3 * v + 2]);
        let rot = [[0.0, z, -y], [-z, 0.0, x], [y, -x, 0.0]];
        for a in 0..3 {
            m[(3 * v + a, a)] = 1.0;
            for (k, r) in rot.iter().enumerate() {
                m[(3 * v + a, 3 + k)] = r[a];
            }
        }
    }
    m
}

/// Reshapes a `3N` shape vector into a point cloud with the model's nose tip.
pub fn vector_to_cloud(model: &MorphableModel, s: &DVector<f64>) -> PointCloud {
    let points: Vec<Point3> = s
        .as_slice()
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    let nose = points[model.nose_tip_vertex];
    PointCloud::new(points).with_nose_tip(nose)
}
