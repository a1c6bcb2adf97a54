//! Random face synthesis with pose and noise augmentation.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::{vector_to_cloud, MorphableModel};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
    /// Per-coordinate Gaussian noise (mm).
    pub sigma_delta: f64,
    /// Maximum |yaw|, |pitch|, |roll| in degrees.
    pub rotation_limits: [f64; 3],
    /// Fitted real-scan expression coefficients to guide expression draws.
    pub guided_pool: Vec<Vec<f64>>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            sigma_alpha: 1.0,
            sigma_beta: 1.0,
            sigma_delta: 0.3,
            rotation_limits: [20.0; 3],
            guided_pool: Vec::new(),
        }
    }
}

impl GenParams {
    /// All randomness switched off.
    pub fn deterministic() -> Self {
        Self {
            sigma_alpha: 0.0,
            sigma_beta: 0.0,
            sigma_delta: 0.0,
            rotation_limits: [0.0; 3],
            guided_pool: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_beta", self.sigma_beta),
            ("sigma_delta", self.sigma_delta),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0")));
            }
        }
        if self.rotation_limits.iter().any(|l| !(0.0..90.0).contains(l)) {
            return Err(Error::invalid("rotation limits must lie in [0, 90) degrees"));
        }
        Ok(())
    }

    fn check_pool(&self, model: &MorphableModel) -> Result<()> {
        if self.guided_pool.iter().any(|b| b.len() != model.expr_dim()) {
            return Err(Error::invalid("guided pool entry length differs from expression dimension"));
        }
        Ok(())
    }
}

/// Noiseless face for the given coefficients, nose tip taken from the model's
/// nose vertex.
pub fn synthesize(model: &MorphableModel, alpha: &[f64], beta: &[f64]) -> Result<PointCloud> {
    let s = model.shape_vector(alpha, beta)?;
    Ok(vector_to_cloud(model, &s))
}

/// `λ β_E + (1 − λ) β`.
pub fn mix_expression(guide: &[f64], random: &[f64], lambda: f64) -> Vec<f64> {
    guide
        .iter()
        .zip(random)
        .map(|(g, r)| lambda * g + (1.0 - lambda) * r)
        .collect()
}

/// Rotation `R_y(yaw) · R_x(pitch) · R_z(roll)`, angles in radians; the face
/// looks along `+z` with `y` up.
pub fn euler_rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
    ry * rx * rz
}

/// Rotates points (and the nose tip) about the nose tip.
pub fn rotate_about_nose(cloud: &mut PointCloud, rot: &Matrix3<f64>) {
    let Some(nt) = cloud.nose_tip else { return };
    if *rot == Matrix3::identity() {
        return;
    }
    let pivot = Vector3::from(nt);
    for p in &mut cloud.points {
        let v = rot * (Vector3::from(*p) - pivot) + pivot;
        *p = [v.x, v.y, v.z];
    }
}

fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, sigma: f64) -> Vec<f64> {
    // Normal::new only fails for non-finite sigma, which validate() rules out.
    let dist = Normal::new(0.0, sigma).expect("finite sigma");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Identity coefficients `α ~ N(0, σ_α² I)`.
pub fn draw_alpha<R: Rng + ?Sized>(model: &MorphableModel, params: &GenParams, rng: &mut R) -> Vec<f64> {
    normal_vec(rng, model.shape_dim(), params.sigma_alpha)
}

/// Expression coefficients: a plain Gaussian draw, mixed with a uniformly
/// chosen pool entry by `λ ~ U(0, 1)` when the guided pool is nonempty.
pub fn draw_beta<R: Rng + ?Sized>(model: &MorphableModel, params: &GenParams, rng: &mut R) -> Vec<f64> {
    let random = normal_vec(rng, model.expr_dim(), params.sigma_beta);
    if params.guided_pool.is_empty() {
        return random;
    }
    let lambda: f64 = rng.random();
    let guide = &params.guided_pool[rng.random_range(0..params.guided_pool.len())];
    mix_expression(guide, &random, lambda)
}

/// Renders one augmented face for fixed coefficients: noise is added to the
/// shape, then the whole face is rotated about its nose tip by Euler angles
/// uniform within the configured limits.
pub fn render_face<R: Rng + ?Sized>(
    model: &MorphableModel,
    params: &GenParams,
    alpha: &[f64],
    beta: &[f64],
    rng: &mut R,
) -> Result<PointCloud> {
    let mut s = model.shape_vector(alpha, beta)?;
    let noise = normal_vec(rng, s.len(), params.sigma_delta);
    for (x, d) in s.iter_mut().zip(noise) {
        *x += d;
    }
    let mut cloud = vector_to_cloud(model, &s);
    let angles: [f64; 3] = [0, 1, 2].map(|a| {
        let u: f64 = rng.random();
        (2.0 * u - 1.0) * params.rotation_limits[a].to_radians()
    });
    let rot = euler_rotation(angles[0], angles[1], angles[2]);
    rotate_about_nose(&mut cloud, &rot);
    Ok(cloud)
}

/// One random face: identity, expression, noise and pose all drawn from `rng`.
pub fn generate_face<R: Rng + ?Sized>(
    model: &MorphableModel,
    params: &GenParams,
    rng: &mut R,
) -> Result<PointCloud> {
    params.validate()?;
    params.check_pool(model)?;
    let alpha = draw_alpha(model, params, rng);
    let beta = draw_beta(model, params, rng);
    render_face(model, params, &alpha, &beta, rng)
}

/// Face of a given identity; `neutral` forces `β = 0` (the expression draw is
/// still consumed so the stream layout does not depend on it).
pub fn generate_identity_face<R: Rng + ?Sized>(
    model: &MorphableModel,
    params: &GenParams,
    alpha: &[f64],
    neutral: bool,
    rng: &mut R,
) -> Result<PointCloud> {
    params.check_pool(model)?;
    let mut beta = draw_beta(model, params, rng);
    if neutral {
        beta.iter_mut().for_each(|b| *b = 0.0);
    }
    render_face(model, params, alpha, &beta, rng)
}
