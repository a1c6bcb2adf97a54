//! Ridge-regularized coefficient recovery for targets in dense correspondence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::MorphableModel;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoeffBlock {
    Shape,
    Expression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedCoeffs {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Root mean squared per-vertex distance to the target (mm).
    pub residual_rms: f64,
}

/// Solves `argmin_c ‖t − s(α, β)‖² + ridge ‖c‖²` over one coefficient block
/// with the other held at `fixed` (zero when absent). The Gaussian prior on
/// the coefficients turns the MAP estimate into exactly this ridge problem.
pub fn fit_coeffs(
    model: &MorphableModel,
    target: &PointCloud,
    which: CoeffBlock,
    fixed: Option<&FittedCoeffs>,
    ridge: f64,
) -> Result<FittedCoeffs> {
    if target.len() != model.n_vertices() {
        return Err(Error::invalid(format!(
            "target has {} vertices, model has {}",
            target.len(),
            model.n_vertices()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::invalid("ridge weight must be finite and >= 0"));
    }
    let mut alpha = fixed.map_or_else(|| vec![0.0; model.shape_dim()], |f| f.alpha.clone());
    let mut beta = fixed.map_or_else(|| vec![0.0; model.expr_dim()], |f| f.beta.clone());
    if alpha.len() != model.shape_dim() || beta.len() != model.expr_dim() {
        return Err(Error::invalid("fixed coefficients do not match model dimensions"));
    }

    let target_vec = DVector::from_iterator(
        3 * target.len(),
        target.points.iter().flat_map(|p| p.iter().copied()),
    );
    let (basis, var) = match which {
        CoeffBlock::Shape => {
            alpha.iter_mut().for_each(|a| *a = 0.0);
            (&model.shape_basis, &model.shape_var)
        }
        CoeffBlock::Expression => {
            beta.iter_mut().for_each(|b| *b = 0.0);
            (&model.expr_basis, &model.expr_var)
        }
    };
    let rest = target_vec.clone() - model.shape_vector(&alpha, &beta)?;

    let mut design: DMatrix<f64> = basis.clone();
    for (mut col, v) in design.column_iter_mut().zip(var.iter()) {
        col *= v.sqrt();
    }
    let mut normal = design.tr_mul(&design);
    for i in 0..normal.nrows() {
        normal[(i, i)] += ridge;
    }
    let rhs = design.tr_mul(&rest);
    let coeffs = solve_spd(normal, rhs)?;

    match which {
        CoeffBlock::Shape => alpha.copy_from_slice(coeffs.as_slice()),
        CoeffBlock::Expression => beta.copy_from_slice(coeffs.as_slice()),
    }
    let fitted = model.shape_vector(&alpha, &beta)?;
    let sq = (target_vec - fitted).norm_squared();
    Ok(FittedCoeffs {
        alpha,
        beta,
        residual_rms: (sq / target.len() as f64).sqrt(),
    })
}

fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    let scale = a.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return Err(Error::SingularSystem);
    }
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * scale {
        return Err(Error::SingularSystem);
    }
    Ok(chol.solve(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::{make_toy_model, synthesize};

    #[test]
    fn mean_target_gives_zero_shape() {
        let m = make_toy_model(300, 6, 4, 2).unwrap();
        let target = synthesize(&m, &[0.0; 6], &[0.0; 4]).unwrap();
        for ridge in [1e-3, 1.0, 100.0] {
            let f = fit_coeffs(&m, &target, CoeffBlock::Shape, None, ridge).unwrap();
            assert!(f.alpha.iter().all(|a| *a == 0.0));
            assert_eq!(f.residual_rms, 0.0);
        }
    }

    #[test]
    fn vertex_count_mismatch() {
        let m = make_toy_model(300, 6, 4, 2).unwrap();
        let target = PointCloud::new(vec![[0.0; 3]; 10]);
        assert!(matches!(
            fit_coeffs(&m, &target, CoeffBlock::Shape, None, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn zero_variance_without_ridge_is_singular() {
        let mut m = make_toy_model(300, 6, 4, 2).unwrap();
        m.expr_var[2] = 0.0;
        let target = synthesize(&m, &[0.0; 6], &[0.0; 4]).unwrap();
        assert!(matches!(
            fit_coeffs(&m, &target, CoeffBlock::Expression, None, 0.0),
            Err(Error::SingularSystem)
        ));
        fit_coeffs(&m, &target, CoeffBlock::Expression, None, 1e-3).unwrap();
    }

    #[test]
    fn ridge_shrinks_coefficients() {
        let m = make_toy_model(300, 6, 4, 2).unwrap();
        let alpha = [1.0, -0.5, 0.3, 0.0, 0.2, 0.9];
        let target = synthesize(&m, &alpha, &[0.0; 4]).unwrap();
        let free = fit_coeffs(&m, &target, CoeffBlock::Shape, None, 0.0).unwrap();
        let shrunk = fit_coeffs(&m, &target, CoeffBlock::Shape, None, 1e5).unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(n(&shrunk.alpha) < n(&free.alpha));
    }
}
