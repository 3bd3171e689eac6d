//! Gram-Schmidt orthogonalization of derivative stacks, generalized Frénet
//! curvatures and the determinant identities behind the flow-curvature
//! determinant.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::jets::DerivStack;
use crate::linalg::{columns, cross3, det};

/// Relative norm below which a Gram-Schmidt vector counts as lost rank.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Orthogonal (not normalized) basis `u_1..u_m` with the coefficients
/// `beta` such that `input_i = sum_j beta[i][j] u_j`, `beta[i][i] = 1`.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    pub vectors: Vec<DVector<f64>>,
    pub beta: DMatrix<f64>,
    /// First index whose vector fell below the degeneracy threshold.
    pub degenerate_at: Option<usize>,
}

impl OrthoBasis {
    pub fn norms(&self) -> Vec<f64> {
        self.vectors.iter().map(|u| u.norm()).collect()
    }

    /// Reconstructs the inputs from the basis and `beta`.
    pub fn reconstruct(&self) -> Vec<DVector<f64>> {
        let m = self.vectors.len();
        (0..m)
            .map(|i| {
                (0..=i).fold(DVector::zeros(self.vectors[0].len()), |acc, j| {
                    acc + &self.vectors[j] * self.beta[(i, j)]
                })
            })
            .collect()
    }
}

/// Gram-Schmidt without normalization; fails on rank loss.
pub fn gram_schmidt(vectors: &[DVector<f64>]) -> Result<OrthoBasis> {
    let basis = gram_schmidt_unchecked(vectors)?;
    match basis.degenerate_at {
        Some(index) => Err(FlowError::DegenerateStack { index }),
        None => Ok(basis),
    }
}

/// Gram-Schmidt that records rank loss instead of failing. Vectors that
/// collapsed are kept (numerically tiny) but no longer projected out.
///
/// Modified Gram-Schmidt with one re-orthogonalization pass; same basis as
/// the classical recursion, better rounding.
pub fn gram_schmidt_unchecked(vectors: &[DVector<f64>]) -> Result<OrthoBasis> {
    let m = vectors.len();
    let n = vectors.first().map_or(0, |v| v.len());
    if vectors.iter().any(|v| v.len() != n) {
        return Err(FlowError::InvalidArgument("vectors of different lengths".into()));
    }
    if m > n {
        return Err(FlowError::InvalidArgument(format!(
            "{m} vectors cannot be independent in R^{n}"
        )));
    }
    let mut us: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut live: Vec<bool> = Vec::with_capacity(m);
    let mut beta = DMatrix::identity(m, m);
    let mut degenerate_at = None;
    for (i, a) in vectors.iter().enumerate() {
        let mut v = a.clone();
        for _pass in 0..2 {
            for j in 0..i {
                if !live[j] {
                    continue;
                }
                let uu = us[j].norm_squared();
                let c = us[j].dot(&v) / uu;
                v.axpy(-c, &us[j], 1.0);
                beta[(i, j)] += c;
            }
        }
        let ok = v.norm() > DEGENERACY_TOL * a.norm() && v.norm() > 0.0;
        if !ok && degenerate_at.is_none() {
            degenerate_at = Some(i);
        }
        live.push(ok);
        us.push(v);
    }
    Ok(OrthoBasis {
        vectors: us,
        beta,
        degenerate_at,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureSet {
    /// `kappa_1 .. kappa_{m-1}` as nonnegative norm ratios.
    pub kappa: Vec<f64>,
    /// Signed torsion for space curves.
    pub torsion: Option<f64>,
}

/// Generalized curvatures `kappa_i = |u_{i+1}| / (|u_1| |u_i|)` from the
/// first `min(order, n)` vectors of the stack.
pub fn curvatures(stack: &DerivStack) -> Result<CurvatureSet> {
    let n = stack.point.len();
    let m = stack.order().min(n);
    if m < 2 {
        return Err(FlowError::InvalidArgument(
            "curvatures need at least two derivatives".into(),
        ));
    }
    let v = stack.d(1);
    if v.norm() == 0.0 {
        return Err(FlowError::ZeroVelocity);
    }
    let basis = gram_schmidt_unchecked(&stack.derivs[..m])?;
    // the last vector may vanish: that is where the top curvature is zero
    if let Some(index) = basis.degenerate_at.filter(|&i| i < m - 1) {
        return Err(FlowError::DegenerateStack { index });
    }
    let norms = basis.norms();
    let kappa = (0..m - 1)
        .map(|i| {
            if basis.degenerate_at == Some(i + 1) {
                0.0
            } else {
                norms[i + 1] / (norms[0] * norms[i])
            }
        })
        .collect();
    let torsion = if n == 3 && m == 3 {
        torsion_3d(stack.d(1), stack.d(2), stack.d(3)).ok()
    } else {
        None
    };
    Ok(CurvatureSet { kappa, torsion })
}

/// Curvature `|gamma ^ V| / |V|^3` of a space curve.
pub fn curvature1_3d(v: &DVector<f64>, gamma: &DVector<f64>) -> Result<f64> {
    let speed = v.norm();
    if speed == 0.0 {
        return Err(FlowError::ZeroVelocity);
    }
    Ok(cross3(gamma, v).norm() / speed.powi(3))
}

/// Signed torsion `-gamma' . (gamma ^ V) / |gamma ^ V|^2`.
pub fn torsion_3d(v: &DVector<f64>, gamma: &DVector<f64>, gamma_dot: &DVector<f64>) -> Result<f64> {
    let w = cross3(gamma, v);
    let w2 = w.norm_squared();
    if w2 == 0.0 || w2 <= (DEGENERACY_TOL * gamma.norm() * v.norm()).powi(2) {
        return Err(FlowError::UndefinedTorsion);
    }
    Ok(-gamma_dot.dot(&w) / w2)
}

fn hadamard(cols: &[DVector<f64>]) -> f64 {
    cols.iter().map(|c| c.norm()).product()
}

/// `||det(a)| - prod |u_i||` relative to the Hadamard bound `prod |a_i|`.
pub fn identity_a10_residual(stack: &[DVector<f64>]) -> Result<f64> {
    let n = stack.first().map_or(0, |v| v.len());
    if stack.len() != n {
        return Err(FlowError::InvalidArgument("stack must be square".into()));
    }
    let d = det(&columns(&stack.iter().collect::<Vec<_>>()));
    let basis = gram_schmidt_unchecked(stack)?;
    let prod: f64 = if basis.degenerate_at.is_some() {
        0.0
    } else {
        basis.norms().iter().product()
    };
    Ok(relative(d.abs() - prod, hadamard(stack)))
}

/// Sign of `det(stack)` (the orientation the norm identity drops).
pub fn stack_orientation(stack: &[DVector<f64>]) -> f64 {
    det(&columns(&stack.iter().collect::<Vec<_>>())).signum()
}

/// Residual of `det(J a_1, ..., J a_n) = det(J) det(a_1, ..., a_n)`, relative
/// to the Hadamard bound of the left-hand matrix.
pub fn identity_a15_residual(j: &DMatrix<f64>, a: &[DVector<f64>]) -> Result<f64> {
    check_square(j, a)?;
    let ja: Vec<DVector<f64>> = a.iter().map(|v| j * v).collect();
    let lhs = det(&columns(&ja.iter().collect::<Vec<_>>()));
    let rhs = det(j) * det(&columns(&a.iter().collect::<Vec<_>>()));
    let scale = hadamard(&ja).max(rhs.abs());
    Ok(relative(lhs - rhs, scale))
}

/// Residual of `sum_k det(a_1, .., J a_k, .., a_n) = Tr(J) det(a)`.
pub fn identity_a16_residual(j: &DMatrix<f64>, a: &[DVector<f64>]) -> Result<f64> {
    check_square(j, a)?;
    let n = a.len();
    let mut lhs = 0.0;
    let mut scale = 0.0;
    for k in 0..n {
        let mut cols = a.to_vec();
        cols[k] = j * &a[k];
        lhs += det(&columns(&cols.iter().collect::<Vec<_>>()));
        scale += hadamard(&cols);
    }
    let rhs = j.trace() * det(&columns(&a.iter().collect::<Vec<_>>()));
    let scale = f64::max(scale, j.trace().abs() * hadamard(a));
    Ok(relative(lhs - rhs, scale))
}

fn relative(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.abs() / scale
    }
}

fn check_square(j: &DMatrix<f64>, a: &[DVector<f64>]) -> Result<()> {
    let n = a.len();
    if j.nrows() != n || j.ncols() != n || a.iter().any(|v| v.len() != n) {
        return Err(FlowError::InvalidArgument(
            "need an n x n matrix and n vectors in R^n".into(),
        ));
    }
    Ok(())
}
