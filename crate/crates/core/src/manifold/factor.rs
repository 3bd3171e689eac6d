use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::phi;
use crate::error::{FlowError, Result};
use crate::models::expr::{parse_expr, Expr, ExprSystem, SymbolTable};
use crate::models::ModelDef;

/// Least-squares fit of `K = L_V F / F` in the basis `1, x_i, x_i x_j`.
#[derive(Debug, Clone, Serialize)]
pub struct CofactorFit {
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    /// `|A c - K| / |K|` over the fitted points (0 when `K` vanishes).
    pub residual: f64,
    pub points: usize,
}

impl CofactorFit {
    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.coefficients[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorReport {
    pub factor: String,
    pub samples: usize,
    /// Points projected onto `F = 0` (none when `F` has no real zeros nearby).
    pub zero_points: usize,
    /// Median `|phi|` over the box samples, the reference scale.
    pub phi_scale: f64,
    /// Largest `|phi| / phi_scale` on the projected points.
    pub phi_on_zero_max: Option<f64>,
    /// Largest `|L_V F|` over the box samples.
    pub lie_abs_max: f64,
    /// Largest `|L_V F| / (|grad F| |V|)`.
    pub lie_rel_max: f64,
    pub first_integral: bool,
    pub cofactor: Option<CofactorFit>,
    /// `F` is a first integral or its cofactor fits the ansatz.
    pub invariant: bool,
}

/// Residual below which the ansatz counts as an exact cofactor.
pub const COFACTOR_FIT_TOL: f64 = 1e-6;

struct Factor {
    f: Expr,
    grad: Vec<Expr>,
}

impl Factor {
    fn value(&self, x: &[f64]) -> f64 {
        self.f.eval(x, &[])
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(x, &[])).collect()
    }

    /// Newton steps along the gradient onto `F = 0`.
    fn project(&self, x0: &[f64], tol: f64) -> Option<Vec<f64>> {
        let mut x = x0.to_vec();
        for _ in 0..300 {
            let f = self.value(&x);
            if f.abs() <= tol {
                return Some(x);
            }
            let g = self.gradient(&x);
            let g2: f64 = g.iter().map(|v| v * v).sum();
            if g2 == 0.0 || !g2.is_finite() {
                return None;
            }
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= f * gi / g2;
            }
        }
        None
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn ansatz(n: usize) -> (Vec<String>, impl Fn(&[f64]) -> Vec<f64>) {
    let mut terms = vec!["1".to_string()];
    terms.extend((0..n).map(|i| format!("x{}", i + 1)));
    for i in 0..n {
        for j in i..n {
            terms.push(format!("x{}*x{}", i + 1, j + 1));
        }
    }
    let eval = move |x: &[f64]| {
        let mut row = vec![1.0];
        row.extend_from_slice(x);
        for i in 0..n {
            for j in i..n {
                row.push(x[i] * x[j]);
            }
        }
        row
    };
    (terms, eval)
}

fn fit_cofactor(n: usize, pts: &[Vec<f64>], k: &[f64]) -> Option<CofactorFit> {
    let (terms, basis) = ansatz(n);
    if pts.len() < terms.len() {
        return None;
    }
    let a = DMatrix::from_fn(pts.len(), terms.len(), |r, c| basis(&pts[r])[c]);
    // equilibrate columns before the SVD solve
    let norms: Vec<f64> = (0..a.ncols())
        .map(|c| a.column(c).norm().max(f64::MIN_POSITIVE))
        .collect();
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] / norms[c]);
    let rhs = DVector::from_column_slice(k);
    let sol = scaled.svd(true, true).solve(&rhs, 1e-13).ok()?;
    let coefficients: Vec<f64> = sol.iter().zip(&norms).map(|(s, n)| s / n).collect();
    let fitted = &a * DVector::from_column_slice(&coefficients);
    let err = (fitted - &rhs).norm();
    let kn = rhs.norm();
    Some(CofactorFit {
        terms,
        coefficients,
        residual: if err == 0.0 {
            0.0
        } else {
            err / kn.max(f64::MIN_POSITIVE)
        },
        points: pts.len(),
    })
}

/// Checks whether the polynomial `factor` (model grammar, model parameters in
/// scope) carries an invariant manifold of the flow: `phi` on its zero set,
/// and the cofactor `K` in `L_V F = K F` fitted over the box `bounds`.
pub fn factor_check(
    model: &ModelDef,
    factor: &str,
    bounds: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<FactorReport> {
    let n = model.dim();
    if bounds.len() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            got: bounds.len(),
        });
    }
    let params: Vec<(String, f64)> = model.params().iter().map(|(k, v)| (k.to_string(), v)).collect();
    let syms = SymbolTable {
        dim: n,
        params: &params,
    };
    let mut slot = 0;
    let f = parse_expr(factor, &syms, &mut slot)?;
    if ExprSystem::new(vec![f.clone()]).pwl_slots() > 0 {
        return Err(FlowError::InvalidArgument("factor must be a polynomial".into()));
    }
    let fac = Factor {
        grad: (0..n).map(|j| f.derivative(j)).collect(),
        f,
    };

    let mut rng = StdRng::seed_from_u64(seed);
    let pts: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo })
                .collect()
        })
        .collect();
    let fv: Vec<f64> = pts.iter().map(|x| fac.value(x)).collect();
    if samples > 0 && fv.iter().all(|v| v.abs() <= f64::MIN_POSITIVE) {
        return Err(FlowError::IdenticallyZeroFactor);
    }
    let f_scale = median(fv.iter().map(|v| v.abs()).collect());
    let phi_scale = median(
        pts.iter()
            .map(|x| phi(model, x).abs())
            .filter(|v| v.is_finite())
            .collect(),
    );

    let zeros: Vec<Vec<f64>> = pts.iter().filter_map(|x| fac.project(x, 1e-14 * f_scale)).collect();
    let phi_on_zero_max = (!zeros.is_empty() && phi_scale > 0.0).then(|| {
        zeros
            .iter()
            .map(|x| phi(model, x).abs() / phi_scale)
            .fold(0.0, f64::max)
    });

    let mut lie_abs_max: f64 = 0.0;
    let mut lie_rel_max: f64 = 0.0;
    let mut fit_pts = Vec::new();
    let mut k_vals = Vec::new();
    for (x, &fx) in pts.iter().zip(&fv) {
        let v = model.rhs(x);
        let g = fac.gradient(x);
        let lie: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
        let gn = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        lie_abs_max = lie_abs_max.max(lie.abs());
        if lie != 0.0 {
            lie_rel_max = lie_rel_max.max(lie.abs() / (gn * vn));
        }
        if fx.abs() >= 1e-3 * f_scale && fx != 0.0 {
            fit_pts.push(x.clone());
            k_vals.push(lie / fx);
        }
    }
    let first_integral = samples > 0 && lie_rel_max <= 1e-12;
    let cofactor = fit_cofactor(n, &fit_pts, &k_vals);
    let invariant = first_integral || cofactor.as_ref().is_some_and(|c| c.residual <= COFACTOR_FIT_TOL);
    Ok(FactorReport {
        factor: factor.to_string(),
        samples,
        zero_points: zeros.len(),
        phi_scale,
        phi_on_zero_max,
        lie_abs_max,
        lie_rel_max,
        first_integral,
        cofactor,
        invariant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, load_model};

    #[test]
    fn rotation_first_integral() {
        let m = load_model(r#"{"name":"rot","dim":2,"rhs":["-x2","x1"]}"#).unwrap();
        let r = factor_check(&m, "x1^2 + x2^2", &[(-1.0, 1.0); 2], 50, 1).unwrap();
        assert!(r.first_integral && r.invariant);
        assert!(r.lie_abs_max < 1e-15);
    }

    #[test]
    fn linear_eigen_direction_has_constant_cofactor() {
        let m = load_model(r#"{"name":"d","dim":2,"rhs":["-2*x1","x2"]}"#).unwrap();
        let r = factor_check(&m, "x1", &[(-1.0, 1.0); 2], 40, 3).unwrap();
        let fit = r.cofactor.unwrap();
        assert!((fit.coefficient("1").unwrap() + 2.0).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
        assert!(r.invariant && !r.first_integral);
    }

    #[test]
    fn non_invariant_factor_on_chua3() {
        let m = builtin("chua3-pwl").unwrap();
        let r = factor_check(&m, "x1", &[(-3.0, 3.0); 3], 200, 5).unwrap();
        assert!(!r.invariant);
        assert!(r.cofactor.unwrap().residual > 1e-3);
    }

    #[test]
    fn rejects_zero_and_pwl_factors() {
        let m = builtin("chua3-pwl").unwrap();
        assert!(matches!(
            factor_check(&m, "x1 - x1", &[(-1.0, 1.0); 3], 10, 0),
            Err(FlowError::IdenticallyZeroFactor)
        ));
        assert!(factor_check(&m, "pwl(x1; 1, 2)", &[(-1.0, 1.0); 3], 10, 0).is_err());
        assert!(factor_check(&m, "x1", &[(-1.0, 1.0); 2], 10, 0).is_err());
    }
}
