//! The flow-curvature determinant `phi = det(d_1, ..., d_n)`, its Lie
//! derivative and the cofactor residual, plus zero-set extraction,
//! singular-perturbation checks and factor/first-integral detection.

mod factor;
mod gsp;
mod zero_set;

use nalgebra::DVector;
use serde::Serialize;

use crate::jets::{derivative_stack_in, DerivStack};
use twofloat::TwoFloat;

use crate::linalg::{columns, det, det_dd};
use crate::models::{ModelDef, Region};

pub use factor::{factor_check, CofactorFit, FactorReport};
pub use gsp::{gsp_order0_residual, gsp_param_profile, GspSummary, SlowFastSplit};
pub use zero_set::{
    zero_crossings_on_trajectory, zero_set_grid, GridAxis, GridSpec, Provenance, ZeroPoint, ZeroSet, ZeroSetOptions,
};

/// One evaluation of the manifold quantities at a point.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldSample {
    pub point: Vec<f64>,
    pub phi: f64,
    pub lie: f64,
    pub cofactor_residual: f64,
    pub region: Option<Region>,
}

fn resolve(model: &ModelDef, x: &[f64], region: Option<&Region>) -> Option<Region> {
    match region {
        Some(r) => Some(r.clone()),
        None => model.classify(x),
    }
}

fn stack(model: &ModelDef, x: &[f64], order: usize, region: Option<&Region>) -> Option<DerivStack> {
    if x.len() != model.dim() {
        return None;
    }
    derivative_stack_in(model, x, order, region).ok()
}

fn det_of(cols: &[&DVector<f64>]) -> f64 {
    det(&columns(cols))
}

/// `det(d_1, ..., d_n)` with the region classified at `x`. NaN when `x` is
/// not a finite point of the model's state space.
pub fn phi(model: &ModelDef, x: &[f64]) -> f64 {
    phi_in(model, x, None)
}

pub fn phi_in(model: &ModelDef, x: &[f64], region: Option<&Region>) -> f64 {
    if let Some(k) = affine_krylov(model, x, region, model.dim()) {
        return dd_phi_lie(&k).0;
    }
    match stack(model, x, model.dim(), region) {
        Some(s) => det_of(&s.derivs.iter().collect::<Vec<_>>()),
        None => f64::NAN,
    }
}

/// `det(d_1, ..., d_{n-1}, d_{n+1})`, the time derivative of `phi`.
pub fn lie_phi(model: &ModelDef, x: &[f64]) -> f64 {
    lie_phi_in(model, x, None)
}

pub fn lie_phi_in(model: &ModelDef, x: &[f64], region: Option<&Region>) -> f64 {
    if let Some(k) = affine_krylov(model, x, region, model.dim() + 1) {
        return dd_phi_lie(&k).1;
    }
    match stack(model, x, model.dim() + 1, region) {
        Some(s) => lie_from(&s),
        None => f64::NAN,
    }
}

/// In a region where the field is affine the stack is the Krylov sequence
/// `d_{k+1} = J d_k`. It is built and reduced in double-double arithmetic,
/// because the determinants cancel heavily when the spectrum is stiff.
fn affine_krylov(model: &ModelDef, x: &[f64], region: Option<&Region>, count: usize) -> Option<Vec<Vec<TwoFloat>>> {
    if !model.is_piecewise_affine() || x.len() != model.dim() || x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let region = resolve(model, x, region);
    let j = model.jacobian_in(x, region.as_ref());
    let v = model.rhs_in(x, region.as_ref());
    if v.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let n = x.len();
    let mut ks = vec![v.iter().map(|&c| TwoFloat::from(c)).collect::<Vec<_>>()];
    while ks.len() < count {
        let last = ks.last()?;
        let next = (0..n)
            .map(|i| (0..n).fold(TwoFloat::from(0.0), |acc, k| acc + last[k] * j[(i, k)]))
            .collect();
        ks.push(next);
    }
    Some(ks)
}

/// `(phi, L_V phi)` from a Krylov stack; the second is NaN when the stack is
/// one vector short.
fn dd_phi_lie(ks: &[Vec<TwoFloat>]) -> (f64, f64) {
    let n = ks[0].len();
    let cols: Vec<&[TwoFloat]> = ks[..n].iter().map(Vec::as_slice).collect();
    let phi = f64::from(det_dd(&cols));
    let lie = match ks.get(n) {
        Some(top) => {
            let mut cols: Vec<&[TwoFloat]> = ks[..n - 1].iter().map(Vec::as_slice).collect();
            cols.push(top);
            f64::from(det_dd(&cols))
        }
        None => f64::NAN,
    };
    (phi, lie)
}

fn lie_from(s: &DerivStack) -> f64 {
    let n = s.point.len();
    let mut cols: Vec<&DVector<f64>> = s.derivs[..n - 1].iter().collect();
    cols.push(&s.derivs[n]);
    det_of(&cols)
}

/// `|L_V phi - Tr(J) phi| / (1 + |Tr(J) phi|)`.
pub fn darboux_residual(model: &ModelDef, x: &[f64]) -> f64 {
    sample(model, x).map_or(f64::NAN, |s| s.cofactor_residual)
}

pub fn darboux_residual_in(model: &ModelDef, x: &[f64], region: Option<&Region>) -> f64 {
    sample_in(model, x, region).map_or(f64::NAN, |s| s.cofactor_residual)
}

/// `phi`, its Lie derivative and the cofactor residual from one stack.
pub fn sample(model: &ModelDef, x: &[f64]) -> Option<ManifoldSample> {
    sample_in(model, x, None)
}

pub fn sample_in(model: &ModelDef, x: &[f64], region: Option<&Region>) -> Option<ManifoldSample> {
    let region = resolve(model, x, region);
    let n = model.dim();
    let (phi, lie) = match affine_krylov(model, x, region.as_ref(), n + 1) {
        Some(k) => dd_phi_lie(&k),
        None => {
            let s = stack(model, x, n + 1, region.as_ref())?;
            (det_of(&s.derivs[..n].iter().collect::<Vec<_>>()), lie_from(&s))
        }
    };
    let tr = model.jacobian_in(x, region.as_ref()).trace();
    let k_phi = tr * phi;
    Some(ManifoldSample {
        point: x.to_vec(),
        phi,
        lie,
        cofactor_residual: (lie - k_phi).abs() / (1.0 + k_phi.abs()),
        region,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, load_model, Branch};

    #[test]
    fn phi_vanishes_at_chua3_fixed_point() {
        let m = builtin("chua3-pwl").unwrap();
        let fp = [1.5, 0.0, -1.5];
        assert!(phi(&m, &fp).abs() < 1e-12);
        assert!(lie_phi(&m, &fp).abs() < 1e-12);
    }

    #[test]
    fn off_plane_point_is_nonzero() {
        let m = builtin("chua3-pwl").unwrap();
        assert!(phi(&m, &[2.0, 0.0, 0.0]).abs() > 1e-3);
    }

    #[test]
    fn linear_system_darboux() {
        let m = load_model(r#"{"name":"lin","dim":3,"rhs":["-x1+2*x2","-x2+x3","-3*x3+x1"]}"#).unwrap();
        for x in [[0.3, -1.0, 2.0], [1.0, 1.0, 1.0], [-4.0, 0.5, 0.25]] {
            assert!(darboux_residual(&m, &x) <= 1e-10);
        }
    }

    #[test]
    fn invalid_points_give_nan() {
        let m = builtin("chua3-pwl").unwrap();
        assert!(phi(&m, &[1.0, 2.0]).is_nan());
        assert!(phi(&m, &[f64::NAN, 0.0, 0.0]).is_nan());
    }

    #[test]
    fn region_pinning() {
        let m = builtin("chua3-pwl").unwrap();
        let x = [0.5, 0.1, -0.2];
        let up = Region::single(Branch::Upper);
        assert_eq!(
            phi_in(&m, &x, None),
            phi_in(&m, &x, Some(&Region::single(Branch::Middle)))
        );
        assert_ne!(phi_in(&m, &x, None), phi_in(&m, &x, Some(&up)));
        let s = sample_in(&m, &x, Some(&up)).unwrap();
        assert_eq!(s.region, Some(up));
        assert!(s.cofactor_residual < 1e-10);
    }
}
