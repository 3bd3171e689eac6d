//! Tangent linear system approximation at fixed points: Jacobian spectra,
//! the fast left eigenvector, invariant hyperplanes and the
//! coplanarity/orthogonality residuals.

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::jets::derivative_stack_in;
use crate::linalg::{columns, det, parallelism_defect, wedge};
use crate::models::{FixedPoint, ModelDef, Region};

pub type C64 = Complex<f64>;

/// Eigen-residual bound, relative to `(|lambda| + 1) |y|`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Imaginary parts below this (relative to `1 + |lambda|`) count as real.
const REAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ordered by descending `|Re|`; ties by descending `Im`.
    pub eigenvalues: Vec<C64>,
    /// Unit right eigenvectors, one per eigenvalue.
    pub right_eigenvectors: Vec<DVector<C64>>,
    /// Unit eigenvectors of the transposed Jacobian, one per eigenvalue.
    pub left_eigenvectors: Vec<DVector<C64>>,
    /// Largest scaled eigen-residual over both families.
    pub max_residual: f64,
}

fn is_real(z: C64) -> bool {
    z.im.abs() <= REAL_TOL * (1.0 + z.norm())
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The fast eigenvalue (largest `|Re|`).
    pub fn fast(&self) -> C64 {
        self.eigenvalues[0]
    }

    pub fn left_fast_eigenvector(&self) -> &DVector<C64> {
        &self.left_eigenvectors[0]
    }

    pub fn is_real(&self, i: usize) -> bool {
        is_real(self.eigenvalues[i])
    }

    /// Index of the real eigenvalue with the largest `|Re|`.
    pub fn dominant_real(&self) -> Option<usize> {
        (0..self.dim()).find(|&i| self.is_real(i))
    }

    /// Real part of a left eigenvector belonging to a real eigenvalue.
    pub fn real_left(&self, i: usize) -> Option<DVector<f64>> {
        self.is_real(i).then(|| self.left_eigenvectors[i].map(|c| c.re))
    }

    pub fn real_right(&self, i: usize) -> Option<DVector<f64>> {
        self.is_real(i).then(|| self.right_eigenvectors[i].map(|c| c.re))
    }
}

/// Sign/phase convention: unit norm, largest-magnitude entry real positive
/// (first such entry on ties).
fn fix_phase(v: &mut DVector<C64>) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let pivot = v[best];
    let rot = pivot.conj() / (pivot.norm() * norm);
    for c in v.iter_mut() {
        *c *= rot;
    }
    v[best] = Complex::new(v[best].re, 0.0);
}

/// Null vector of `m - lambda I` from the smallest singular value.
fn null_vector(m: &DMatrix<f64>, lambda: C64) -> DVector<C64> {
    let n = m.nrows();
    if is_real(lambda) {
        let shifted = m - DMatrix::identity(n, n) * lambda.re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested v_t");
        let k = argmin(svd.singular_values.as_slice());
        let mut v = DVector::from_fn(n, |i, _| Complex::new(vt[(k, i)], 0.0));
        fix_phase(&mut v);
        v.iter_mut().for_each(|c| c.im = 0.0);
        v
    } else {
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { lambda } else { Complex::new(0.0, 0.0) };
            Complex::new(m[(i, j)], 0.0) - d
        });
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested v_t");
        let k = argmin(svd.singular_values.as_slice());
        let mut v = DVector::from_fn(n, |i, _| vt[(k, i)].conj());
        fix_phase(&mut v);
        v
    }
}

fn argmin(xs: &[f64]) -> usize {
    (0..xs.len()).min_by(|&a, &b| xs[a].total_cmp(&xs[b])).unwrap_or(0)
}

fn residual(m: &DMatrix<f64>, lambda: C64, v: &DVector<C64>) -> f64 {
    let mc = m.map(|x| Complex::new(x, 0.0));
    let r = &mc * v - v * lambda;
    let vn = v.norm();
    r.norm() / ((lambda.norm() + 1.0) * vn)
}

fn order(eigs: &mut [C64]) {
    eigs.sort_by(|a, b| b.re.abs().total_cmp(&a.re.abs()).then(b.im.total_cmp(&a.im)));
    // conjugate pairs share |Re| only up to rounding: settle near-ties by Im
    for _ in 0..eigs.len() {
        for i in 1..eigs.len() {
            let (a, b) = (eigs[i - 1], eigs[i]);
            let tie = (a.re.abs() - b.re.abs()).abs() <= 1e-12 * (1.0 + a.norm());
            if tie && b.im > a.im {
                eigs.swap(i - 1, i);
            }
        }
    }
}

/// Full eigen-decomposition of a real square matrix.
pub fn spectrum_of(j: &DMatrix<f64>) -> Result<Spectrum> {
    if !j.is_square() || j.nrows() == 0 {
        return Err(FlowError::InvalidArgument("spectrum of a non-square matrix".into()));
    }
    if j.iter().any(|x| !x.is_finite()) {
        return Err(FlowError::NonFinite("jacobian"));
    }
    let mut eigenvalues: Vec<C64> = j.clone().complex_eigenvalues().iter().copied().collect();
    for z in eigenvalues.iter_mut() {
        if is_real(*z) {
            z.im = 0.0;
        }
    }
    order(&mut eigenvalues);
    let jt = j.transpose();
    let mut right = Vec::with_capacity(eigenvalues.len());
    let mut left = Vec::with_capacity(eigenvalues.len());
    let mut max_residual: f64 = 0.0;
    for &lambda in &eigenvalues {
        let r = null_vector(j, lambda);
        let l = null_vector(&jt, lambda);
        let res = residual(j, lambda, &r).max(residual(&jt, lambda, &l));
        if res > EIGEN_RESIDUAL_TOL {
            return Err(FlowError::Defective {
                re: lambda.re,
                im: lambda.im,
                residual: res,
            });
        }
        max_residual = max_residual.max(res);
        right.push(r);
        left.push(l);
    }
    Ok(Spectrum {
        eigenvalues,
        right_eigenvectors: right,
        left_eigenvectors: left,
        max_residual,
    })
}

/// Spectrum of the Jacobian at `x`, evaluated in `region` when given.
pub fn spectrum_at(model: &ModelDef, x: &[f64], region: Option<&Region>) -> Result<Spectrum> {
    if x.len() != model.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    spectrum_of(&model.jacobian_in(x, region))
}

/// Which eigenvalue carries the plane when the fast one is complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FastEigenPolicy {
    /// Use the real eigenvalue of largest `|Re|`.
    #[default]
    DominantReal,
    /// Require the fast eigenvalue itself to be real.
    Strict,
}

/// Plane `normal . x + offset = 0`, stored with a unit normal whose first
/// nonzero coefficient is positive.
#[derive(Debug, Clone, Serialize)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
    pub base_point: FixedPoint,
    /// Real eigenvalue whose left eigenvector is the normal.
    pub eigenvalue: f64,
    /// The fast eigenvalue of the spectrum (may differ when complex).
    #[serde(skip)]
    pub fast_eigenvalue: C64,
}

impl Hyperplane {
    pub fn new(normal: &[f64], offset: f64, base_point: FixedPoint, eigenvalue: f64) -> Result<Self> {
        let norm = normal.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(FlowError::InvalidArgument("plane normal must be nonzero".into()));
        }
        let first = normal.iter().copied().find(|c| *c != 0.0).unwrap_or(1.0);
        let s = first.signum() * norm;
        Ok(Hyperplane {
            normal: normal.iter().map(|c| c / s).collect(),
            offset: offset / s,
            base_point,
            eigenvalue,
            fast_eigenvalue: Complex::new(eigenvalue, 0.0),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.offset
    }

    /// Coefficients rescaled so that coefficient `index` equals 1.
    pub fn unit_coefficient(&self, index: usize) -> Option<(Vec<f64>, f64)> {
        let c = *self.normal.get(index)?;
        (c != 0.0).then(|| (self.normal.iter().map(|v| v / c).collect(), self.offset / c))
    }

    /// Coefficients scaled to norm `|lambda|`, largest-magnitude one positive.
    pub fn lambda_scaled(&self) -> (Vec<f64>, f64) {
        let big = self
            .normal
            .iter()
            .copied()
            .fold(0.0_f64, |m, c| if c.abs() > m.abs() { c } else { m });
        let s = self.eigenvalue.abs() * big.signum();
        (self.normal.iter().map(|c| c * s).collect(), self.offset * s)
    }

    /// `c1,...,cn,offset` of the canonical form.
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for c in &self.normal {
            write!(s, "{c},").unwrap();
        }
        write!(s, "{}", self.offset).unwrap();
        s
    }

    /// Mirror image under `x -> -x`.
    pub fn mirrored(&self) -> Hyperplane {
        let mut p = self.clone();
        p.offset = -p.offset;
        p
    }
}

/// Rounds to `digits` significant digits for display.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i64;
    if !(-5..=9).contains(&mag) {
        return format!("{:.*e}", digits.saturating_sub(1), x);
    }
    let prec = (digits as i64 - 1 - mag).max(0) as usize;
    let s = format!("{:.*}", prec, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `2.8759 x1 - 3.9421 x2 + x3 + 2.8139 = 0`.
pub fn equation_string(coeffs: &[f64], offset: f64, digits: usize) -> String {
    let mut out = String::new();
    for (i, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mag = significant(c.abs(), digits);
        let term = if mag == "1" {
            format!("x{}", i + 1)
        } else {
            format!("{mag} x{}", i + 1)
        };
        if out.is_empty() {
            if c < 0.0 {
                out.push('-');
            }
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
        }
        out.push_str(&term);
    }
    if out.is_empty() {
        out.push('0');
    }
    if offset != 0.0 {
        out.push_str(if offset < 0.0 { " - " } else { " + " });
        out.push_str(&significant(offset.abs(), digits));
    }
    out.push_str(" = 0");
    out
}

/// TLS hyperplane through `fp` with the default eigenvalue policy.
pub fn tls_hyperplane(model: &ModelDef, fp: &FixedPoint) -> Result<Hyperplane> {
    tls_hyperplane_with(model, fp, FastEigenPolicy::default())
}

/// Plane through `fp` normal to the left eigenvector of the Jacobian in the
/// point's own region.
pub fn tls_hyperplane_with(model: &ModelDef, fp: &FixedPoint, policy: FastEigenPolicy) -> Result<Hyperplane> {
    let spec = spectrum_at(model, &fp.location, fp.region.as_ref())?;
    let fast = spec.fast();
    let index = match policy {
        FastEigenPolicy::Strict if !spec.is_real(0) => {
            return Err(FlowError::ComplexFastEigenvalue {
                re: fast.re,
                im: fast.im,
            })
        }
        FastEigenPolicy::Strict => 0,
        FastEigenPolicy::DominantReal => spec.dominant_real().ok_or(FlowError::NoRealEigenvalue)?,
    };
    let normal = spec.real_left(index).expect("real eigenvalue");
    let offset = -normal.dot(&DVector::from_column_slice(&fp.location));
    let mut plane = Hyperplane::new(normal.as_slice(), offset, fp.clone(), spec.eigenvalues[index].re)?;
    plane.fast_eigenvalue = fast;
    Ok(plane)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ResidualSummary {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    /// Samples rejected for lying outside the region.
    pub excluded: usize,
}

impl ResidualSummary {
    pub fn from_values(values: &[f64], excluded: usize) -> Self {
        let count = values.len();
        let max = values.iter().copied().fold(0.0, f64::max);
        let mean = if count == 0 {
            0.0
        } else {
            values.iter().sum::<f64>() / count as f64
        };
        ResidualSummary {
            count,
            max,
            mean,
            excluded,
        }
    }
}

/// `|grad Pi . V - lambda Pi|` scaled by `1 + |grad Pi . V| + |lambda Pi|`.
pub fn plane_lie_residual(model: &ModelDef, plane: &Hyperplane, x: &[f64]) -> f64 {
    let v = model.rhs_in(x, plane.base_point.region.as_ref());
    let lie: f64 = plane.normal.iter().zip(&v).map(|(c, v)| c * v).sum();
    let lp = plane.eigenvalue * plane.eval(x);
    (lie - lp).abs() / (1.0 + lie.abs() + lp.abs())
}

/// Samples the unit box around the plane's base point, keeps points inside
/// its region and reports the plane's Lie-derivative residual there.
pub fn darboux_check_plane(model: &ModelDef, plane: &Hyperplane, samples: usize, seed: u64) -> ResidualSummary {
    let mut rng = StdRng::seed_from_u64(seed);
    let base = &plane.base_point.location;
    let region = plane.base_point.region.as_ref();
    let mut values = Vec::with_capacity(samples);
    let mut excluded = 0;
    let mut tries = 0;
    while values.len() < samples && tries < 100 * samples.max(1) {
        tries += 1;
        let x: Vec<f64> = base.iter().map(|b| b + rng.gen_range(-1.0..1.0)).collect();
        if region.is_some_and(|r| !model.in_region(&x, r)) {
            excluded += 1;
            continue;
        }
        values.push(plane_lie_residual(model, plane, &x));
    }
    ResidualSummary::from_values(&values, excluded)
}

#[derive(Debug, Clone, Serialize)]
pub struct CoplanarityResiduals {
    /// `|V . (Y_2 ^ ... ^ Y_n)|`.
    pub r1: f64,
    /// `|V . tY_1|`.
    pub r2: f64,
    /// `|V| |Y_2 ^ ... ^ Y_n|`.
    pub scale1: f64,
    /// `|V| |tY_1|`.
    pub scale2: f64,
    /// `1 - |cos|` between the slow wedge and the fast left eigenvector.
    pub parallelism: f64,
}

impl CoplanarityResiduals {
    pub fn scaled(&self) -> (f64, f64) {
        (ratio(self.r1, self.scale1), ratio(self.r2, self.scale2))
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Real basis of the slow subspace: every eigenvector except the chosen fast
/// one, conjugate pairs realized by their real and imaginary parts.
fn slow_basis(spec: &Spectrum, fast: usize) -> Result<Vec<DVector<f64>>> {
    let n = spec.dim();
    for i in 0..n {
        for k in i + 1..n {
            let (a, b) = (spec.eigenvalues[i], spec.eigenvalues[k]);
            if (a - b).norm() <= 1e-8 * (1.0 + a.norm()) {
                return Err(FlowError::MultiplicityCollapse);
            }
        }
    }
    let mut basis = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != fast) {
        let y = &spec.right_eigenvectors[i];
        if spec.is_real(i) {
            basis.push(y.map(|c| c.re));
        } else if spec.eigenvalues[i].im > 0.0 {
            basis.push(y.map(|c| c.re));
            basis.push(y.map(|c| c.im));
        }
    }
    if basis.len() != n - 1 {
        return Err(FlowError::MultiplicityCollapse);
    }
    Ok(basis)
}

/// Coplanarity of `V` with the slow eigenvectors against its orthogonality
/// to the fast left eigenvector. The fast eigenvalue is the dominant real one.
pub fn coplanarity_equivalence(model: &ModelDef, x: &[f64], spectrum: &Spectrum) -> Result<CoplanarityResiduals> {
    let fast = spectrum.dominant_real().ok_or(FlowError::NoRealEigenvalue)?;
    let slow = slow_basis(spectrum, fast)?;
    let w = wedge(&slow.iter().collect::<Vec<_>>());
    let ty = spectrum.real_left(fast).expect("real eigenvalue");
    let v = DVector::from_vec(model.rhs(x));
    Ok(CoplanarityResiduals {
        r1: v.dot(&w).abs(),
        r2: v.dot(&ty).abs(),
        scale1: v.norm() * w.norm(),
        scale2: v.norm() * ty.norm(),
        parallelism: parallelism_defect(&w, &ty),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Hypercoplanarity {
    pub phi: f64,
    /// `V . (gamma ^ gamma' ^ ... )` over the derivative stack.
    pub wedge_form: f64,
    /// `|phi - wedge_form|` relative to the Hadamard bound of the stack.
    pub residual: f64,
    /// Hadamard bound `prod |d_k|`, the natural scale of both values.
    pub scale: f64,
}

/// Evaluates the flow-curvature determinant as `V . (d_2 ^ ... ^ d_n)`.
pub fn hypercoplanarity_check(model: &ModelDef, x: &[f64], region: Option<&Region>) -> Result<Hypercoplanarity> {
    let n = model.dim();
    let owned;
    let region = match region {
        Some(r) => Some(r),
        None => {
            owned = model.classify(x);
            owned.as_ref()
        }
    };
    let stack = derivative_stack_in(model, x, n, region)?;
    let cols: Vec<&DVector<f64>> = stack.derivs.iter().collect();
    let phi = det(&columns(&cols));
    let w = wedge(&cols[1..]);
    let wedge_form = cols[0].dot(&w);
    let scale: f64 = cols.iter().map(|c| c.norm()).product();
    let residual = ratio((phi - wedge_form).abs(), scale);
    Ok(Hypercoplanarity {
        phi,
        wedge_form,
        residual,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, fixed_points, load_model};

    #[test]
    fn diagonal_spectrum_is_ordered() {
        let j = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 5.0, -3.0]));
        let s = spectrum_of(&j).unwrap();
        let re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        assert_eq!(re, vec![5.0, -3.0, -1.0]);
        assert_eq!(s.real_right(0).unwrap(), DVector::from_vec(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn conjugate_pair_positive_imaginary_first() {
        let j = DMatrix::from_row_slice(3, 3, &[-3.0, -2.0, 0.0, 2.0, -3.0, 0.0, 0.0, 0.0, -0.5]);
        let s = spectrum_of(&j).unwrap();
        assert!(s.eigenvalues[0].im > 0.0 && s.eigenvalues[1].im < 0.0);
        assert_eq!(s.dominant_real(), Some(2));
        assert!(s.max_residual < 1e-12);
    }

    #[test]
    fn defective_matrix_is_reported() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        // the Jordan block still has an eigenvector; only its multiplicity is degenerate
        let s = spectrum_of(&j).unwrap();
        let m = load_model(r#"{"name":"j","dim":2,"rhs":["x1+x2","x2"]}"#).unwrap();
        assert!(matches!(
            coplanarity_equivalence(&m, &[1.0, 1.0], &s),
            Err(FlowError::MultiplicityCollapse)
        ));
    }

    #[test]
    fn chua3_fast_eigenvalue() {
        let m = builtin("chua3-pwl").unwrap();
        let set = fixed_points(&m).unwrap();
        let s = spectrum_at(&m, &set.points[0].location, set.points[0].region.as_ref()).unwrap();
        assert!((s.fast().re + 3.942129).abs() < 1e-6);
        assert!(s.is_real(0));
    }

    #[test]
    fn plane_display_forms() {
        let fp = FixedPoint {
            location: vec![0.0, 0.0],
            region: None,
            is_virtual: false,
        };
        let p = Hyperplane::new(&[-3.0, 4.0], 10.0, fp, -2.0).unwrap();
        assert_eq!(p.normal, vec![0.6, -0.8]);
        assert_eq!(p.offset, -2.0);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        let (c, o) = p.unit_coefficient(1).unwrap();
        assert!(close(&c, &[-0.75, 1.0]) && o == 2.5);
        let (c, o) = p.lambda_scaled();
        assert!(close(&c, &[-1.2, 1.6]) && (o - 4.0).abs() < 1e-15);
        assert_eq!(equation_string(&[-1.2, 1.0, 0.0], -4.0, 5), "-1.2 x1 + x2 - 4 = 0");
        assert_eq!(p.csv_row(), "0.6,-0.8,-2");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(significant(2.875996, 5), "2.876");
        assert_eq!(significant(0.000454517, 6), "0.000454517");
        assert_eq!(significant(-311.4906, 5), "-311.49");
        assert_eq!(significant(-0.0, 4), "0");
        assert_eq!(significant(6.16791e-16, 3), "6.17e-16");
    }

    #[test]
    fn strict_policy_rejects_complex_fast_eigenvalue() {
        let m = builtin("chua5-pwl").unwrap();
        let set = fixed_points(&m).unwrap();
        let fp = set.outer()[0];
        assert!(matches!(
            tls_hyperplane_with(&m, fp, FastEigenPolicy::Strict),
            Err(FlowError::ComplexFastEigenvalue { .. })
        ));
        let p = tls_hyperplane(&m, fp).unwrap();
        assert!((p.fast_eigenvalue.re + 311.49).abs() < 0.01);
        assert!((p.eigenvalue + 4.68877).abs() < 1e-4);
    }
}
