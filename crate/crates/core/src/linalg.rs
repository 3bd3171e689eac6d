//! Small dense helpers shared by the geometry, manifold and spectral modules.

use nalgebra::{DMatrix, DVector};
use twofloat::TwoFloat;

/// Determinant by LU with partial pivoting.
pub fn det(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "determinant of a non-square matrix");
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

/// Determinant in double-double arithmetic, columns given as `cols`.
pub fn det_dd(cols: &[&[TwoFloat]]) -> TwoFloat {
    let n = cols.len();
    let mut a: Vec<Vec<TwoFloat>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    let mut d = TwoFloat::from(1.0);
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().hi().total_cmp(&a[j][k].abs().hi()))
            .unwrap_or(k);
        if a[p][k] == TwoFloat::from(0.0) {
            return TwoFloat::from(0.0);
        }
        if p != k {
            a.swap(p, k);
            d = -d;
        }
        d *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k + 1..n {
                let t = f * a[k][j];
                a[i][j] -= t;
            }
        }
    }
    d
}

/// Determinant of the matrix whose columns are `cols`.
pub fn det_columns(cols: &[&DVector<f64>]) -> f64 {
    det(&columns(cols))
}

pub fn columns(cols: &[&DVector<f64>]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, |c| c.len());
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Generalized cross product of `n - 1` vectors in `R^n`: the vector `w`
/// with `v . w = det(v, a_1, ..., a_{n-1})` for every `v`. Components are
/// signed `(n-1) x (n-1)` minors.
pub fn wedge(vs: &[&DVector<f64>]) -> DVector<f64> {
    let n = vs.len() + 1;
    assert!(vs.iter().all(|v| v.len() == n), "wedge needs n-1 vectors in R^n");
    let m = columns(vs);
    DVector::from_fn(n, |i, _| {
        let minor = m.clone().remove_row(i);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * det(&minor)
    })
}

/// `1 - |cos|` between two vectors; 0 when parallel.
pub fn parallelism_defect(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - (a.dot(b) / (na * nb)).abs()).max(0.0)
}

pub fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_double_determinant() {
        let c: Vec<Vec<TwoFloat>> = [[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]]
            .iter()
            .map(|c| c.iter().map(|&v| TwoFloat::from(v)).collect())
            .collect();
        let refs: Vec<&[TwoFloat]> = c.iter().map(Vec::as_slice).collect();
        assert_eq!(f64::from(det_dd(&refs)), 18.0);
        let swapped = [refs[1], refs[0], refs[2]];
        assert_eq!(f64::from(det_dd(&swapped)), -18.0);
    }

    #[test]
    fn wedge_matches_cross_product_in_3d() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![-1.0, 0.5, 2.0]);
        let w = wedge(&[&a, &b]);
        let c = cross3(&a, &b);
        assert!((w - c).norm() < 1e-14);
    }

    #[test]
    fn wedge_realizes_the_determinant() {
        let vs: Vec<DVector<f64>> = (0..3)
            .map(|k| DVector::from_fn(4, |i, _| ((i * 3 + k * 7) % 5) as f64 - 1.5))
            .collect();
        let v = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.7]);
        let w = wedge(&[&vs[0], &vs[1], &vs[2]]);
        let d = det_columns(&[&v, &vs[0], &vs[1], &vs[2]]);
        assert!((v.dot(&w) - d).abs() < 1e-12);
    }

    #[test]
    fn det_of_identity_and_diagonal() {
        assert_eq!(det(&DMatrix::identity(4, 4)), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 4.0]));
        assert!((det(&d) - 24.0).abs() < 1e-14);
    }
}
