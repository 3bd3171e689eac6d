use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::builtin::{BuiltinSystem, Nonlinearity};
use super::{ModelDef, Region, System};
use crate::error::{FlowError, Result};

/// Relative bound on `|f(x*)|` for an accepted equilibrium.
pub const FIXED_POINT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub location: Vec<f64>,
    /// Region whose affine piece the point solves (PWL models only).
    pub region: Option<Region>,
    /// The point solves the affine extension of `region` but lies outside it.
    pub is_virtual: bool,
}

impl FixedPoint {
    /// Residual `|f(x*)|` evaluated with the point's own region.
    pub fn residual(&self, model: &ModelDef) -> f64 {
        norm(&model.rhs_in(&self.location, self.region.as_ref()))
    }

    pub fn satisfies_invariant(&self, model: &ModelDef) -> bool {
        self.residual(model) <= FIXED_POINT_TOL * (1.0 + norm(&self.location))
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FixedPointSet {
    /// Equilibria of the actual vector field, sorted by `x1`.
    pub points: Vec<FixedPoint>,
    /// Equilibria of region-wise affine extensions falling outside their
    /// region; not equilibria of the model, but base points of its TLS planes.
    pub virtual_points: Vec<FixedPoint>,
    /// Initial guesses from which Newton did not converge.
    pub failed_guesses: Vec<Vec<f64>>,
}

impl FixedPointSet {
    /// Real points followed by virtual ones.
    pub fn all(&self) -> impl Iterator<Item = &FixedPoint> {
        self.points.iter().chain(&self.virtual_points)
    }

    /// Points whose region is not the middle one, sorted by `x1`, virtual
    /// points included. These carry the invariant planes of Chua systems.
    pub fn outer(&self) -> Vec<&FixedPoint> {
        let mut v: Vec<_> = self
            .all()
            .filter(|p| p.region.as_ref().is_some_and(Region::is_outer))
            .collect();
        v.sort_by(|a, b| a.location[0].total_cmp(&b.location[0]));
        v
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            tol: 1e-13,
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Newton on `f(x) = 0` from `x0`.
pub fn newton_polish(model: &ModelDef, x0: &[f64], region: Option<&Region>, opts: NewtonOptions) -> Option<Vec<f64>> {
    let mut x = DVector::from_column_slice(x0);
    let mut f = DVector::from_vec(model.rhs_in(x.as_slice(), region));
    for _ in 0..opts.max_iter {
        let fnorm = f.norm();
        if !fnorm.is_finite() {
            return None;
        }
        if fnorm <= opts.tol * (1.0 + x.norm()) {
            return Some(x.as_slice().to_vec());
        }
        let j = model.jacobian_in(x.as_slice(), region);
        let step = j.lu().solve(&f)?;
        let mut lambda = 1.0;
        loop {
            let trial = &x - &step * lambda;
            let ft = DVector::from_vec(model.rhs_in(trial.as_slice(), region));
            if ft.norm() < fnorm || lambda < 1e-6 {
                x = trial;
                f = ft;
                break;
            }
            lambda *= 0.5;
        }
    }
    let ok = f.norm() <= FIXED_POINT_TOL * (1.0 + x.norm());
    ok.then(|| x.as_slice().to_vec())
}

fn push_unique(list: &mut Vec<FixedPoint>, p: FixedPoint) {
    let scale = 1e-8 * (1.0 + norm(&p.location));
    let dup = list
        .iter()
        .any(|q| q.location.iter().zip(&p.location).all(|(a, b)| (a - b).abs() <= scale));
    if !dup {
        list.push(p);
    }
}

fn sort(list: &mut [FixedPoint]) {
    list.sort_by(|a, b| {
        a.location
            .iter()
            .zip(&b.location)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
}

/// Per-region linear solve for piecewise-affine fields.
fn affine_fixed_points(model: &ModelDef, set: &mut FixedPointSet) {
    let n = model.dim();
    let zero = vec![0.0; n];
    for region in Region::enumerate(model.pwl_slots()) {
        let r = if model.is_pwl() { Some(&region) } else { None };
        let j = model.jacobian_in(&zero, r);
        let c = DVector::from_vec(model.rhs_in(&zero, r));
        let Some(x) = j.lu().solve(&(-c)) else { continue };
        let x = x.as_slice().to_vec();
        let real = r.is_none_or(|reg| model.in_region(&x, reg));
        let fp = FixedPoint {
            region: r.cloned(),
            location: x,
            is_virtual: !real,
        };
        if real {
            push_unique(&mut set.points, fp);
        } else {
            push_unique(&mut set.virtual_points, fp);
        }
    }
}

/// `x' = A x + b (c1 x1^3 + c2 x1)`: eliminating the linear part leaves
/// `x1 (1 + w c2 + w c1 x1^2) = 0` with `w = (A^-1 b)_1`.
fn lure_cubic_fixed_points(a: &DMatrix<f64>, b: &DVector<f64>, c1: f64, c2: f64) -> Option<Vec<Vec<f64>>> {
    let ainv_b = a.clone().lu().solve(b)?;
    let w = ainv_b[0];
    let mut roots = vec![0.0];
    let disc = -(1.0 + w * c2) / (w * c1);
    if disc.is_finite() && disc > 0.0 {
        let r = disc.sqrt();
        roots.push(-r);
        roots.push(r);
    }
    Some(
        roots
            .into_iter()
            .map(|x1| {
                let g = c1 * x1 * x1 * x1 + c2 * x1;
                (-&ainv_b * g).as_slice().to_vec()
            })
            .collect(),
    )
}

/// All equilibria of `model`.
///
/// Piecewise-affine fields are solved region by region; candidates outside
/// their region are kept apart as virtual points. Cubic Lur'e systems use the
/// scalar cubic. Anything else runs damped Newton from the model's guesses.
pub fn fixed_points(model: &ModelDef) -> Result<FixedPointSet> {
    let mut set = FixedPointSet::default();
    if model.is_piecewise_affine() {
        affine_fixed_points(model, &mut set);
    } else {
        let cubic = match &model.system {
            System::Builtin(BuiltinSystem::Lure(l)) => match l.nl {
                Nonlinearity::Cubic { c1, c2 } => lure_cubic_fixed_points(&l.a, &l.b, c1, c2),
                Nonlinearity::Pwl { .. } => None,
            },
            _ => None,
        };
        if let Some(candidates) = cubic {
            for x in candidates {
                let x = newton_polish(model, &x, None, NewtonOptions::default()).unwrap_or(x);
                push_unique(
                    &mut set.points,
                    FixedPoint {
                        location: x,
                        region: None,
                        is_virtual: false,
                    },
                );
            }
        } else {
            let guesses = model.fixed_point_guesses();
            for g in guesses {
                match newton_polish(model, g, None, NewtonOptions::default()) {
                    Some(x) => {
                        let region = model.classify(&x);
                        push_unique(
                            &mut set.points,
                            FixedPoint {
                                location: x,
                                region,
                                is_virtual: false,
                            },
                        );
                    }
                    None => set.failed_guesses.push(g.clone()),
                }
            }
            if set.points.is_empty() {
                return Err(FlowError::NoConvergence { guesses: guesses.len() });
            }
        }
    }
    set.points.retain(|p| p.satisfies_invariant(model));
    sort(&mut set.points);
    sort(&mut set.virtual_points);
    Ok(set)
}
