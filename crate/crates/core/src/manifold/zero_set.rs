use rayon::prelude::*;
use serde::Serialize;

use super::phi_in;
use crate::error::{FlowError, Result};
use crate::integrate::{propagate, IntegrateOptions, Trajectory};
use crate::models::{ModelDef, Region};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub index: usize,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn value(&self, i: usize) -> f64 {
        let t = i as f64 / (self.count - 1) as f64;
        self.min + t * (self.max - self.min)
    }
}

/// Up to three scanned coordinates; every other coordinate is held at its
/// slice value (0 unless given).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
    pub base: Vec<f64>,
}

impl GridSpec {
    pub fn new(dim: usize, axes: Vec<GridAxis>, slice: &[(usize, f64)]) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(FlowError::InvalidArgument("grid needs 1 to 3 axes".into()));
        }
        let mut used = vec![false; dim];
        for a in &axes {
            if a.index >= dim {
                return Err(FlowError::InvalidArgument(format!(
                    "axis x{} outside R^{dim}",
                    a.index + 1
                )));
            }
            if std::mem::replace(&mut used[a.index], true) {
                return Err(FlowError::InvalidArgument(format!("axis x{} given twice", a.index + 1)));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.min < a.max) {
                return Err(FlowError::InvalidArgument(format!("bad range for x{}", a.index + 1)));
            }
            if a.count < 2 {
                return Err(FlowError::InvalidArgument(format!(
                    "x{} needs at least 2 nodes",
                    a.index + 1
                )));
            }
        }
        let mut base = vec![0.0; dim];
        for &(i, v) in slice {
            if i >= dim || used[i] {
                return Err(FlowError::InvalidArgument(format!(
                    "slice coordinate x{} is outside the model or also a grid axis",
                    i + 1
                )));
            }
            if !v.is_finite() {
                return Err(FlowError::InvalidArgument(format!(
                    "slice value for x{} is not finite",
                    i + 1
                )));
            }
            base[i] = v;
        }
        Ok(GridSpec { axes, base })
    }

    pub fn node_count(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    /// Node `flat` in row-major order with the first axis varying fastest.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.point(&self.multi_index(flat))
    }

    fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = flat % a.count;
                flat /= a.count;
                i
            })
            .collect()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in self.axes.iter().zip(idx).rev() {
            flat = flat * a.count + i;
        }
        flat
    }

    fn point(&self, idx: &[usize]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (a, &i) in self.axes.iter().zip(idx) {
            x[a.index] = a.value(i);
        }
        x
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroSetOptions {
    pub tol_abs: f64,
    /// Relative to the larger `|phi|` of the bracketing pair.
    pub tol_rel: f64,
    /// Bracket width at which trajectory refinement stops.
    pub time_tol: f64,
    pub max_iter: usize,
}

impl Default for ZeroSetOptions {
    fn default() -> Self {
        ZeroSetOptions {
            tol_abs: 1e-300,
            tol_rel: 1e-8,
            time_tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Provenance {
    GridNode { node: Vec<usize> },
    GridEdge { node: Vec<usize>, axis: usize },
    Trajectory { segment: usize, time: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroPoint {
    pub point: Vec<f64>,
    pub phi: f64,
    pub region: Option<Region>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ZeroSet {
    /// Sorted lexicographically by coordinates (grids) or by time (trajectories).
    pub points: Vec<ZeroPoint>,
    /// Nodes or samples where `phi` was not finite.
    pub nonfinite: usize,
    /// Sign changes that did not refine to a zero (jumps across PWL boundaries).
    pub discarded: usize,
    /// Every sample was stationary: `phi` vanishes identically along the input.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

fn accept(phi: f64, scale: f64, opts: &ZeroSetOptions) -> bool {
    phi.abs() <= opts.tol_abs + opts.tol_rel * scale
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Bisection along the segment `a -> b` (region classified at every trial point).
fn bisect_segment(
    model: &ModelDef,
    a: &[f64],
    b: &[f64],
    fa: f64,
    fb: f64,
    opts: &ZeroSetOptions,
) -> Option<(Vec<f64>, f64)> {
    let scale = fa.abs().max(fb.abs());
    let at = |s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect() };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let (mut flo, mut fhi) = (fa, fb);
    for _ in 0..opts.max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let x = at(mid);
        let f = phi_in(model, &x, None);
        if !f.is_finite() {
            return None;
        }
        if accept(f, scale, opts) {
            return Some((x, f));
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = f;
        } else {
            hi = mid;
            fhi = f;
        }
    }
    let (s, f) = if flo.abs() <= fhi.abs() { (lo, flo) } else { (hi, fhi) };
    accept(f, scale, opts).then(|| (at(s), f))
}

/// Zero set of `phi` on a grid: every edge whose end values differ in sign is
/// bisected; nodes where `phi` is exactly zero are emitted as they are.
pub fn zero_set_grid(model: &ModelDef, grid: &GridSpec, opts: &ZeroSetOptions) -> Result<ZeroSet> {
    if grid.base.len() != model.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: model.dim(),
            got: grid.base.len(),
        });
    }
    let total = grid.node_count();
    let values: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|k| phi_in(model, &grid.point(&grid.multi_index(k)), None))
        .collect();

    let mut set = ZeroSet {
        nonfinite: values.iter().filter(|v| !v.is_finite()).count(),
        ..ZeroSet::default()
    };
    let mut edges = Vec::new();
    for k in 0..total {
        let fa = values[k];
        if !fa.is_finite() {
            continue;
        }
        let idx = grid.multi_index(k);
        if fa == 0.0 {
            let point = grid.point(&idx);
            set.points.push(ZeroPoint {
                region: model.classify(&point),
                point,
                phi: 0.0,
                provenance: Provenance::GridNode { node: idx.clone() },
            });
            continue;
        }
        for (axis, a) in grid.axes.iter().enumerate() {
            if idx[axis] + 1 >= a.count {
                continue;
            }
            let mut jdx = idx.clone();
            jdx[axis] += 1;
            let fb = values[grid.flat_index(&jdx)];
            if fb.is_finite() && fb != 0.0 && (fa < 0.0) != (fb < 0.0) {
                edges.push((idx.clone(), jdx, axis, fa, fb));
            }
        }
    }
    let refined: Vec<Option<ZeroPoint>> = edges
        .par_iter()
        .map(|(idx, jdx, axis, fa, fb)| {
            let (point, phi) = bisect_segment(model, &grid.point(idx), &grid.point(jdx), *fa, *fb, opts)?;
            Some(ZeroPoint {
                region: model.classify(&point),
                point,
                phi,
                provenance: Provenance::GridEdge {
                    node: idx.clone(),
                    axis: grid.axes[*axis].index,
                },
            })
        })
        .collect();
    for r in refined {
        match r {
            Some(p) => set.points.push(p),
            None => set.discarded += 1,
        }
    }
    set.points.sort_by(|a, b| lex_cmp(&a.point, &b.point));
    Ok(set)
}

fn stationary(model: &ModelDef, x: &[f64]) -> bool {
    let v = model.rhs(x);
    let speed = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let size = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    speed <= 1e-10 * (1.0 + size)
}

/// Refines the bracket `[0, dt]` of `tau -> phi(x(t_i + tau))` by bisection
/// with an Illinois false-position step, integrating from the left sample.
fn refine_in_time(
    model: &ModelDef,
    x0: &[f64],
    region: Option<&Region>,
    dt: f64,
    fa: f64,
    fb: f64,
    xb: &[f64],
    opts: &ZeroSetOptions,
) -> Option<(f64, Vec<f64>, f64)> {
    let scale = fa.abs().max(fb.abs());
    let iopts = IntegrateOptions::tolerances(1e-12, 1e-14);
    let (mut lo, mut hi) = (0.0, dt);
    let (mut flo, mut fhi) = (fa, fb);
    let (mut xlo, mut xhi) = (x0.to_vec(), xb.to_vec());
    let mut side = 0i8;
    let mut iter = 0;
    while hi - lo > opts.time_tol && iter < opts.max_iter {
        iter += 1;
        // alternate false position (Illinois-weighted) with plain bisection
        let secant = lo + (hi - lo) * flo / (flo - fhi);
        let tau = if iter % 2 == 1 && secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let x = propagate(model, x0, tau, &iopts).ok()?;
        let f = phi_in(model, &x, region);
        if !f.is_finite() {
            return None;
        }
        if f.abs() <= opts.tol_abs + 1e-3 * opts.tol_rel * scale {
            return Some((tau, x, f));
        }
        if (f < 0.0) == (flo < 0.0) {
            lo = tau;
            flo = f;
            xlo = x;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = tau;
            fhi = f;
            xhi = x;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let f_lo = phi_in(model, &xlo, region);
    let f_hi = phi_in(model, &xhi, region);
    let (tau, x, f) = if f_lo.abs() <= f_hi.abs() {
        (lo, xlo, f_lo)
    } else {
        (hi, xhi, f_hi)
    };
    accept(f, scale, opts).then_some((tau, x, f))
}

/// Points where a trajectory pierces `phi = 0`, located by refining each sign
/// change of `phi` between consecutive samples in time.
pub fn zero_crossings_on_trajectory(model: &ModelDef, traj: &Trajectory, opts: &ZeroSetOptions) -> Result<ZeroSet> {
    if let Some(bad) = traj.states.iter().find(|x| x.len() != model.dim()) {
        return Err(FlowError::DimensionMismatch {
            expected: model.dim(),
            got: bad.len(),
        });
    }
    let mut set = ZeroSet::default();
    if traj.is_empty() {
        return Ok(set);
    }
    if traj.states.iter().all(|x| stationary(model, x)) {
        set.degenerate = true;
        return Ok(set);
    }
    let region_of = |i: usize| -> Option<Region> {
        traj.regions
            .get(i)
            .cloned()
            .flatten()
            .or_else(|| model.classify(&traj.states[i]))
    };
    let values: Vec<f64> = (0..traj.len())
        .into_par_iter()
        .map(|i| phi_in(model, &traj.states[i], region_of(i).as_ref()))
        .collect();
    set.nonfinite = values.iter().filter(|v| !v.is_finite()).count();

    let mut brackets = Vec::new();
    for i in 0..traj.len().saturating_sub(1) {
        let (fa, fb) = (values[i], values[i + 1]);
        if !(fa.is_finite() && fb.is_finite()) || fa == 0.0 || (fa < 0.0) == (fb < 0.0) && fb != 0.0 {
            continue;
        }
        let (ra, rb) = (region_of(i), region_of(i + 1));
        if ra != rb {
            set.warnings.push(format!(
                "sign change of phi between t = {} and t = {} straddles regions {} -> {}",
                traj.times[i],
                traj.times[i + 1],
                ra.as_ref().map_or(String::new(), |r| r.to_string()),
                rb.as_ref().map_or(String::new(), |r| r.to_string()),
            ));
        }
        brackets.push((i, ra));
    }
    let refined: Vec<Option<ZeroPoint>> = brackets
        .par_iter()
        .map(|(i, region)| {
            let i = *i;
            let (xa, xb) = (&traj.states[i], &traj.states[i + 1]);
            let fa = values[i];
            // the segment lies in the left sample's region: compare like with like
            let fb = phi_in(model, xb, region.as_ref());
            if fb == 0.0 {
                return Some(ZeroPoint {
                    point: xb.clone(),
                    phi: 0.0,
                    region: region.clone(),
                    provenance: Provenance::Trajectory {
                        segment: i,
                        time: traj.times[i + 1],
                    },
                });
            }
            if !fb.is_finite() || (fa < 0.0) == (fb < 0.0) {
                return None;
            }
            let dt = traj.times[i + 1] - traj.times[i];
            let (tau, point, phi) = refine_in_time(model, xa, region.as_ref(), dt, fa, fb, xb, opts)?;
            Some(ZeroPoint {
                point,
                phi,
                region: region.clone(),
                provenance: Provenance::Trajectory {
                    segment: i,
                    time: traj.times[i] + tau,
                },
            })
        })
        .collect();
    for r in refined {
        match r {
            Some(p) => set.points.push(p),
            None => set.discarded += 1,
        }
    }
    set.points.dedup_by(|a, b| a.point == b.point);
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::integrate;
    use crate::manifold::phi;
    use crate::models::{builtin, load_model};

    fn axis(index: usize, min: f64, max: f64, count: usize) -> GridAxis {
        GridAxis { index, min, max, count }
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, vec![], &[]).is_err());
        assert!(GridSpec::new(3, vec![axis(0, 0.0, 1.0, 1)], &[]).is_err());
        assert!(GridSpec::new(3, vec![axis(0, 1.0, 0.0, 3)], &[]).is_err());
        assert!(GridSpec::new(3, vec![axis(0, 0.0, 1.0, 3), axis(0, 0.0, 1.0, 3)], &[]).is_err());
        assert!(GridSpec::new(3, vec![axis(0, 0.0, 1.0, 3)], &[(0, 1.0)]).is_err());
        let g = GridSpec::new(3, vec![axis(0, 0.0, 1.0, 3), axis(2, -1.0, 1.0, 5)], &[(1, 0.5)]).unwrap();
        assert_eq!(g.node_count(), 15);
        assert_eq!(g.point(&[2, 4]), vec![1.0, 0.5, 1.0]);
        for k in 0..15 {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
    }

    #[test]
    fn planar_linear_zero_set_is_a_line() {
        // x' = -x1, y' = -2 x2: phi = det((-x, -2y), (x, 4y)) = -2xy
        let m = load_model(r#"{"name":"lin","dim":2,"rhs":["-x1","-2*x2"]}"#).unwrap();
        let g = GridSpec::new(2, vec![axis(0, -1.0, 1.3, 7), axis(1, 0.2, 1.0, 4)], &[]).unwrap();
        let z = zero_set_grid(&m, &g, &ZeroSetOptions::default()).unwrap();
        assert_eq!(z.points.len(), 4);
        assert!(z.points.iter().all(|p| p.point[0].abs() < 1e-8));
        assert!(z.points.windows(2).all(|w| w[0].point[1] < w[1].point[1]));
    }

    #[test]
    fn constant_sign_region_is_empty() {
        let m = builtin("chua3-pwl").unwrap();
        let g = GridSpec::new(3, vec![axis(0, 1.9, 2.1, 3), axis(1, -0.05, 0.05, 3)], &[(2, 0.0)]).unwrap();
        assert!(phi(&m, &[2.0, 0.0, 0.0]).abs() > 1e-3);
        let z = zero_set_grid(&m, &g, &ZeroSetOptions::default()).unwrap();
        assert!(z.points.is_empty());
    }

    #[test]
    fn fixed_point_trajectory_is_degenerate() {
        let m = builtin("chua3-pwl").unwrap();
        let traj = integrate(&m, &[1.5, 0.0, -1.5], 1.0, 1e-9, 1e-12).unwrap();
        let z = zero_crossings_on_trajectory(&m, &traj, &ZeroSetOptions::default()).unwrap();
        assert!(z.degenerate && z.points.is_empty());
    }
}
