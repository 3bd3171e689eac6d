//! Residual suites run by `flowcurv verify`: fixed points, derivative-stack
//! identities, Darboux cofactor, TLS planes and, for the gear model, the
//! first integral and factor checks.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::export::table;
use crate::geometry::{identity_a10_residual, identity_a15_residual, identity_a16_residual};
use crate::integrate::{integrate, propagate, IntegrateOptions};
use crate::jets::derivative_stack_in;
use crate::manifold::{darboux_residual_in, factor_check, lie_phi, phi, phi_in, SlowFastSplit};
use crate::models::{fixed_points, BuiltinKind, FixedPointSet, ModelDef};
use crate::spectral::{
    coplanarity_equivalence, darboux_check_plane, hypercoplanarity_check, spectrum_at, tls_hyperplane, Hyperplane,
};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: Option<f64>,
    /// `None` for report-only rows.
    pub pass: Option<bool>,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass != Some(false))
    }

    fn bound(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        self.checks.push(Check {
            name: name.into(),
            value,
            threshold: Some(threshold),
            pass: Some(value <= threshold),
            note: String::new(),
        });
    }

    fn info(&mut self, name: impl Into<String>, value: f64, note: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            value,
            threshold: None,
            pass: None,
            note: note.into(),
        });
    }

    fn failed(&mut self, name: impl Into<String>, err: &FlowError) {
        self.checks.push(Check {
            name: name.into(),
            value: f64::NAN,
            threshold: None,
            pass: Some(false),
            note: err.to_string(),
        });
    }

    pub fn table(&self) -> String {
        let mut rows = vec![vec![
            "check".to_string(),
            "value".to_string(),
            "threshold".to_string(),
            "status".to_string(),
            "note".to_string(),
        ]];
        for c in &self.checks {
            rows.push(vec![
                c.name.clone(),
                format!("{:.3e}", c.value),
                c.threshold.map_or("-".into(), |t| format!("{t:.0e}")),
                match c.pass {
                    Some(true) => "PASS".into(),
                    Some(false) => "FAIL".into(),
                    None => "info".into(),
                },
                c.note.clone(),
            ]);
        }
        table(&rows)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 1, samples: 500 }
    }
}

fn max(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Symmetric sampling box scaled to the fixed points (unit box without any).
pub fn sampling_box(model: &ModelDef, fps: Option<&FixedPointSet>) -> Vec<(f64, f64)> {
    let reach = fps.map_or(0.0, |s| max(s.all().flat_map(|p| p.location.iter().map(|c| c.abs()))));
    let w = 1.0 + 1.5 * reach;
    vec![(-w, w); model.dim()]
}

fn draw(rng: &mut StdRng, bounds: &[(f64, f64)]) -> Vec<f64> {
    bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect()
}

/// The singular approximation `f_1 = 0` of the built-in slow-fast models,
/// solved for a coordinate in which `f_1` is affine.
pub fn builtin_split(kind: BuiltinKind) -> Option<SlowFastSplit> {
    let unknown = match kind {
        BuiltinKind::Chua4Cubic => 2,
        BuiltinKind::Chua5Cubic => 1,
        BuiltinKind::Magnetoconvection5 => 0,
        _ => return None,
    };
    SlowFastSplit::solving(vec![0], vec![unknown], 1.0).ok()
}

/// States of the run from `x0`, transient dropped, `count` evenly spaced by index.
pub fn attractor_samples(
    model: &ModelDef,
    x0: &[f64],
    transient: f64,
    t_end: f64,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let traj = integrate(model, x0, t_end, 1e-9, 1e-12)?;
    let kept: Vec<&Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= transient)
        .map(|(_, x)| x)
        .collect();
    if kept.is_empty() || count == 0 {
        return Ok(Vec::new());
    }
    Ok((0..count).map(|i| kept[i * kept.len() / count].clone()).collect())
}

/// Median Darboux residual on the singular approximation and at the same
/// points displaced by `shift` in `x1`.
pub fn local_invariance_profile(
    model: &ModelDef,
    split: &SlowFastSplit,
    points: &[Vec<f64>],
    shift: f64,
) -> (f64, f64) {
    let mut on = Vec::new();
    let mut off = Vec::new();
    for p in points {
        let mut x = p.clone();
        if split.project(model, &mut x).is_none() {
            continue;
        }
        on.push(darboux_residual_in(model, &x, None));
        x[0] += shift;
        off.push(darboux_residual_in(model, &x, None));
    }
    (median(on), median(off))
}

/// Points on `plane` inside its region whose displacements by `±dist` along
/// the normal stay in the region; returns (on, off) pairs.
pub fn plane_sample_pairs(
    model: &ModelDef,
    plane: &Hyperplane,
    count: usize,
    dist: f64,
    rng: &mut StdRng,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let region = plane.base_point.region.as_ref();
    let inside = |x: &[f64]| region.is_none_or(|r| model.in_region(x, r));
    let mut out = Vec::with_capacity(count);
    let mut tries = 0;
    while out.len() < count && tries < 1000 * count.max(1) {
        tries += 1;
        let x: Vec<f64> = plane
            .base_point
            .location
            .iter()
            .map(|c| c + rng.gen_range(-2.0..2.0))
            .collect();
        let d = plane.eval(&x);
        let on: Vec<f64> = x.iter().zip(&plane.normal).map(|(a, n)| a - d * n).collect();
        if !inside(&on) {
            continue;
        }
        let off = [dist, -dist]
            .iter()
            .map(|s| {
                on.iter()
                    .zip(&plane.normal)
                    .map(|(a, n)| a + s * n)
                    .collect::<Vec<f64>>()
            })
            .find(|y| inside(y));
        if let Some(off) = off {
            out.push((on, off));
        }
    }
    out
}

fn fixed_point_checks(model: &ModelDef, report: &mut VerifyReport, rng: &mut StdRng) -> Option<FixedPointSet> {
    let set = match fixed_points(model) {
        Ok(s) => s,
        Err(FlowError::NoConvergence { .. }) => {
            report.info("fixed points", 0.0, "none found");
            return None;
        }
        Err(e) => {
            report.failed("fixed points", &e);
            return None;
        }
    };
    let res = max(set.all().map(|p| p.residual(model) / (1.0 + norm(&p.location))));
    report.bound("fixed-point residual |f(x*)|", res, 1e-10);
    let mut worst: f64 = 0.0;
    for p in set.all() {
        let r = p.region.as_ref();
        let near: Vec<f64> = (0..20)
            .map(|_| {
                let u: Vec<f64> = (0..model.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s = 0.1 / norm(&u);
                let y: Vec<f64> = p.location.iter().zip(&u).map(|(a, b)| a + s * b).collect();
                phi_in(model, &y, r).abs()
            })
            .collect();
        let scale = median(near);
        let at = phi_in(model, &p.location, r).abs();
        if at > 0.0 {
            worst = worst.max(at / scale);
        }
    }
    report.bound("phi at fixed points / nearby |phi|", worst, 1e-12);
    Some(set)
}

fn stack_checks(model: &ModelDef, report: &mut VerifyReport, bounds: &[(f64, f64)], rng: &mut StdRng) {
    let n = model.dim();
    let mut krylov: f64 = 0.0;
    let (mut gs_det, mut det_prod, mut trace_id): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..100 {
        let x = draw(rng, bounds);
        let region = model.classify(&x);
        let order = (n + 1).min(crate::jets::MAX_ORDER);
        let Ok(s) = derivative_stack_in(model, &x, order, region.as_ref()) else {
            continue;
        };
        let j = model.jacobian_in(&x, region.as_ref());
        if model.is_piecewise_affine() {
            for k in 0..order - 1 {
                let jd = &j * &s.derivs[k];
                let scale = j.norm() * s.derivs[k].norm() + s.derivs[k + 1].norm();
                if scale > 0.0 {
                    krylov = krylov.max((jd - &s.derivs[k + 1]).norm() / scale);
                }
            }
        }
        let cols = &s.derivs[..n];
        if let Ok(r) = identity_a10_residual(cols) {
            gs_det = gs_det.max(r);
        }
        det_prod = det_prod.max(identity_a15_residual(&j, cols).unwrap_or(f64::NAN));
        trace_id = trace_id.max(identity_a16_residual(&j, cols).unwrap_or(f64::NAN));
    }
    if model.is_piecewise_affine() {
        report.bound("d_{k+1} = J d_k in PWL regions", krylov, 1e-12);
    }
    report.bound("|det| = prod |u_i| (Gram-Schmidt)", gs_det, 1e-10);
    report.bound("det(J a) = det J det a", det_prod, 1e-10);
    report.bound("sum det(.., J a_k, ..) = Tr J det a", trace_id, 1e-10);
}

fn darboux_checks(
    model: &ModelDef,
    report: &mut VerifyReport,
    bounds: &[(f64, f64)],
    samples: usize,
    rng: &mut StdRng,
) {
    let values: Vec<f64> = (0..samples)
        .map(|_| darboux_residual_in(model, &draw(rng, bounds), None))
        .collect();
    if model.is_piecewise_affine() {
        report.bound("Darboux residual, stationary Jacobian", max(values), 1e-8);
    } else {
        report.info(
            "Darboux residual on box (median)",
            median(values),
            "nonlinear: profile only",
        );
    }
}

fn lie_fd_check(model: &ModelDef, report: &mut VerifyReport, x0: &[f64], t_end: f64) {
    let traj = match integrate(model, x0, t_end, 1e-10, 1e-13) {
        Ok(t) => t,
        Err(e) => return report.failed("lie_phi vs finite difference", &e.error),
    };
    let dt = 2e-5;
    let opts = IntegrateOptions::tolerances(1e-13, 1e-15);
    let picks: Vec<&Vec<f64>> = (0..100).map(|i| &traj.states[i * traj.len() / 100]).collect();
    let mut pairs = Vec::new();
    for y in picks {
        // five-point stencil centred at y(2 dt)
        let states: Option<Vec<Vec<f64>>> = (0..5)
            .map(|k| match k {
                0 => Some(y.clone()),
                _ => propagate(model, y, k as f64 * dt, &opts).ok(),
            })
            .collect();
        let Some(s) = states else { continue };
        let p: Vec<f64> = s.iter().map(|x| phi(model, x)).collect();
        let fd = (p[0] - 8.0 * p[1] + 8.0 * p[3] - p[4]) / (12.0 * dt);
        pairs.push((lie_phi(model, &s[2]), fd));
    }
    let typical = median(pairs.iter().map(|p| p.0.abs()).collect());
    let err = max(pairs.iter().map(|(l, f)| (l - f).abs() / l.abs().max(typical)));
    report.bound("lie_phi vs centered difference in time", err, 1e-4);
}

fn plane_checks(model: &ModelDef, set: &FixedPointSet, report: &mut VerifyReport, rng: &mut StdRng) {
    let outer = set.outer();
    let mut planes = Vec::new();
    for fp in &outer {
        match tls_hyperplane(model, fp) {
            Ok(p) => planes.push(p),
            Err(e) => report.failed("TLS hyperplane", &e),
        }
    }
    for (i, plane) in planes.iter().enumerate() {
        let tag = format!("plane {}", i + 1);
        let lie = darboux_check_plane(model, plane, 200, rng.gen());
        report.bound(format!("{tag}: L_V Pi = lambda Pi"), lie.max, 1e-8);

        let pairs = plane_sample_pairs(model, plane, 200, 0.1, rng);
        let region = plane.base_point.region.as_ref();
        let on = max(pairs.iter().map(|(a, _)| phi_in(model, a, region).abs()));
        let off = median(pairs.iter().map(|(_, b)| phi_in(model, b, region).abs()).collect());
        report.bound(format!("{tag}: |phi| on plane / off plane"), on / off, 1e-6);

        match spectrum_at(model, &plane.base_point.location, region) {
            Ok(spec) => {
                report.bound(format!("{tag}: eigen-residual"), spec.max_residual, 1e-8);
                let mut worst: f64 = 0.0;
                let mut par: f64 = 0.0;
                let mut hyper: f64 = 0.0;
                for (p, _) in pairs.iter().take(50) {
                    let pin = model.classify(p);
                    if pin.as_ref() != region {
                        continue;
                    }
                    if let Ok(c) = coplanarity_equivalence(model, p, &spec) {
                        let (r1, r2) = c.scaled();
                        worst = worst.max(r1).max(r2);
                        par = par.max(c.parallelism);
                    }
                    if let Ok(h) = hypercoplanarity_check(model, p, region) {
                        hyper = hyper.max(h.residual);
                    }
                }
                report.bound(format!("{tag}: coplanarity/orthogonality on plane"), worst, 1e-6);
                report.bound(format!("{tag}: slow wedge parallel to left eigenvector"), par, 1e-8);
                report.bound(format!("{tag}: phi = V.(wedge of higher derivatives)"), hyper, 1e-12);
            }
            Err(e) => report.failed(format!("{tag}: spectrum"), &e),
        }
    }
    let symmetric = matches!(
        model.builtin_kind(),
        Some(BuiltinKind::Chua3Pwl | BuiltinKind::Chua4Pwl | BuiltinKind::Chua5Pwl)
    );
    if symmetric && planes.len() == 2 {
        let m = planes[0].mirrored();
        let d = m
            .normal
            .iter()
            .zip(&planes[1].normal)
            .map(|(a, b)| (a - b).abs())
            .fold((m.offset - planes[1].offset).abs(), f64::max);
        report.bound("Pi_2 = mirror image of Pi_1", d, 1e-10);
    }
}

fn gear_checks(model: &ModelDef, report: &mut VerifyReport, seed: u64) {
    let bounds = vec![(-1.0, 1.0); 5];
    let l = model.params().get("L").unwrap_or(f64::NAN);
    match factor_check(model, "x1^2 + x2^2", &bounds, 100, seed) {
        Ok(r) => {
            report.bound("first integral |d(x1^2+x2^2)/dt|", r.lie_abs_max, 1e-12);
            if let Some(v) = r.phi_on_zero_max {
                report.bound("phi on x1^2+x2^2 = 0", v, 1e-6);
            }
        }
        Err(e) => report.failed("first integral", &e),
    }
    match factor_check(model, "x1^2 + x2^2 - x3", &bounds, 200, seed) {
        Ok(r) => {
            report.bound("phi on x3 = x1^2+x2^2", r.phi_on_zero_max.unwrap_or(f64::NAN), 1e-6);
            if let Some(fit) = r.cofactor {
                let k0 = fit.coefficient("1").unwrap_or(f64::NAN);
                report.bound("cofactor of x1^2+x2^2-x3 is -L", ((k0 + l) / l).abs(), 1e-3);
            }
        }
        Err(e) => report.failed("factor x1^2+x2^2-x3", &e),
    }
    match factor_check(model, "x4^2 + beta1", &bounds, 100, seed) {
        Ok(r) => report.info(
            "phi on x4^2+beta1 = 0",
            r.phi_on_zero_max.unwrap_or(f64::NAN),
            if r.zero_points == 0 { "no real zeros" } else { "" },
        ),
        Err(e) => report.failed("factor x4^2+beta1", &e),
    }
    match factor_check(
        model,
        "(x1^2 + x2^2)*(x1^2 + x2^2 - x3)*(x4^2 + beta1)",
        &bounds,
        400,
        seed,
    ) {
        Ok(r) => match r.cofactor {
            Some(fit) => {
                let mut err: f64 = 0.0;
                for (term, c) in fit.terms.iter().zip(&fit.coefficients) {
                    let want = match term.as_str() {
                        "1" => -l,
                        "x4" => 2.0,
                        _ => 0.0,
                    };
                    err = err.max((c - want).abs() / want.abs().max(1.0));
                }
                report.bound("product cofactor = -(L - 2 x4)", err, 1e-3);
            }
            None => report.failed(
                "product cofactor",
                &FlowError::InvalidArgument("no usable points".into()),
            ),
        },
        Err(e) => report.failed("product factor", &e),
    }
}

/// Runs every residual suite that applies to `model`.
pub fn verify_model(model: &ModelDef, opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = StdRng::seed_from_u64(opts.seed);
    let mut report = VerifyReport {
        model: model.name().to_string(),
        checks: Vec::new(),
    };
    let set = fixed_point_checks(model, &mut report, &mut rng);
    let bounds = match model.builtin_kind() {
        Some(BuiltinKind::Gear5) => vec![(-1.0, 1.0); 5],
        _ => sampling_box(model, set.as_ref()),
    };
    stack_checks(model, &mut report, &bounds, &mut rng);
    darboux_checks(model, &mut report, &bounds, opts.samples, &mut rng);
    if !model.is_pwl() {
        let x0 = model
            .builtin_kind()
            .map_or_else(|| vec![0.1; model.dim()], BuiltinKind::default_initial_state);
        let t_end = if model.builtin_kind() == Some(BuiltinKind::Gear5) {
            0.02
        } else {
            5.0
        };
        lie_fd_check(model, &mut report, &x0, t_end);
    }
    if let (true, Some(set)) = (model.is_piecewise_affine() && model.is_pwl(), set.as_ref()) {
        plane_checks(model, set, &mut report, &mut rng);
    }
    if let Some(kind) = model.builtin_kind() {
        if let Some(split) = builtin_split(kind) {
            match attractor_samples(model, &kind.default_initial_state(), 50.0, 150.0, 200) {
                Ok(points) => {
                    let (on, off) = local_invariance_profile(model, &split, &points, 0.5);
                    report.info("Darboux residual on f1 = 0 (median)", on, "attractor points projected");
                    report.info("Darboux residual 0.5 off f1 = 0 (median)", off, "");
                    report.info("off/on ratio", off / on, "local invariance profile");
                }
                Err(e) => report.failed("attractor sampling", &e),
            }
        }
        if kind == BuiltinKind::Gear5 {
            gear_checks(model, &mut report, opts.seed);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{builtin, load_model};

    #[test]
    fn linear_model_passes() {
        let m = load_model(r#"{"name":"lin","dim":3,"rhs":["-x1+x2","-2*x2+x3","-3*x3"]}"#).unwrap();
        let r = verify_model(&m, &VerifyOptions { seed: 3, samples: 50 }).unwrap();
        assert!(r.passed(), "{}", r.table());
    }

    #[test]
    fn chua3_suite_passes() {
        let m = builtin("chua3-pwl").unwrap();
        let r = verify_model(&m, &VerifyOptions { seed: 1, samples: 100 }).unwrap();
        assert!(r.passed(), "{}", r.table());
        assert!(r.checks.iter().any(|c| c.name.contains("mirror")));
    }

    #[test]
    fn median_and_box() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
        assert!(median(vec![]).is_nan());
        let m = builtin("chua3-pwl").unwrap();
        let set = fixed_points(&m).unwrap();
        assert_eq!(sampling_box(&m, Some(&set))[0], (-3.25, 3.25));
    }
}
