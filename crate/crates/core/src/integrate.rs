//! Dormand-Prince 5(4) integration with localization of PWL region crossings.

use std::fmt;

use serde::Serialize;

use crate::error::FlowError;
use crate::models::{Branch, ModelDef, Region};

/// Time tolerance for bisecting a region crossing.
pub const EVENT_TIME_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; estimated from the field when `None`.
    pub h0: Option<f64>,
    /// Largest allowed step; `t_end` when `None`.
    pub h_max: Option<f64>,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            h0: None,
            h_max: None,
            max_steps: 20_000_000,
        }
    }
}

impl IntegrateOptions {
    pub fn tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegrateOptions {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }
}

/// Crossing of switching function `slot` through `boundary` (`±1`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub slot: usize,
    pub boundary: f64,
    pub from: Region,
    pub to: Region,
}

impl Event {
    pub fn label(&self) -> String {
        format!("s{}={:+}", self.slot + 1, self.boundary)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    /// Region each state belongs to (`None` for smooth models).
    pub regions: Vec<Option<Region>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    fn push(&mut self, t: f64, x: Vec<f64>, region: Option<Region>) {
        self.times.push(t);
        self.states.push(x);
        self.regions.push(region);
    }
}

/// Aborted integration with everything computed up to the failure.
#[derive(Debug)]
pub struct IntegrationFailure {
    pub error: FlowError,
    pub partial: Trajectory,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} samples kept)", self.error, self.partial.len())
    }
}

impl std::error::Error for IntegrationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<IntegrationFailure> for FlowError {
    fn from(f: IntegrationFailure) -> Self {
        f.error
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus the embedded fourth-order ones.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Stepper<'a> {
    model: &'a ModelDef,
    n: usize,
}

struct Step {
    x: Vec<f64>,
    f_end: Vec<f64>,
    err: Vec<f64>,
}

impl Stepper<'_> {
    fn f(&self, x: &[f64], region: Option<&Region>) -> Vec<f64> {
        self.model.rhs_in(x, region)
    }

    /// One DP step of size `h` from `x` with `k1 = f(x)`, field frozen in `region`.
    fn step(&self, x: &[f64], k1: &[f64], h: f64, region: Option<&Region>) -> Step {
        let n = self.n;
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k1.to_vec());
        let mut y = vec![0.0; n];
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    acc += A[s][j] * kj[i];
                }
                y[i] = x[i] + h * acc;
            }
            k.push(self.f(&y, region));
        }
        // the last stage is evaluated at the fifth-order solution (FSAL)
        let err = (0..n)
            .map(|i| h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>())
            .collect();
        Step {
            x: y,
            f_end: k.pop().expect("seven stages"),
            err,
        }
    }
}

fn error_norm(err: &[f64], x0: &[f64], x1: &[f64], opts: &IntegrateOptions) -> f64 {
    let n = err.len() as f64;
    let sum: f64 = err
        .iter()
        .zip(x0.iter().zip(x1))
        .map(|(e, (a, b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step(st: &Stepper<'_>, x: &[f64], f0: &[f64], region: Option<&Region>, opts: &IntegrateOptions) -> f64 {
    let scale: Vec<f64> = x.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
    let rms = |v: &[f64]| (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    let d0 = rms(x);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let x1: Vec<f64> = x.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let f1 = st.f(&x1, region);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1)
}

/// How far `x` lies outside `region`, maximized over switching functions;
/// `<= 0` inside. Also returns the slot and boundary that is violated most.
fn outside(model: &ModelDef, x: &[f64], region: &Region) -> (f64, usize, f64) {
    let mut worst = (f64::NEG_INFINITY, 0, 1.0);
    for (slot, (s, b)) in model.switching_values(x).into_iter().zip(region.branches()).enumerate() {
        let (d, boundary) = match b {
            Branch::Upper => (1.0 - s, 1.0),
            Branch::Lower => (s + 1.0, -1.0),
            Branch::Middle if s >= 0.0 => (s - 1.0, 1.0),
            Branch::Middle => (-1.0 - s, -1.0),
        };
        if d > worst.0 {
            worst = (d, slot, boundary);
        }
    }
    worst
}

/// Integrates `x' = f(x)` from `x0` over `[0, t_end]`.
pub fn integrate(
    model: &ModelDef,
    x0: &[f64],
    t_end: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Trajectory, IntegrationFailure> {
    integrate_with(model, x0, t_end, &IntegrateOptions::tolerances(rel_tol, abs_tol))
}

pub fn integrate_with(
    model: &ModelDef,
    x0: &[f64],
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory::default();
    let fail = |error: FlowError, partial: Trajectory| Err(IntegrationFailure { error, partial });
    if x0.len() != model.dim() {
        return fail(
            FlowError::DimensionMismatch {
                expected: model.dim(),
                got: x0.len(),
            },
            traj,
        );
    }
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return fail(FlowError::InvalidArgument("tolerances must be positive".into()), traj);
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return fail(FlowError::InvalidArgument("t_end must be positive".into()), traj);
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return fail(FlowError::NonFinite("initial state"), traj);
    }

    let st = Stepper { model, n: model.dim() };
    let mut region = model.classify(x0);
    let mut t = 0.0;
    let mut x = x0.to_vec();
    let mut f = st.f(&x, region.as_ref());
    traj.push(t, x.clone(), region.clone());

    let h_max = opts.h_max.unwrap_or(t_end).min(t_end);
    let mut h = opts
        .h0
        .unwrap_or_else(|| initial_step(&st, &x, &f, region.as_ref(), opts))
        .min(h_max);
    let mut steps = 0;

    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return fail(
                FlowError::StepLimit {
                    t,
                    steps: opts.max_steps,
                },
                traj,
            );
        }
        let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
        if h < h_min {
            return fail(FlowError::StepUnderflow { t, h }, traj);
        }
        let last = t + h >= t_end;
        let h_try = if last { t_end - t } else { h };
        let step = st.step(&x, &f, h_try, region.as_ref());
        if step.x.iter().any(|v| !v.is_finite()) {
            if h_try <= h_min {
                return fail(FlowError::NonFinite("state"), traj);
            }
            h = h_try * 0.2;
            continue;
        }
        let en = error_norm(&step.err, &x, &step.x, opts);
        if en > 1.0 {
            h = h_try * (0.9 * en.powf(-0.2)).max(0.2);
            continue;
        }
        let factor = if en == 0.0 {
            5.0
        } else {
            (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
        };

        let exit = region
            .as_ref()
            .map(|r| (r, outside(model, &step.x, r)))
            .filter(|(_, o)| o.0 > 0.0);
        match exit {
            None => {
                t = if last { t_end } else { t + h_try };
                x = step.x;
                f = step.f_end;
                traj.push(t, x.clone(), region.clone());
            }
            Some((r, _)) => {
                // bisect the step fraction at which the frozen flow leaves the region
                let (mut lo, mut hi) = (0.0, 1.0);
                let mut hi_state = step;
                while (hi - lo) * h_try > EVENT_TIME_TOL {
                    let mid = 0.5 * (lo + hi);
                    let s = st.step(&x, &f, mid * h_try, Some(r));
                    if outside(model, &s.x, r).0 > 0.0 {
                        hi = mid;
                        hi_state = s;
                    } else {
                        lo = mid;
                    }
                }
                let (_, slot, boundary) = outside(model, &hi_state.x, r);
                let from = r.clone();
                t += hi * h_try;
                x = hi_state.x;
                region = model.classify(&x);
                let to = region.clone().expect("PWL model has a region");
                f = st.f(&x, region.as_ref());
                traj.events.push(Event {
                    time: t,
                    slot,
                    boundary,
                    from,
                    to,
                });
                traj.push(t, x.clone(), region.clone());
                if hi < 1.0 && t >= t_end {
                    break;
                }
                continue;
            }
        }
        h = (h_try * factor).min(h_max);
        if last {
            break;
        }
    }
    Ok(traj)
}

/// State reached from `x` after time `dt` (`dt > 0`).
pub fn propagate(model: &ModelDef, x: &[f64], dt: f64, opts: &IntegrateOptions) -> Result<Vec<f64>, FlowError> {
    let traj = integrate_with(model, x, dt, opts)?;
    Ok(traj.last_state().expect("nonempty trajectory").to_vec())
}
