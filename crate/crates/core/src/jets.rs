//! Truncated Taylor series in time and the recurrence that turns a vector
//! field plus a phase-space point into the exact derivative stack
//! `X', X'', ..., X^(m)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DVector;

use crate::error::{FlowError, Result};
use crate::models::{ModelDef, Region};

/// Highest truncation order a [`Jet`] can carry.
pub const MAX_ORDER: usize = 12;

/// Default cap on the derivative order accepted by [`derivative_stack`].
pub const DEFAULT_ORDER_CAP: usize = MAX_ORDER;

/// Arithmetic shared by plain scalars and jets, so a single right-hand side
/// implementation serves both evaluation paths.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Order-0 value.
    fn value(&self) -> f64;
    /// A constant carrying the same shape (truncation order) as `self`.
    fn lift(&self, c: f64) -> Self;

    fn powi(self, n: u32) -> Self {
        let mut acc = self.lift(1.0);
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn lift(&self, c: f64) -> Self {
        c
    }
}

/// Truncated power series `c0 + c1 t + ... + cM t^M` of a scalar function of time.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    coeffs: [f64; MAX_ORDER + 1],
    order: u8,
}

impl Jet {
    pub fn constant(value: f64, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let mut coeffs = [0.0; MAX_ORDER + 1];
        coeffs[0] = value;
        Jet {
            coeffs,
            order: order as u8,
        }
    }

    /// Builds a jet from explicit coefficients; missing ones are zero.
    pub fn from_coeffs(cs: &[f64], order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        assert!(cs.len() <= order + 1, "more coefficients than the order allows");
        let mut coeffs = [0.0; MAX_ORDER + 1];
        coeffs[..cs.len()].copy_from_slice(cs);
        Jet {
            coeffs,
            order: order as u8,
        }
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn coeff(&self, k: usize) -> f64 {
        if k <= self.order() {
            self.coeffs[k]
        } else {
            0.0
        }
    }

    pub fn set_coeff(&mut self, k: usize, v: f64) {
        assert!(k <= self.order());
        self.coeffs[k] = v;
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs[..=self.order()]
    }

    /// `k`-th time derivative at t = 0, i.e. `k! * c_k`.
    pub fn derivative(&self, k: usize) -> f64 {
        self.coeff(k) * factorial(k)
    }

    fn joint_order(&self, other: &Jet) -> usize {
        debug_assert_eq!(self.order, other.order, "mixed jet orders");
        self.order.min(other.order) as usize
    }
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Jet").field(&self.coeffs()).finish()
    }
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        let m = self.joint_order(&rhs);
        for k in 0..=m {
            self.coeffs[k] += rhs.coeffs[k];
        }
        self.order = m as u8;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        let m = self.joint_order(&rhs);
        for k in 0..=m {
            self.coeffs[k] -= rhs.coeffs[k];
        }
        self.order = m as u8;
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let m = self.joint_order(&rhs);
        let mut out = [0.0; MAX_ORDER + 1];
        for (k, slot) in out.iter_mut().enumerate().take(m + 1) {
            let mut s = 0.0;
            for j in 0..=k {
                s += self.coeffs[j] * rhs.coeffs[k - j];
            }
            *slot = s;
        }
        Jet {
            coeffs: out,
            order: m as u8,
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for c in self.coeffs.iter_mut() {
            *c = -*c;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for c in self.coeffs.iter_mut().take(self.order as usize + 1) {
            *c *= rhs;
        }
        self
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn lift(&self, c: f64) -> Self {
        Jet::constant(c, self.order())
    }
}

/// Ordered time derivatives `d_1 ... d_m` of the trajectory through `point`.
#[derive(Debug, Clone)]
pub struct DerivStack {
    pub point: Vec<f64>,
    pub derivs: Vec<DVector<f64>>,
    /// PWL region the whole stack was evaluated in.
    pub region: Option<Region>,
}

impl DerivStack {
    pub fn order(&self) -> usize {
        self.derivs.len()
    }

    /// `k`-th derivative, 1-based (`d(1)` is the velocity).
    pub fn d(&self, k: usize) -> &DVector<f64> {
        &self.derivs[k - 1]
    }

    /// Velocity, acceleration, jerk...
    pub fn velocity(&self) -> &DVector<f64> {
        self.d(1)
    }

    /// Leading `m` derivatives.
    pub fn truncated(&self, m: usize) -> DerivStack {
        DerivStack {
            point: self.point.clone(),
            derivs: self.derivs[..m].to_vec(),
            region: self.region.clone(),
        }
    }

    /// Degree-`m` Taylor polynomial of the trajectory evaluated at time `t`.
    pub fn taylor_predict(&self, t: f64) -> DVector<f64> {
        let mut x = DVector::from_column_slice(&self.point);
        let mut tk = 1.0;
        for (k, d) in self.derivs.iter().enumerate() {
            tk *= t / (k + 1) as f64;
            x += d * tk;
        }
        x
    }
}

/// Component-wise evaluation of the model right-hand side on jets.
pub fn jet_eval(model: &ModelDef, x_jets: &[Jet]) -> Result<Vec<Jet>> {
    jet_eval_in(model, x_jets, None)
}

/// As [`jet_eval`] with the PWL region pinned (`None` classifies at the
/// order-0 values).
pub fn jet_eval_in(model: &ModelDef, x_jets: &[Jet], region: Option<&Region>) -> Result<Vec<Jet>> {
    if x_jets.len() != model.dim() {
        return Err(FlowError::DimensionMismatch {
            expected: model.dim(),
            got: x_jets.len(),
        });
    }
    if let Some(first) = x_jets.first() {
        if let Some(bad) = x_jets.iter().find(|j| j.order() != first.order()) {
            return Err(FlowError::MixedJetOrders {
                left: first.order(),
                right: bad.order(),
            });
        }
    }
    Ok(model.eval(x_jets, region))
}

/// Exact derivative stack of order `order` at `x`, region classified at `x`.
pub fn derivative_stack(model: &ModelDef, x: &[f64], order: usize) -> Result<DerivStack> {
    let region = model.classify(x);
    derivative_stack_in(model, x, order, region.as_ref())
}

/// Derivative stack with the PWL region frozen to `region`.
///
/// Taylor coefficients follow `c_{k+1} = (f(c))_k / (k + 1)`: coefficient
/// `k` of the right-hand side only depends on input coefficients up to `k`,
/// so each pass fixes one more coefficient.
pub fn derivative_stack_in(model: &ModelDef, x: &[f64], order: usize, region: Option<&Region>) -> Result<DerivStack> {
    derivative_stack_capped(model, x, order, region, DEFAULT_ORDER_CAP)
}

pub fn derivative_stack_capped(
    model: &ModelDef,
    x: &[f64],
    order: usize,
    region: Option<&Region>,
    cap: usize,
) -> Result<DerivStack> {
    let n = model.dim();
    if x.len() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let cap = cap.min(MAX_ORDER);
    if order == 0 || order > cap {
        return Err(FlowError::OrderOutOfRange { order, cap });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite("state"));
    }
    let region = match region {
        Some(r) => Some(r.clone()),
        None => model.classify(x),
    };

    let mut jets: Vec<Jet> = x.iter().map(|&v| Jet::constant(v, order)).collect();
    for k in 0..order {
        let f = model.eval(&jets, region.as_ref());
        let denom = (k + 1) as f64;
        for (xj, fj) in jets.iter_mut().zip(&f) {
            xj.set_coeff(k + 1, fj.coeff(k) / denom);
        }
    }

    let derivs = (1..=order)
        .map(|k| DVector::from_iterator(n, jets.iter().map(|j| j.derivative(k))))
        .collect();
    Ok(DerivStack {
        point: x.to_vec(),
        derivs,
        region,
    })
}
