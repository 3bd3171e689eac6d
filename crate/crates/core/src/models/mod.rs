//! Model abstraction, the built-in model zoo and the user config format.

mod builtin;
mod config;
pub mod expr;
mod fixed;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::jets::Scalar;

pub use builtin::{builtin, builtin_config, BuiltinKind, REGISTRY};
pub use config::{load_model, load_model_file, ModelConfig};
pub use fixed::{fixed_points, newton_polish, FixedPoint, FixedPointSet, NewtonOptions};

use builtin::BuiltinSystem;
use expr::ExprSystem;

/// Piecewise-linear characteristic of Chua's diode.
///
/// Continuous at `|x1| = 1`; the middle branch includes both breakpoints.
pub fn pwl_k(x1: f64, a: f64, b: f64) -> f64 {
    Branch::classify(x1).pwl(x1, a, b)
}

/// Odd cubic characteristic `c1 x^3 + c2 x`.
pub fn cubic_k(x1: f64, c1: f64, c2: f64) -> f64 {
    c1 * x1 * x1 * x1 + c2 * x1
}

/// Branch of a piecewise-linear nonlinearity with breakpoints at `±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Branch {
    Lower,
    Middle,
    Upper,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Lower, Branch::Middle, Branch::Upper];

    /// Breakpoints themselves fall into the middle branch.
    pub fn classify(s: f64) -> Branch {
        if s > 1.0 {
            Branch::Upper
        } else if s < -1.0 {
            Branch::Lower
        } else {
            Branch::Middle
        }
    }

    pub fn slope(self, a: f64, b: f64) -> f64 {
        match self {
            Branch::Middle => a,
            _ => b,
        }
    }

    pub fn offset(self, a: f64, b: f64) -> f64 {
        match self {
            Branch::Upper => a - b,
            Branch::Middle => 0.0,
            Branch::Lower => b - a,
        }
    }

    /// Affine piece of `k` on this branch, extended to all of `R`.
    pub fn pwl<T: Scalar>(self, s: T, a: f64, b: f64) -> T {
        s * self.slope(a, b) + self.offset(a, b)
    }

    /// Whether `s` lies in the closed set belonging to this branch.
    pub fn contains(self, s: f64) -> bool {
        match self {
            Branch::Upper => s >= 1.0,
            Branch::Middle => (-1.0..=1.0).contains(&s),
            Branch::Lower => s <= -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Lower => "lower",
            Branch::Middle => "middle",
            Branch::Upper => "upper",
        }
    }
}

/// Region label of a PWL model: one branch per nonlinearity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Region(pub Vec<Branch>);

impl Region {
    pub fn single(b: Branch) -> Self {
        Region(vec![b])
    }

    pub fn branches(&self) -> &[Branch] {
        &self.0
    }

    pub fn is_outer(&self) -> bool {
        self.0.iter().any(|b| *b != Branch::Middle)
    }

    /// Every region for `slots` nonlinearities, in lexicographic order.
    pub fn enumerate(slots: usize) -> Vec<Region> {
        let mut out = vec![Region(Vec::new())];
        for _ in 0..slots {
            out = out
                .into_iter()
                .flat_map(|r| {
                    Branch::ALL.iter().map(move |b| {
                        let mut v = r.0.clone();
                        v.push(*b);
                        Region(v)
                    })
                })
                .collect();
        }
        out
    }

    /// Mirror image under `s -> -s` of every nonlinearity argument.
    pub fn mirrored(&self) -> Region {
        Region(
            self.0
                .iter()
                .map(|b| match b {
                    Branch::Lower => Branch::Upper,
                    Branch::Middle => Branch::Middle,
                    Branch::Upper => Branch::Lower,
                })
                .collect(),
        )
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|b| b.name()).collect();
        f.write_str(&names.join("/"))
    }
}

/// Named real parameters, in declaration order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet(Vec<(String, f64)>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.set(name, value);
        self
    }

    pub fn set(&mut self, name: &str, value: f64) {
        match self.0.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = value,
            None => self.0.push((name.to_string(), value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub(crate) fn require(&self, name: &str) -> Result<f64> {
        self.get(name).ok_or_else(|| FlowError::UnknownParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub(crate) enum System {
    Builtin(BuiltinSystem),
    Expr(ExprSystem),
}

#[derive(Debug, Clone)]
enum Origin {
    Builtin(BuiltinKind),
    Config(ModelConfig),
}

/// An `n`-dimensional autonomous vector field. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelDef {
    name: String,
    dim: usize,
    params: ParamSet,
    system: System,
    fixed_point_guesses: Vec<Vec<f64>>,
    origin: Origin,
}

impl ModelDef {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn fixed_point_guesses(&self) -> &[Vec<f64>] {
        &self.fixed_point_guesses
    }

    pub fn builtin_kind(&self) -> Option<BuiltinKind> {
        match self.origin {
            Origin::Builtin(k) => Some(k),
            Origin::Config(_) => None,
        }
    }

    /// Rebuilds the model with one parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<ModelDef> {
        if self.params.get(name).is_none() {
            return Err(FlowError::UnknownParam(name.to_string()));
        }
        let mut params = self.params.clone();
        params.set(name, value);
        match &self.origin {
            Origin::Builtin(kind) => builtin::build(*kind, params),
            Origin::Config(cfg) => {
                let mut cfg = cfg.clone();
                cfg.set_param(name, value);
                config::from_config(&cfg)
            }
        }
    }

    /// Number of piecewise-linear nonlinearities (0 for smooth models).
    pub fn pwl_slots(&self) -> usize {
        match &self.system {
            System::Builtin(b) => b.pwl_slots(),
            System::Expr(e) => e.pwl_slots(),
        }
    }

    pub fn is_pwl(&self) -> bool {
        self.pwl_slots() > 0
    }

    /// Whether the field is affine inside every region (constant Jacobian per region).
    pub fn is_piecewise_affine(&self) -> bool {
        match &self.system {
            System::Builtin(b) => b.is_piecewise_affine(),
            System::Expr(e) => e.is_piecewise_affine(),
        }
    }

    /// Values of the PWL nonlinearity arguments (the switching functions) at `x`.
    pub fn switching_values(&self, x: &[f64]) -> Vec<f64> {
        match &self.system {
            System::Builtin(b) => b.switching_values(x),
            System::Expr(e) => e.switching_values(x),
        }
    }

    /// Region of `x`, `None` for smooth models.
    pub fn classify(&self, x: &[f64]) -> Option<Region> {
        if !self.is_pwl() {
            return None;
        }
        Some(Region(
            self.switching_values(x).into_iter().map(Branch::classify).collect(),
        ))
    }

    /// Whether `x` lies in the closure of `region`.
    pub fn in_region(&self, x: &[f64], region: &Region) -> bool {
        self.switching_values(x)
            .into_iter()
            .zip(region.branches())
            .all(|(s, b)| b.contains(s))
    }

    /// Right-hand side on any scalar type, region pinned or classified at the
    /// order-0 values.
    pub fn eval<T: Scalar>(&self, x: &[T], region: Option<&Region>) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.system {
            System::Builtin(b) => b.eval(x, region),
            System::Expr(e) => e.eval(x, region),
        }
    }

    pub fn rhs(&self, x: &[f64]) -> Vec<f64> {
        self.eval(x, None)
    }

    pub fn rhs_in(&self, x: &[f64], region: Option<&Region>) -> Vec<f64> {
        self.eval(x, region)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.jacobian_in(x, None)
    }

    pub fn jacobian_in(&self, x: &[f64], region: Option<&Region>) -> DMatrix<f64> {
        let owned;
        let region = match region {
            Some(r) => Some(r),
            None => {
                owned = self.classify(x);
                owned.as_ref()
            }
        };
        match &self.system {
            System::Builtin(b) => b.jacobian(x, region),
            System::Expr(e) => e.jacobian(x, region),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pwl_examples() {
        let (a, b) = (-8.0 / 7.0, -5.0 / 7.0);
        assert_eq!(pwl_k(0.0, a, b), 0.0);
        assert_eq!(pwl_k(1.0, a, b), a);
        assert_eq!(Branch::Upper.pwl(1.0, a, b), a);
        assert!((pwl_k(1.5, a, b) + 1.5).abs() < 1e-15);
        assert!((pwl_k(-1.5, a, b) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn pwl_is_continuous_at_breakpoints() {
        for &(a, b) in &[(-8.0 / 7.0, -5.0 / 7.0), (-0.42, 1.2), (-1.246, -0.6724), (3.0, 0.25)] {
            assert!((Branch::Middle.pwl(1.0, a, b) - Branch::Upper.pwl(1.0, a, b)).abs() < 1e-15);
            assert!((Branch::Middle.pwl(-1.0, a, b) - Branch::Lower.pwl(-1.0, a, b)).abs() < 1e-15);
        }
    }

    #[test]
    fn cubic_examples() {
        assert_eq!(cubic_k(0.0, 0.3937, -0.7235), 0.0);
        assert!((cubic_k(1.0, 0.3937, -0.7235) + 0.3298).abs() < 1e-12);
        let v = cubic_k(-2.0, 0.1068, -0.3056);
        assert!((v + 0.2432).abs() < 1e-12);
        assert_eq!(v, -cubic_k(2.0, 0.1068, -0.3056));
    }

    #[test]
    fn breakpoint_classifies_as_middle() {
        assert_eq!(Branch::classify(1.0), Branch::Middle);
        assert_eq!(Branch::classify(-1.0), Branch::Middle);
        assert_eq!(Branch::classify(1.0 + 1e-15), Branch::Upper);
    }

    #[test]
    fn region_enumeration() {
        assert_eq!(Region::enumerate(0), vec![Region(vec![])]);
        let r2 = Region::enumerate(2);
        assert_eq!(r2.len(), 9);
        assert_eq!(r2[0], Region(vec![Branch::Lower, Branch::Lower]));
        assert_eq!(Region::single(Branch::Upper).to_string(), "upper");
        assert_eq!(Region::single(Branch::Upper).mirrored(), Region::single(Branch::Lower));
    }
}
