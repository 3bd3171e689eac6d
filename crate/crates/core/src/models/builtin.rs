use nalgebra::{DMatrix, DVector};

use super::{Branch, ModelDef, Origin, ParamSet, Region, System};
use crate::error::{FlowError, Result};
use crate::jets::Scalar;

/// Registry names of the built-in models, in listing order.
pub const REGISTRY: [&str; 7] = [
    "chua3-pwl",
    "chua4-pwl",
    "chua5-pwl",
    "chua4-cubic",
    "chua5-cubic",
    "magnetoconvection5",
    "gear5",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinKind {
    Chua3Pwl,
    Chua4Pwl,
    Chua5Pwl,
    Chua4Cubic,
    Chua5Cubic,
    Magnetoconvection5,
    Gear5,
}

impl BuiltinKind {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "chua3-pwl" => Self::Chua3Pwl,
            "chua4-pwl" => Self::Chua4Pwl,
            "chua5-pwl" => Self::Chua5Pwl,
            "chua4-cubic" => Self::Chua4Cubic,
            "chua5-cubic" => Self::Chua5Cubic,
            "magnetoconvection5" => Self::Magnetoconvection5,
            "gear5" => Self::Gear5,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Chua3Pwl => "chua3-pwl",
            Self::Chua4Pwl => "chua4-pwl",
            Self::Chua5Pwl => "chua5-pwl",
            Self::Chua4Cubic => "chua4-cubic",
            Self::Chua5Cubic => "chua5-cubic",
            Self::Magnetoconvection5 => "magnetoconvection5",
            Self::Gear5 => "gear5",
        }
    }

    pub fn default_params(self) -> ParamSet {
        let chua4 = || {
            ParamSet::new()
                .with("alpha1", 2.1429)
                .with("alpha2", -0.18)
                .with("beta1", 0.0774)
                .with("beta2", 0.003)
        };
        let chua5 = || {
            ParamSet::new()
                .with("alpha1", 9.934)
                .with("alpha2", 1.0)
                .with("beta1", 14.47)
                .with("beta2", -406.5)
                .with("gamma1", -0.0152)
                .with("gamma2", 41000.0)
        };
        match self {
            Self::Chua3Pwl => ParamSet::new()
                .with("alpha", 9.0)
                .with("beta", 100.0 / 7.0)
                .with("a", -8.0 / 7.0)
                .with("b", -5.0 / 7.0),
            Self::Chua4Pwl => chua4().with("a", -0.42).with("b", 1.2),
            Self::Chua5Pwl => chua5().with("a", -1.246).with("b", -0.6724),
            Self::Chua4Cubic => chua4().with("c1", 0.3937).with("c2", -0.7235),
            Self::Chua5Cubic => chua5().with("c1", 0.1068).with("c2", -0.3056),
            Self::Magnetoconvection5 => ParamSet::new()
                .with("varsigma", 0.09683)
                .with("sigma", 1.0)
                .with("r", 14.47)
                .with("q", 5.0)
                .with("omega", 0.1081),
            Self::Gear5 => ParamSet::new()
                .with("L", 1000.0)
                .with("beta1", 800.0)
                .with("beta2", 1200.0),
        }
    }

    /// Initial guesses for Newton on the smooth non-Lur'e models.
    fn guesses(self) -> Vec<Vec<f64>> {
        match self {
            Self::Magnetoconvection5 => vec![
                vec![0.0; 5],
                vec![2.5, 0.3, 0.9, 0.1, 0.3],
                vec![-2.5, -0.3, 0.9, -0.1, 0.3],
            ],
            Self::Gear5 => vec![vec![0.0; 5]],
            _ => Vec::new(),
        }
    }

    /// Initial condition used when none is given.
    pub fn default_initial_state(self) -> Vec<f64> {
        match self {
            Self::Chua3Pwl => vec![0.1, 0.1, 0.1],
            Self::Chua4Pwl | Self::Chua4Cubic => vec![0.1, 0.1, 0.1, 0.1],
            Self::Chua5Pwl | Self::Chua5Cubic => vec![0.1, 0.0, 0.0, 0.0, 0.0],
            Self::Magnetoconvection5 => vec![0.1, 0.1, 0.1, 0.1, 0.1],
            Self::Gear5 => vec![1.0, 0.0, 0.5, 0.0, 0.0],
        }
    }

    /// Integration horizon used when none is given. The gear flow escapes
    /// to infinity shortly after t = 0.05 from the default state.
    pub fn default_duration(self) -> f64 {
        match self {
            Self::Gear5 => 0.02,
            Self::Chua5Pwl | Self::Chua5Cubic => 50.0,
            _ => 100.0,
        }
    }
}

/// Built-in model by registry name with its default parameters.
pub fn builtin(name: &str) -> Result<ModelDef> {
    let kind = BuiltinKind::from_name(name).ok_or_else(|| FlowError::UnknownModel(name.into()))?;
    build(kind, kind.default_params())
}

pub(crate) fn build(kind: BuiltinKind, params: ParamSet) -> Result<ModelDef> {
    let system = match kind {
        BuiltinKind::Chua3Pwl => {
            let (al, be) = (params.require("alpha")?, params.require("beta")?);
            let a = DMatrix::from_row_slice(3, 3, &[-al, al, 0.0, 1.0, -1.0, 1.0, 0.0, -be, 0.0]);
            BuiltinSystem::Lure(Lure::new(a, e1(3, -al), pwl(&params)?))
        }
        BuiltinKind::Chua4Pwl | BuiltinKind::Chua4Cubic => {
            let (a1, a2) = (params.require("alpha1")?, params.require("alpha2")?);
            let (b1, b2) = (params.require("beta1")?, params.require("beta2")?);
            #[rustfmt::skip]
            let a = DMatrix::from_row_slice(4, 4, &[
                0.0, 0.0, a1, 0.0,
                0.0, a2, -1.0, -1.0,
                -b1, b1, -b1, 0.0,
                0.0, b2, 0.0, 0.0,
            ]);
            let nl = if kind == BuiltinKind::Chua4Pwl {
                pwl(&params)?
            } else {
                cubic(&params)?
            };
            BuiltinSystem::Lure(Lure::new(a, e1(4, -a1), nl))
        }
        BuiltinKind::Chua5Pwl | BuiltinKind::Chua5Cubic => {
            let (a1, a2) = (params.require("alpha1")?, params.require("alpha2")?);
            let (b1, b2) = (params.require("beta1")?, params.require("beta2")?);
            let (g1, g2) = (params.require("gamma1")?, params.require("gamma2")?);
            #[rustfmt::skip]
            let a = DMatrix::from_row_slice(5, 5, &[
                -a1, a1, 0.0, 0.0, 0.0,
                a2, -1.0, 1.0, 0.0, 0.0,
                0.0, -b1, 0.0, b1, 0.0,
                0.0, 0.0, b2, 0.0, b2,
                0.0, 0.0, 0.0, g2, g2 * g1,
            ]);
            let nl = if kind == BuiltinKind::Chua5Pwl {
                pwl(&params)?
            } else {
                cubic(&params)?
            };
            BuiltinSystem::Lure(Lure::new(a, e1(5, -a1), nl))
        }
        BuiltinKind::Magnetoconvection5 => BuiltinSystem::Magneto(Magneto::new(&params)?),
        BuiltinKind::Gear5 => BuiltinSystem::Gear {
            l: params.require("L")?,
            beta1: params.require("beta1")?,
            beta2: params.require("beta2")?,
        },
    };
    Ok(ModelDef {
        name: kind.name().to_string(),
        dim: system.dim(),
        params,
        system: System::Builtin(system),
        fixed_point_guesses: kind.guesses(),
        origin: Origin::Builtin(kind),
    })
}

fn e1(n: usize, v: f64) -> DVector<f64> {
    let mut b = DVector::zeros(n);
    b[0] = v;
    b
}

fn pwl(p: &ParamSet) -> Result<Nonlinearity> {
    Ok(Nonlinearity::Pwl {
        a: p.require("a")?,
        b: p.require("b")?,
    })
}

fn cubic(p: &ParamSet) -> Result<Nonlinearity> {
    Ok(Nonlinearity::Cubic {
        c1: p.require("c1")?,
        c2: p.require("c2")?,
    })
}

/// Scalar nonlinearity `k(x1)` of a Chua-type circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Nonlinearity {
    Pwl { a: f64, b: f64 },
    Cubic { c1: f64, c2: f64 },
}

/// Lur'e form `x' = A x + b k(x1)`; every Chua variant fits it.
#[derive(Debug, Clone)]
pub(crate) struct Lure {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub nl: Nonlinearity,
}

impl Lure {
    fn new(a: DMatrix<f64>, b: DVector<f64>, nl: Nonlinearity) -> Self {
        Lure { a, b, nl }
    }

    fn branch(&self, x1: f64, region: Option<&Region>) -> Branch {
        region
            .and_then(|r| r.branches().first().copied())
            .unwrap_or_else(|| Branch::classify(x1))
    }

    fn k<T: Scalar>(&self, x1: T, region: Option<&Region>) -> T {
        match self.nl {
            Nonlinearity::Pwl { a, b } => self.branch(x1.value(), region).pwl(x1, a, b),
            Nonlinearity::Cubic { c1, c2 } => x1 * x1 * x1 * c1 + x1 * c2,
        }
    }

    fn k_prime(&self, x1: f64, region: Option<&Region>) -> f64 {
        match self.nl {
            Nonlinearity::Pwl { a, b } => self.branch(x1, region).slope(a, b),
            Nonlinearity::Cubic { c1, c2 } => 3.0 * c1 * x1 * x1 + c2,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Magneto {
    sigma: f64,
    r: f64,
    q: f64,
    omega: f64,
    varsigma: f64,
    /// `w (3 - w) / (s^2 (4 - w))`
    c: f64,
    /// `w / (s (4 - w))`
    d: f64,
    /// `s (4 - w)`
    e: f64,
}

impl Magneto {
    fn new(p: &ParamSet) -> Result<Self> {
        let s = p.require("varsigma")?;
        let w = p.require("omega")?;
        Ok(Magneto {
            sigma: p.require("sigma")?,
            r: p.require("r")?,
            q: p.require("q")?,
            omega: w,
            varsigma: s,
            c: w * (3.0 - w) / (s * s * (4.0 - w)),
            d: w / (s * (4.0 - w)),
            e: s * (4.0 - w),
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) enum BuiltinSystem {
    Lure(Lure),
    Magneto(Magneto),
    Gear { l: f64, beta1: f64, beta2: f64 },
}

impl BuiltinSystem {
    fn dim(&self) -> usize {
        match self {
            BuiltinSystem::Lure(l) => l.a.nrows(),
            BuiltinSystem::Magneto(_) | BuiltinSystem::Gear { .. } => 5,
        }
    }

    pub(crate) fn pwl_slots(&self) -> usize {
        match self {
            BuiltinSystem::Lure(Lure {
                nl: Nonlinearity::Pwl { .. },
                ..
            }) => 1,
            _ => 0,
        }
    }

    pub(crate) fn is_piecewise_affine(&self) -> bool {
        self.pwl_slots() == 1
    }

    pub(crate) fn switching_values(&self, x: &[f64]) -> Vec<f64> {
        if self.pwl_slots() == 1 {
            vec![x[0]]
        } else {
            Vec::new()
        }
    }

    pub(crate) fn eval<T: Scalar>(&self, x: &[T], region: Option<&Region>) -> Vec<T> {
        match self {
            BuiltinSystem::Lure(l) => {
                let n = x.len();
                let kx = l.k(x[0], region);
                (0..n)
                    .map(|i| {
                        let mut acc = kx * l.b[i];
                        for j in 0..n {
                            let aij = l.a[(i, j)];
                            if aij != 0.0 {
                                acc = acc + x[j] * aij;
                            }
                        }
                        acc
                    })
                    .collect()
            }
            BuiltinSystem::Magneto(m) => {
                let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
                vec![
                    (-x1 + x2 * m.r - x4 * m.q - x4 * x5 * (m.q * m.c)) * m.sigma,
                    -x2 + x1 - x1 * x3,
                    (-x3 + x1 * x2) * m.omega,
                    (x4 - x1) * (-m.varsigma) - x1 * x5 * m.d,
                    (x5 - x1 * x4) * (-m.e),
                ]
            }
            BuiltinSystem::Gear { l, beta1, beta2 } => {
                let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
                vec![
                    -x2,
                    x1,
                    (x1 * x1 + x2 * x2 - x3) * *l,
                    x4 * x4 + *beta1,
                    x2 * x2 + *beta2,
                ]
            }
        }
    }

    pub(crate) fn jacobian(&self, x: &[f64], region: Option<&Region>) -> DMatrix<f64> {
        match self {
            BuiltinSystem::Lure(l) => {
                let mut j = l.a.clone();
                let kp = l.k_prime(x[0], region);
                for i in 0..j.nrows() {
                    j[(i, 0)] += l.b[i] * kp;
                }
                j
            }
            BuiltinSystem::Magneto(m) => {
                let (x1, x2, x3, x4, x5) = (x[0], x[1], x[2], x[3], x[4]);
                let (s, w) = (m.sigma, m.omega);
                #[rustfmt::skip]
                let j = DMatrix::from_row_slice(5, 5, &[
                    -s, s * m.r, 0.0, -s * m.q * (1.0 + m.c * x5), -s * m.q * m.c * x4,
                    1.0 - x3, -1.0, -x1, 0.0, 0.0,
                    w * x2, w * x1, -w, 0.0, 0.0,
                    m.varsigma - m.d * x5, 0.0, 0.0, -m.varsigma, -m.d * x1,
                    m.e * x4, 0.0, 0.0, m.e * x1, -m.e,
                ]);
                j
            }
            BuiltinSystem::Gear { l, .. } => {
                let (x1, x2, x4) = (x[0], x[1], x[3]);
                #[rustfmt::skip]
                let j = DMatrix::from_row_slice(5, 5, &[
                    0.0, -1.0, 0.0, 0.0, 0.0,
                    1.0, 0.0, 0.0, 0.0, 0.0,
                    2.0 * l * x1, 2.0 * l * x2, -l, 0.0, 0.0,
                    0.0, 0.0, 0.0, 2.0 * x4, 0.0,
                    0.0, 2.0 * x2, 0.0, 0.0, 0.0,
                ]);
                j
            }
        }
    }
}

/// The built-in models written in the user config format. Loading one of
/// these yields the same vector field as the hard-coded definition.
pub fn builtin_config(name: &str) -> Option<&'static str> {
    Some(match name {
        "chua3-pwl" => {
            r#"{
  "name": "chua3-pwl",
  "dim": 3,
  "params": {"alpha": 9, "beta": "100/7", "a": "-8/7", "b": "-5/7"},
  "rhs": [
    "alpha*(x2 - x1 - pwl(x1; a, b))",
    "x1 - x2 + x3",
    "-beta*x2"
  ]
}"#
        }
        "chua4-pwl" => {
            r#"{
  "name": "chua4-pwl",
  "dim": 4,
  "params": {"alpha1": 2.1429, "alpha2": -0.18, "beta1": 0.0774, "beta2": 0.003, "a": -0.42, "b": 1.2},
  "rhs": [
    "alpha1*(x3 - pwl(x1; a, b))",
    "alpha2*x2 - x3 - x4",
    "beta1*(x2 - x1 - x3)",
    "beta2*x2"
  ]
}"#
        }
        "chua5-pwl" => {
            r#"{
  "name": "chua5-pwl",
  "dim": 5,
  "params": {"alpha1": 9.934, "alpha2": 1, "beta1": 14.47, "beta2": -406.5,
             "gamma1": -0.0152, "gamma2": 41000, "a": -1.246, "b": -0.6724},
  "rhs": [
    "alpha1*(x2 - x1 - pwl(x1; a, b))",
    "alpha2*x1 - x2 + x3",
    "beta1*(x4 - x2)",
    "beta2*(x3 + x5)",
    "gamma2*(x4 + gamma1*x5)"
  ]
}"#
        }
        "chua4-cubic" => {
            r#"{
  "name": "chua4-cubic",
  "dim": 4,
  "params": {"alpha1": 2.1429, "alpha2": -0.18, "beta1": 0.0774, "beta2": 0.003, "c1": 0.3937, "c2": -0.7235},
  "rhs": [
    "alpha1*(x3 - (c1*x1^3 + c2*x1))",
    "alpha2*x2 - x3 - x4",
    "beta1*(x2 - x1 - x3)",
    "beta2*x2"
  ]
}"#
        }
        "chua5-cubic" => {
            r#"{
  "name": "chua5-cubic",
  "dim": 5,
  "params": {"alpha1": 9.934, "alpha2": 1, "beta1": 14.47, "beta2": -406.5,
             "gamma1": -0.0152, "gamma2": 41000, "c1": 0.1068, "c2": -0.3056},
  "rhs": [
    "alpha1*(x2 - x1 - (c1*x1^3 + c2*x1))",
    "alpha2*x1 - x2 + x3",
    "beta1*(x4 - x2)",
    "beta2*(x3 + x5)",
    "gamma2*(x4 + gamma1*x5)"
  ]
}"#
        }
        "magnetoconvection5" => {
            r#"{
  "name": "magnetoconvection5",
  "dim": 5,
  "params": {"varsigma": 0.09683, "sigma": 1, "r": 14.47, "q": 5, "omega": 0.1081},
  "rhs": [
    "sigma*(-x1 + r*x2 - q*x4*(1 + omega*(3 - omega)/(varsigma^2*(4 - omega))*x5))",
    "-x2 + x1 - x1*x3",
    "omega*(-x3 + x1*x2)",
    "-varsigma*(x4 - x1) - omega/(varsigma*(4 - omega))*x1*x5",
    "-varsigma*(4 - omega)*(x5 - x1*x4)"
  ],
  "fixed_point_guesses": [[0, 0, 0, 0, 0], [2.5, 0.3, 0.9, 0.1, 0.3], [-2.5, -0.3, 0.9, -0.1, 0.3]]
}"#
        }
        "gear5" => {
            r#"{
  "name": "gear5",
  "dim": 5,
  "params": {"L": 1000, "beta1": 800, "beta2": 1200},
  "rhs": [
    "-x2",
    "x1",
    "L*(x1^2 + x2^2 - x3)",
    "beta1 + x4^2",
    "beta2 + x2^2"
  ]
}"#
        }
        _ => return None,
    })
}
