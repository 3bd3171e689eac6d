use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::phi;
use crate::error::{FlowError, Result};
use crate::models::ModelDef;

/// Slow-fast structure: the equations `fast_indices` are the fast ones and
/// `f = 0` on them is the singular (order `epsilon^0`) constraint. The
/// constraint is solved for the coordinates `solve_for`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowFastSplit {
    pub fast_indices: Vec<usize>,
    pub solve_for: Vec<usize>,
    pub epsilon: f64,
}

impl SlowFastSplit {
    pub fn new(fast_indices: Vec<usize>, epsilon: f64) -> Result<Self> {
        let solve_for = fast_indices.clone();
        Self::solving(fast_indices, solve_for, epsilon)
    }

    pub fn solving(fast_indices: Vec<usize>, solve_for: Vec<usize>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(FlowError::InvalidArgument("epsilon must be positive".into()));
        }
        if fast_indices.is_empty() || fast_indices.len() != solve_for.len() {
            return Err(FlowError::InvalidArgument(
                "need as many unknowns as fast equations".into(),
            ));
        }
        Ok(SlowFastSplit {
            fast_indices,
            solve_for,
            epsilon,
        })
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let mut seen = vec![false; dim];
        for &i in &self.solve_for {
            if i >= dim || std::mem::replace(&mut seen[i], true) {
                return Err(FlowError::InvalidArgument(format!("bad unknown index {i}")));
            }
        }
        if self.fast_indices.iter().any(|&i| i >= dim) {
            return Err(FlowError::InvalidArgument("fast index outside the model".into()));
        }
        Ok(())
    }

    /// Solves the singular constraint for the unknowns by Newton, starting
    /// from the values already in `x`.
    pub fn project(&self, model: &ModelDef, x: &mut [f64]) -> Option<()> {
        let m = self.solve_for.len();
        for _ in 0..100 {
            let f = model.rhs(x);
            let r = DVector::from_iterator(m, self.fast_indices.iter().map(|&i| f[i]));
            let size: f64 = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let j = model.jacobian(x);
            let jr = DMatrix::from_fn(m, m, |a, b| j[(self.fast_indices[a], self.solve_for[b])]);
            let scale = jr.abs().max() * size;
            if r.norm() <= 1e-13 * scale.max(1e-300) {
                return Some(());
            }
            let step = jr.lu().solve(&r)?;
            for (k, &i) in self.solve_for.iter().enumerate() {
                x[i] -= step[k];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
        }
        let f = model.rhs(x);
        let r: f64 = self.fast_indices.iter().map(|&i| f[i] * f[i]).sum::<f64>().sqrt();
        (r <= 1e-8 * (1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max))).then_some(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GspSummary {
    pub count: usize,
    /// Samples where the constraint could not be solved.
    pub failures: usize,
    /// Largest and mean `|phi| / |grad phi|` on the singular approximation.
    pub max: f64,
    pub mean: f64,
}

/// `|phi| / |grad phi|`, a first-order distance from `x` to `phi = 0`.
fn scaled_phi(model: &ModelDef, x: &[f64]) -> f64 {
    let p = phi(model, x);
    let mut g2 = 0.0;
    let mut y = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        y[i] = x[i] + h;
        let up = phi(model, &y);
        y[i] = x[i] - h;
        let down = phi(model, &y);
        y[i] = x[i];
        g2 += ((up - down) / (2.0 * h)).powi(2);
    }
    if p == 0.0 {
        0.0
    } else {
        p.abs() / g2.sqrt()
    }
}

/// Samples the coordinates not solved for uniformly in `bounds` (one range
/// per coordinate; entries for solved coordinates give the Newton start),
/// solves the singular constraint and measures `phi` there.
pub fn gsp_order0_residual(
    model: &ModelDef,
    split: &SlowFastSplit,
    bounds: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<GspSummary> {
    let n = model.dim();
    split.validate(n)?;
    if bounds.len() != n {
        return Err(FlowError::DimensionMismatch {
            expected: n,
            got: bounds.len(),
        });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(samples);
    let mut failures = 0;
    for _ in 0..samples {
        let mut x: Vec<f64> = bounds
            .iter()
            .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo })
            .collect();
        match split.project(model, &mut x) {
            Some(()) => {
                let v = scaled_phi(model, &x);
                if v.is_finite() {
                    values.push(v);
                } else {
                    failures += 1;
                }
            }
            None => failures += 1,
        }
    }
    let count = values.len();
    Ok(GspSummary {
        count,
        failures,
        max: values.iter().copied().fold(0.0, f64::max),
        mean: if count == 0 {
            0.0
        } else {
            values.iter().sum::<f64>() / count as f64
        },
    })
}

/// The order-0 residual with parameter `param` multiplied by each factor, for
/// models that expose the small parameter (or its inverse) directly.
pub fn gsp_param_profile(
    model: &ModelDef,
    split: &SlowFastSplit,
    param: &str,
    factors: &[f64],
    bounds: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, GspSummary)>> {
    let base = model
        .params()
        .get(param)
        .ok_or_else(|| FlowError::UnknownParam(param.to_string()))?;
    factors
        .iter()
        .map(|&k| {
            let m = model.with_param(param, base * k)?;
            Ok((base * k, gsp_order0_residual(&m, split, bounds, samples, seed)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::load_model;

    fn toy(eps: f64) -> ModelDef {
        let cfg = format!(r#"{{"name":"toy","dim":2,"params":{{"eps":{eps}}},"rhs":["(-x1+x2)/eps","-x2"]}}"#);
        load_model(&cfg).unwrap()
    }

    #[test]
    fn split_validation() {
        assert!(SlowFastSplit::new(vec![0], 0.0).is_err());
        assert!(SlowFastSplit::new(vec![], 0.1).is_err());
        let s = SlowFastSplit::new(vec![5], 0.1).unwrap();
        assert!(gsp_order0_residual(&toy(0.1), &s, &[(0.0, 1.0); 2], 3, 0).is_err());
    }

    #[test]
    fn zero_samples_is_empty() {
        let s = SlowFastSplit::new(vec![0], 0.1).unwrap();
        let r = gsp_order0_residual(&toy(0.1), &s, &[(0.0, 0.0), (0.5, 1.5)], 0, 0).unwrap();
        assert_eq!(r, GspSummary::default());
    }

    #[test]
    fn projection_lands_on_constraint() {
        let s = SlowFastSplit::new(vec![0], 0.01).unwrap();
        let m = toy(0.01);
        let mut x = vec![3.0, 0.7];
        s.project(&m, &mut x).unwrap();
        assert!((x[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn linear_toy_is_first_order_in_epsilon() {
        // on x = z: phi = -z^2/eps and |grad phi| ~ z/eps^2, so the ratio is ~ eps z
        let bounds = [(0.0, 0.0), (0.5, 1.5)];
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let s = SlowFastSplit::new(vec![0], eps).unwrap();
            let r = gsp_order0_residual(&toy(eps), &s, &bounds, 20, 7).unwrap();
            assert_eq!(r.count, 20);
            let ratio = r.mean / eps;
            assert!(ratio > 0.3 && ratio < 2.0, "eps {eps}: {r:?}");
            assert!(r.mean < prev);
            prev = r.mean;
        }
    }
}
