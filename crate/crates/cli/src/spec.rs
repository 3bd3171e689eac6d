//! Parsers for the `--grid`, `--slice`, `--x0` and `--param` flag values.

use anyhow::{anyhow, bail, Context, Result};
use flowcurv_core::{FixedPointSet, GridAxis};

fn coordinate(name: &str, dim: usize) -> Result<usize> {
    let idx: usize = name
        .trim()
        .strip_prefix('x')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| anyhow!("expected a coordinate like x1, got `{name}`"))?;
    if idx == 0 || idx > dim {
        bail!("coordinate {name} outside x1..x{dim}");
    }
    Ok(idx - 1)
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().with_context(|| format!("bad number `{s}`"))?;
    if !v.is_finite() {
        bail!("non-finite number `{s}`");
    }
    Ok(v)
}

/// `x1=-4:4:200,x2=-1:1:200`
pub fn parse_grid(src: &str, dim: usize) -> Result<Vec<GridAxis>> {
    src.split(',')
        .map(|item| {
            let (name, range) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("grid axis `{item}` is not of the form x1=min:max:count"))?;
            let parts: Vec<&str> = range.split(':').collect();
            let [lo, hi, count] = parts[..] else {
                bail!("grid axis `{item}` is not of the form x1=min:max:count");
            };
            let count: usize = count
                .trim()
                .parse()
                .with_context(|| format!("bad node count in `{item}`"))?;
            Ok(GridAxis {
                index: coordinate(name, dim)?,
                min: number(lo)?,
                max: number(hi)?,
                count,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceValue {
    Value(f64),
    FixedPoint,
}

/// `x3=fp,x4=0`
pub fn parse_slice(src: &str, dim: usize) -> Result<Vec<(usize, SliceValue)>> {
    src.split(',')
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("slice `{item}` is not of the form x3=value or x3=fp"))?;
            let v = if value.trim() == "fp" {
                SliceValue::FixedPoint
            } else {
                SliceValue::Value(number(value)?)
            };
            Ok((coordinate(name, dim)?, v))
        })
        .collect()
}

/// Resolves `fp` entries to the coordinate of the real fixed point nearest
/// to the grid centre (distance measured over the scanned axes).
pub fn resolve_slice(
    slice: &[(usize, SliceValue)],
    axes: &[GridAxis],
    fps: Option<&FixedPointSet>,
) -> Result<Vec<(usize, f64)>> {
    let nearest = || {
        let set = fps.filter(|s| !s.points.is_empty())?;
        set.points.iter().min_by(|a, b| {
            let d = |p: &[f64]| -> f64 {
                axes.iter()
                    .map(|ax| (p[ax.index] - 0.5 * (ax.min + ax.max)).powi(2))
                    .sum()
            };
            d(&a.location).total_cmp(&d(&b.location))
        })
    };
    slice
        .iter()
        .map(|&(i, v)| match v {
            SliceValue::Value(x) => Ok((i, x)),
            SliceValue::FixedPoint => nearest()
                .map(|p| (i, p.location[i]))
                .ok_or_else(|| anyhow!("slice x{}=fp needs a real fixed point", i + 1)),
        })
        .collect()
}

/// `0.1,0,0` with exactly `dim` entries.
pub fn parse_state(src: &str, dim: usize) -> Result<Vec<f64>> {
    let x: Vec<f64> = src.split(',').map(number).collect::<Result<_>>()?;
    if x.len() != dim {
        bail!("initial state has {} entries, model has dimension {dim}", x.len());
    }
    Ok(x)
}

/// `alpha=9`
pub fn parse_param(src: &str) -> Result<(String, f64)> {
    let (k, v) = src
        .split_once('=')
        .ok_or_else(|| anyhow!("parameter `{src}` is not of the form name=value"))?;
    Ok((k.trim().to_string(), number(v)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let g = parse_grid("x1=-4:4:200,x3=-1:1:5", 4).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].index, g[0].min, g[0].max, g[0].count), (0, -4.0, 4.0, 200));
        assert_eq!(g[1].index, 2);
    }

    #[test]
    fn grid_rejects_garbage() {
        assert!(parse_grid("x1=-4:4", 3).is_err());
        assert!(parse_grid("x9=0:1:3", 3).is_err());
        assert!(parse_grid("y1=0:1:3", 3).is_err());
        assert!(parse_grid("x1=0:nan:3", 3).is_err());
    }

    #[test]
    fn slice_values() {
        let s = parse_slice("x3=fp,x4=0.5", 4).unwrap();
        assert_eq!(s, vec![(2, SliceValue::FixedPoint), (3, SliceValue::Value(0.5))]);
        let r = resolve_slice(&s[1..], &[], None).unwrap();
        assert_eq!(r, vec![(3, 0.5)]);
        assert!(resolve_slice(&s, &[], None).is_err());
    }

    #[test]
    fn state_and_param() {
        assert_eq!(parse_state("1,2.5", 2).unwrap(), vec![1.0, 2.5]);
        assert!(parse_state("1,2", 3).is_err());
        assert_eq!(parse_param("alpha = 9").unwrap(), ("alpha".into(), 9.0));
        assert!(parse_param("alpha").is_err());
    }
}
