//! CSV and JSON emission. Numbers use the shortest decimal form that parses
//! back to the same double; rows end in `\n`; a header row is always present.

use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::CurvatureSet;
use crate::integrate::Trajectory;
use crate::manifold::{ManifoldSample, ZeroSet};
use crate::models::Region;
use crate::spectral::Hyperplane;

/// Shortest round-trip representation (`1.0`, `0.1`, `1e-7`, `NaN`).
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn region(r: Option<&Region>) -> String {
    r.map_or(String::new(), Region::to_string)
}

fn header(cols: impl IntoIterator<Item = String>) -> String {
    let mut h = cols.into_iter().collect::<Vec<_>>().join(",");
    h.push('\n');
    h
}

fn xs(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("x{i}"))
}

fn push_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row = fields.into_iter().collect::<Vec<_>>().join(",");
    out.push_str(&row);
    out.push('\n');
}

/// `t,x1,...,xn,region`
pub fn trajectory_csv(traj: &Trajectory, dim: usize) -> String {
    let mut out = header(
        std::iter::once("t".to_string())
            .chain(xs(dim))
            .chain(["region".to_string()]),
    );
    for ((t, x), r) in traj.times.iter().zip(&traj.states).zip(&traj.regions) {
        push_row(
            &mut out,
            std::iter::once(num(*t))
                .chain(x.iter().map(|v| num(*v)))
                .chain([region(r.as_ref())]),
        );
    }
    out
}

/// `x1,...,xn,phi,region`
pub fn zero_set_csv(set: &ZeroSet, dim: usize) -> String {
    let mut out = header(xs(dim).chain(["phi".to_string(), "region".to_string()]));
    for p in &set.points {
        push_row(
            &mut out,
            p.point
                .iter()
                .map(|v| num(*v))
                .chain([num(p.phi), region(p.region.as_ref())]),
        );
    }
    out
}

/// `x1,...,xn,phi,lie,cofactor_residual`
pub fn samples_csv(samples: &[ManifoldSample], dim: usize) -> String {
    let mut out = header(xs(dim).chain(["phi", "lie", "cofactor_residual"].map(String::from)));
    for s in samples {
        push_row(
            &mut out,
            s.point
                .iter()
                .map(|v| num(*v))
                .chain([num(s.phi), num(s.lie), num(s.cofactor_residual)]),
        );
    }
    out
}

/// `c1,...,cn,offset`, canonical normalization.
pub fn hyperplanes_csv(planes: &[Hyperplane], dim: usize) -> String {
    let mut out = header((1..=dim).map(|i| format!("c{i}")).chain(["offset".to_string()]));
    for p in planes {
        push_row(&mut out, p.normal.iter().chain([&p.offset]).map(|v| num(*v)));
    }
    out
}

/// `t,kappa1,...,kappa{n-1}` plus a signed `torsion` column in 3-D. Rows with
/// undefined curvature carry `NaN`.
pub fn curvature_csv(times: &[f64], rows: &[Option<CurvatureSet>], dim: usize) -> String {
    let kappas = dim.saturating_sub(1);
    let torsion = dim == 3;
    let mut cols: Vec<String> = vec!["t".into()];
    cols.extend((1..=kappas).map(|i| format!("kappa{i}")));
    if torsion {
        cols.push("torsion".into());
    }
    let mut out = header(cols);
    for (t, row) in times.iter().zip(rows) {
        let mut fields = vec![num(*t)];
        for i in 0..kappas {
            let k = row.as_ref().and_then(|c| c.kappa.get(i).copied()).unwrap_or(f64::NAN);
            fields.push(num(k));
        }
        if torsion {
            fields.push(num(row.as_ref().and_then(|c| c.torsion).unwrap_or(f64::NAN)));
        }
        push_row(&mut out, fields);
    }
    out
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable value");
    s.push('\n');
    s
}

/// Rows of a CSV table as JSON objects keyed by the header.
pub fn csv_to_json(csv: &str) -> String {
    let mut lines = csv.lines();
    let Some(head) = lines.next() else {
        return "[]\n".to_string();
    };
    let keys: Vec<&str> = head.split(',').collect();
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = lines
        .map(|line| {
            keys.iter()
                .zip(line.split(','))
                .map(|(k, v)| {
                    let val = match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        Ok(_) => serde_json::Value::Null,
                        Err(_) => serde_json::Value::String(v.to_string()),
                    };
                    (k.to_string(), val)
                })
                .collect()
        })
        .collect();
    to_json(&rows)
}

/// Free-form text table helper used by reports.
pub fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
    }
    out
}
