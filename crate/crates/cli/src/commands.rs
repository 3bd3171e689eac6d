use std::path::Path;

use anyhow::{bail, Context, Result};
use flowcurv_core::export::{curvature_csv, hyperplanes_csv, samples_csv, to_json, trajectory_csv, zero_set_csv};
use flowcurv_core::manifold::{sample, sample_in};
use flowcurv_core::models::REGISTRY;
use flowcurv_core::spectral::{equation_string, significant};
use flowcurv_core::{
    builtin, curvatures, derivative_stack_in, fixed_points, integrate as integrate_model, load_model_file,
    tls_hyperplane_with, zero_crossings_on_trajectory, zero_set_grid, FastEigenPolicy, FixedPoint, FixedPointSet,
    FlowError, GridSpec, ManifoldSample, ModelDef, Trajectory, VerifyOptions, ZeroSet, ZeroSetOptions,
};
use rayon::prelude::*;

use crate::output::{emit_table, emit_text};
use crate::spec::{parse_grid, parse_param, parse_slice, parse_state, resolve_slice, SliceValue};
use crate::{Failure, Format, HyperplaneArgs, IntegrateArgs, ModelArgs, ScanArgs, TrajectoryArgs, VerifyArgs};

type Outcome = std::result::Result<(), Failure>;

fn load(args: &ModelArgs) -> Result<ModelDef> {
    let mut model = if REGISTRY.contains(&args.model.as_str()) {
        builtin(&args.model)?
    } else if Path::new(&args.model).is_file() {
        load_model_file(Path::new(&args.model))?
    } else {
        return Err(FlowError::UnknownModel(args.model.clone()).into());
    };
    for p in &args.params {
        let (name, value) = parse_param(p)?;
        model = model.with_param(&name, value)?;
    }
    Ok(model)
}

fn run_trajectory(model: &ModelDef, args: &TrajectoryArgs) -> Result<Trajectory> {
    let kind = model.builtin_kind();
    let x0 = match (&args.x0, kind) {
        (Some(s), _) => parse_state(s, model.dim())?,
        (None, Some(k)) => k.default_initial_state(),
        (None, None) => bail!("--x0 is required for models loaded from a config file"),
    };
    let t_end = match (args.t_end, kind) {
        (Some(t), _) => t,
        (None, Some(k)) => k.default_duration(),
        (None, None) => bail!("--t-end is required for models loaded from a config file"),
    };
    integrate_model(model, &x0, t_end, args.rtol, args.atol).map_err(|f| anyhow::Error::new(FlowError::from(f)))
}

fn numeric(e: anyhow::Error) -> Failure {
    Failure::from(e)
}

pub fn list_models() -> Outcome {
    for name in REGISTRY {
        println!("{name}");
    }
    Ok(())
}

pub fn integrate(args: &IntegrateArgs) -> Outcome {
    let model = load(&args.model)?;
    let traj = run_trajectory(&model, &args.traj).map_err(numeric)?;
    emit_table(&args.out, &trajectory_csv(&traj, model.dim()))?;
    Ok(())
}

fn grid_for(model: &ModelDef, args: &ScanArgs, grid: &str) -> Result<GridSpec> {
    let axes = parse_grid(grid, model.dim())?;
    let slice = match &args.slice {
        Some(s) => parse_slice(s, model.dim())?,
        None => Vec::new(),
    };
    if axes.len() + slice.len() > model.dim() {
        bail!(
            "grid has {} axes and slice fixes {} coordinates, more than the {} the model has",
            axes.len(),
            slice.len(),
            model.dim()
        );
    }
    let needs_fp = slice.iter().any(|(_, v)| *v == SliceValue::FixedPoint);
    let fps: Option<FixedPointSet> = if needs_fp { Some(fixed_points(model)?) } else { None };
    let resolved = resolve_slice(&slice, &axes, fps.as_ref())?;
    Ok(GridSpec::new(model.dim(), axes, &resolved)?)
}

fn blank_sample(x: Vec<f64>) -> ManifoldSample {
    ManifoldSample {
        point: x,
        phi: f64::NAN,
        lie: f64::NAN,
        cofactor_residual: f64::NAN,
        region: None,
    }
}

pub fn phi_scan(args: &ScanArgs) -> Outcome {
    let model = load(&args.model)?;
    let samples: Vec<ManifoldSample> = match &args.grid {
        Some(g) => {
            let grid = grid_for(&model, args, g)?;
            (0..grid.node_count())
                .into_par_iter()
                .map(|i| {
                    let x = grid.node(i);
                    sample(&model, &x).unwrap_or_else(|| blank_sample(x))
                })
                .collect()
        }
        None => {
            let traj = run_trajectory(&model, &args.traj).map_err(numeric)?;
            traj.states
                .iter()
                .zip(&traj.regions)
                .map(|(x, r)| sample_in(&model, x, r.as_ref()).unwrap_or_else(|| blank_sample(x.clone())))
                .collect()
        }
    };
    emit_table(&args.out, &samples_csv(&samples, model.dim()))?;
    Ok(())
}

fn report_zero_set(set: &ZeroSet) {
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "{} points, {} discarded brackets, {} non-finite samples",
        set.points.len(),
        set.discarded,
        set.nonfinite
    );
}

pub fn manifold(args: &ScanArgs) -> Outcome {
    let model = load(&args.model)?;
    let opts = ZeroSetOptions::default();
    let set = match &args.grid {
        Some(g) => {
            let grid = grid_for(&model, args, g)?;
            zero_set_grid(&model, &grid, &opts).context("grid zero-set extraction")?
        }
        None => {
            let traj = run_trajectory(&model, &args.traj).map_err(numeric)?;
            zero_crossings_on_trajectory(&model, &traj, &opts).context("trajectory zero crossings")?
        }
    };
    report_zero_set(&set);
    emit_table(&args.out, &zero_set_csv(&set, model.dim()))?;
    Ok(())
}

fn point_string(x: &[f64], digits: usize) -> String {
    let parts: Vec<String> = x.iter().map(|v| significant(*v, digits)).collect();
    format!("({})", parts.join(", "))
}

pub fn hyperplane(args: &HyperplaneArgs) -> Outcome {
    let model = load(&args.model)?;
    let set = fixed_points(&model).context("fixed points")?;
    let mut bases: Vec<&FixedPoint> = set.outer();
    if bases.is_empty() {
        bases = set.points.iter().collect();
    }
    if bases.is_empty() {
        return Err(Failure::Numerical(anyhow::anyhow!("model has no fixed points")));
    }
    let policy = if args.strict {
        FastEigenPolicy::Strict
    } else {
        FastEigenPolicy::DominantReal
    };
    let d = args.digits;
    let mut text = String::new();
    let mut planes = Vec::new();
    for (i, fp) in bases.iter().enumerate() {
        let plane = tls_hyperplane_with(&model, fp, policy).with_context(|| format!("plane {}", i + 1))?;
        let region = fp.region.as_ref().map_or(String::new(), |r| format!(" region {r}"));
        let kind = if fp.is_virtual { " (virtual)" } else { "" };
        text += &format!(
            "plane {}: fixed point {}{region}{kind}\n",
            i + 1,
            point_string(&fp.location, d)
        );
        text += &format!("  eigenvalue {}", significant(plane.eigenvalue, d));
        let fast = plane.fast_eigenvalue;
        if fast.im != 0.0 {
            text += &format!(
                " (fast eigenvalue {} {} {}i is complex)",
                significant(fast.re, d),
                if fast.im < 0.0 { "-" } else { "+" },
                significant(fast.im.abs(), d)
            );
        }
        text.push('\n');
        text += &format!("  unit normal:   {}\n", equation_string(&plane.normal, plane.offset, d));
        let (c, o) = plane.lambda_scaled();
        text += &format!("  lambda-scaled: {}\n", equation_string(&c, o, d));
        let k = model.dim().min(3) - 1;
        let biggest = plane.normal.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if let Some((c, o)) = plane
            .unit_coefficient(k)
            .filter(|_| plane.normal[k].abs() > 1e-8 * biggest)
        {
            text += &format!("  x{}-unit:       {}\n", model.dim().min(3), equation_string(&c, o, d));
        }
        planes.push(plane);
    }
    print!("{text}");
    if let Some(path) = &args.output {
        let body = match args.format {
            Format::Csv => hyperplanes_csv(&planes, model.dim()),
            Format::Json => to_json(&planes),
        };
        crate::output::write_atomic(path, &body)?;
    }
    Ok(())
}

pub fn curvature(args: &IntegrateArgs) -> Outcome {
    let model = load(&args.model)?;
    let traj = run_trajectory(&model, &args.traj).map_err(numeric)?;
    let n = model.dim();
    let rows: Vec<_> = traj
        .states
        .par_iter()
        .zip(&traj.regions)
        .map(|(x, r)| {
            derivative_stack_in(&model, x, n, r.as_ref())
                .and_then(|s| curvatures(&s))
                .ok()
        })
        .collect();
    emit_table(&args.out, &curvature_csv(&traj.times, &rows, n))?;
    Ok(())
}

pub fn verify(args: &VerifyArgs) -> Outcome {
    let model = load(&args.model)?;
    let opts = VerifyOptions {
        seed: args.seed,
        samples: args.samples,
    };
    let report = flowcurv_core::verify_model(&model, &opts).context("verify")?;
    if args.json {
        emit_text(None, &to_json(&report))?;
    } else {
        print!("{}", report.table());
    }
    if !report.passed() {
        let failed = report.checks.iter().filter(|c| c.pass == Some(false)).count();
        return Err(Failure::Numerical(anyhow::anyhow!("{failed} check(s) failed")));
    }
    Ok(())
}
