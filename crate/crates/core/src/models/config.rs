use std::path::Path;

use serde::{Deserialize, Serialize};

use super::builtin::{builtin, BuiltinKind};
use super::expr::{parse_expr, Expr, ExprSystem, SymbolTable};
use super::{ModelDef, Origin, ParamSet, System};
use crate::error::{FlowError, Result};

/// A parameter given either as a number or as a constant expression such as `"100/7"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Expr(String),
}

/// On-disk model description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    pub rhs: Vec<String>,
    #[serde(default)]
    pub fixed_point_guesses: Vec<Vec<f64>>,
}

impl ModelConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| FlowError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub(crate) fn set_param(&mut self, name: &str, value: f64) {
        self.params.insert(name.to_string(), serde_json::json!(value));
    }
}

fn resolve_params(cfg: &ModelConfig) -> Result<Vec<(String, f64)>> {
    let mut resolved: Vec<(String, f64)> = Vec::new();
    for (name, raw) in &cfg.params {
        let value: ParamValue = serde_json::from_value(raw.clone())
            .map_err(|_| FlowError::Config(format!("parameter `{name}` must be a number or a string")))?;
        let v = match value {
            ParamValue::Number(v) => v,
            ParamValue::Expr(src) => {
                // earlier parameters are visible to later ones
                let syms = SymbolTable {
                    dim: 0,
                    params: &resolved,
                };
                let mut slot = 0;
                match parse_expr(&src, &syms, &mut slot)? {
                    Expr::Const(c) => c,
                    _ => {
                        return Err(FlowError::Config(format!(
                            "parameter `{name}` is not a constant expression"
                        )))
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(FlowError::Config(format!("parameter `{name}` is not finite")));
        }
        resolved.push((name.clone(), v));
    }
    Ok(resolved)
}

pub(crate) fn from_config(cfg: &ModelConfig) -> Result<ModelDef> {
    if cfg.dim == 0 {
        return Err(FlowError::Config("dim must be positive".into()));
    }
    if cfg.rhs.len() != cfg.dim {
        return Err(FlowError::DimensionMismatch {
            expected: cfg.dim,
            got: cfg.rhs.len(),
        });
    }
    if let Some(g) = cfg.fixed_point_guesses.iter().find(|g| g.len() != cfg.dim) {
        return Err(FlowError::DimensionMismatch {
            expected: cfg.dim,
            got: g.len(),
        });
    }
    let params = resolve_params(cfg)?;
    let syms = SymbolTable {
        dim: cfg.dim,
        params: &params,
    };
    let mut slot = 0;
    let mut rhs = Vec::with_capacity(cfg.dim);
    for (i, src) in cfg.rhs.iter().enumerate() {
        let e = parse_expr(src, &syms, &mut slot).map_err(|e| match e {
            FlowError::Parse { line, column, message } => FlowError::Parse {
                line,
                column,
                message: format!("{message} (in rhs[{i}])"),
            },
            other => other,
        })?;
        rhs.push(e);
    }
    let mut ps = ParamSet::new();
    for (k, v) in &params {
        ps.set(k, *v);
    }
    Ok(ModelDef {
        name: cfg.name.clone(),
        dim: cfg.dim,
        params: ps,
        system: System::Expr(ExprSystem::new(rhs)),
        fixed_point_guesses: cfg.fixed_point_guesses.clone(),
        origin: Origin::Config(cfg.clone()),
    })
}

/// Loads a model from a registry name or from JSON config text.
pub fn load_model(spec: &str) -> Result<ModelDef> {
    let trimmed = spec.trim();
    if BuiltinKind::from_name(trimmed).is_some() {
        return builtin(trimmed);
    }
    if !trimmed.starts_with('{') {
        return Err(FlowError::UnknownModel(trimmed.to_string()));
    }
    from_config(&ModelConfig::parse(trimmed)?)
}

/// Loads a model config file.
pub fn load_model_file(path: &Path) -> Result<ModelDef> {
    let text = std::fs::read_to_string(path).map_err(|e| FlowError::Config(format!("{}: {e}", path.display())))?;
    from_config(&ModelConfig::parse(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_is_rejected() {
        let cfg = r#"{"name": "bad", "dim": 3, "rhs": ["x1", "x2"]}"#;
        assert!(matches!(
            load_model(cfg),
            Err(FlowError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn json_syntax_error_has_position() {
        let err = load_model("{\"name\": \"x\",\n \"dim\": }").unwrap_err();
        assert!(matches!(err, FlowError::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn expression_parameters() {
        let cfg = r#"{"name": "p", "dim": 1, "params": {"beta": "100/7", "twice": "2*beta"}, "rhs": ["twice*x1"]}"#;
        let m = load_model(cfg).unwrap();
        assert_eq!(m.params().get("beta"), Some(100.0 / 7.0));
        assert_eq!(m.rhs(&[1.0]), vec![200.0 / 7.0]);
    }

    #[test]
    fn error_names_the_component() {
        let cfg = r#"{"name": "p", "dim": 2, "rhs": ["x1", "x2 +"]}"#;
        let msg = load_model(cfg).unwrap_err().to_string();
        assert!(msg.contains("rhs[1]"), "{msg}");
    }

    #[test]
    fn with_param_rebuilds_config_models() {
        let cfg = r#"{"name": "lin", "dim": 1, "params": {"k": 2}, "rhs": ["-k*x1"]}"#;
        let m = load_model(cfg).unwrap().with_param("k", 5.0).unwrap();
        assert_eq!(m.rhs(&[1.0]), vec![-5.0]);
        assert!(m.with_param("nope", 1.0).is_err());
    }
}
