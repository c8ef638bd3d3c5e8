//! Fitted drift models and their TOML model file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisSet1D, Boundary, TensorBasis};
use crate::dynamics::Drift;
use crate::error::{Error, Result};
use crate::estimator::{Activation, CoefficientMatrix, MlpDrift, TrainingReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// A drift estimate of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Basis(CoefficientMatrix),
    Mlp(MlpDrift),
}

impl FittedModel {
    pub fn parameter_count(&self) -> usize {
        match self {
            FittedModel::Basis(c) => c.values().len(),
            FittedModel::Mlp(n) => n.weights().len(),
        }
    }
}

impl Drift for FittedModel {
    fn dim(&self) -> usize {
        match self {
            FittedModel::Basis(c) => c.dim(),
            FittedModel::Mlp(n) => n.dim(),
        }
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            FittedModel::Basis(c) => c.eval_into(x, out),
            FittedModel::Mlp(n) => n.eval_into(x, out),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mlp: Option<MlpModel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisModel {
    dim: usize,
    /// Functions per dimension; the flat index runs fastest over the last one.
    tensor_sizes: Vec<usize>,
    /// `n` rows of `d` coefficients.
    coefficients: Vec<Vec<f64>>,
    factors: Vec<FactorModel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorModel {
    family: BasisFamily,
    interval: [f64; 2],
    knots: Vec<f64>,
    degree: usize,
    boundary: Boundary,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpModel {
    widths: Vec<usize>,
    activation: Activation,
    output_bias: bool,
    input_center: Vec<f64>,
    input_scale: Vec<f64>,
    /// Layer by layer: weight matrix row-major (output rows), then bias.
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingReport>,
}

fn to_file(model: &FittedModel) -> ModelFile {
    match model {
        FittedModel::Basis(c) => {
            let tb = c.basis();
            ModelFile {
                format_version: MODEL_FORMAT_VERSION,
                basis: Some(BasisModel {
                    dim: c.dim(),
                    tensor_sizes: tb.sizes(),
                    coefficients: c.values().chunks(c.dim()).map(<[f64]>::to_vec).collect(),
                    factors: tb
                        .factors()
                        .iter()
                        .map(|b| FactorModel {
                            family: b.family(),
                            interval: [b.lo(), b.hi()],
                            knots: b.breakpoints().to_vec(),
                            degree: b.degree(),
                            boundary: b.boundary(),
                        })
                        .collect(),
                }),
                mlp: None,
            }
        }
        FittedModel::Mlp(n) => ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            basis: None,
            mlp: Some(MlpModel {
                widths: n.widths().to_vec(),
                activation: n.activation(),
                output_bias: n.output_bias(),
                input_center: n.input_center().to_vec(),
                input_scale: n.input_scale().to_vec(),
                weights: n.weights().to_vec(),
                training: n.report().cloned(),
            }),
        },
    }
}

fn field(name: &str, e: Error) -> Error {
    let msg = match e {
        Error::InvalidInput(m) => m,
        other => other.to_string(),
    };
    Error::format(None, format!("field `{name}`: {msg}"))
}

fn from_file(file: ModelFile) -> Result<FittedModel> {
    match (file.basis, file.mlp) {
        (Some(b), None) => {
            if b.factors.len() != b.dim {
                return Err(field(
                    "basis.factors",
                    Error::invalid(format!("expected {} factors", b.dim)),
                ));
            }
            let factors = b
                .factors
                .into_iter()
                .enumerate()
                .map(|(k, f)| {
                    let name = format!("basis.factors[{k}]");
                    if f.knots.first() != Some(&f.interval[0])
                        || f.knots.last() != Some(&f.interval[1])
                    {
                        return Err(field(
                            &format!("{name}.interval"),
                            Error::invalid("does not match the knot endpoints"),
                        ));
                    }
                    BasisSet1D::new(f.family, f.knots, f.degree, f.boundary)
                        .map_err(|e| field(&format!("{name}.knots"), e))
                })
                .collect::<Result<Vec<_>>>()?;
            let tb = TensorBasis::new(factors).map_err(|e| field("basis.factors", e))?;
            if tb.sizes() != b.tensor_sizes {
                return Err(field(
                    "basis.tensor_sizes",
                    Error::invalid(format!("factors give {:?}", tb.sizes())),
                ));
            }
            if b.coefficients.len() != tb.len() || b.coefficients.iter().any(|r| r.len() != b.dim) {
                return Err(field(
                    "basis.coefficients",
                    Error::invalid(format!("expected {} rows of {} values", tb.len(), b.dim)),
                ));
            }
            CoefficientMatrix::new(tb, b.dim, b.coefficients.concat())
                .map(FittedModel::Basis)
                .map_err(|e| field("basis.coefficients", e))
        }
        (None, Some(m)) => {
            let mut net = MlpDrift::new(
                m.widths,
                m.activation,
                m.output_bias,
                m.input_center,
                m.input_scale,
                m.weights,
            )
            .map_err(|e| field("mlp", e))?;
            if let Some(r) = m.training {
                net = net.with_report(r);
            }
            Ok(FittedModel::Mlp(net))
        }
        _ => Err(Error::format(
            None,
            "model needs exactly one of `basis` or `mlp`",
        )),
    }
}

pub fn model_to_string(model: &FittedModel) -> Result<String> {
    toml::to_string(&to_file(model)).map_err(|e| Error::format(None, e.to_string()))
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Names the key on the offending line, since the parser message may not.
fn toml_error(text: &str, e: toml::de::Error) -> Error {
    let line = e.span().map(|s| line_of(text, s.start));
    let key = line
        .and_then(|l| text.lines().nth(l - 1))
        .and_then(|l| l.split_once('='))
        .map(|(k, _)| k.trim().to_string());
    let message = match key {
        Some(k) => format!("field `{k}`: {}", e.message()),
        None => e.message().to_string(),
    };
    Error::Format { line, message }
}

pub fn model_from_str(text: &str) -> Result<FittedModel> {
    let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    match table.get("format_version") {
        Some(toml::Value::Integer(v)) if *v == MODEL_FORMAT_VERSION as i64 => {}
        Some(toml::Value::Integer(v)) => {
            return Err(Error::VersionMismatch {
                found: (*v).clamp(0, u32::MAX as i64) as u32,
                expected: MODEL_FORMAT_VERSION,
            })
        }
        Some(_) => {
            return Err(Error::format(
                None,
                "field `format_version` must be an integer",
            ))
        }
        None => return Err(Error::format(None, "field `format_version` is missing")),
    }
    let file: ModelFile = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    from_file(file)
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = model_to_string(model)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
