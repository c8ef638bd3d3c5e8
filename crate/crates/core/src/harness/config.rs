//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::{parse_expression, DriftExpression};
use super::presets;
use crate::basis::{BasisFamily, Boundary, Domain, TensorBasis};
use crate::dynamics::{CovarianceModel, InitialDistribution, MatrixField, ScalarField, TimeGrid};
use crate::error::{Error, Result};
use crate::estimator::{MlpSpec, OptimizerConfig};

/// Everything needed to simulate, fit and score one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dim: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Ensemble size `M`.
    pub trajectories: usize,
    #[serde(default = "default_snapshots")]
    pub snapshot_times: Vec<f64>,
    /// Tikhonov shift for the normal equations; 0 retries with a tiny ridge only if singular.
    #[serde(default)]
    pub ridge: f64,
    pub initial: InitialDistribution,
    pub drift: DriftSpec,
    pub covariance: CovarianceSpec,
    pub fit: FitSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_snapshots() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

/// Exactly one of a preset name or explicit expressions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expressions: Option<Vec<String>>,
}

impl DriftSpec {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            expressions: None,
        }
    }

    pub fn expressions<S: Into<String>>(exprs: impl IntoIterator<Item = S>) -> Self {
        Self {
            preset: None,
            expressions: Some(exprs.into_iter().map(Into::into).collect()),
        }
    }

    pub fn build(&self, dim: usize) -> Result<DriftExpression> {
        match (&self.preset, &self.expressions) {
            (Some(name), None) => {
                let p = presets::preset(name)
                    .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
                if p.dim() != dim {
                    return Err(Error::Config(format!(
                        "preset `{name}` is {}-dimensional, config says {dim}",
                        p.dim()
                    )));
                }
                DriftExpression::parse(p.drift, dim)
            }
            (None, Some(exprs)) => DriftExpression::parse(exprs, dim),
            _ => Err(Error::Config(
                "drift needs exactly one of `preset` or `expressions`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovarianceSpec {
    /// `σ² I`.
    Scalar {
        variance: f64,
    },
    Diagonal {
        variances: Vec<f64>,
    },
    /// Row-major `d × d`.
    Full {
        matrix: Vec<Vec<f64>>,
    },
    /// One expression per diagonal entry.
    DiagonalFunction {
        expressions: Vec<String>,
    },
    /// `d × d` grid of expressions.
    FullFunction {
        expressions: Vec<Vec<String>>,
    },
}

impl CovarianceSpec {
    pub fn build(&self, dim: usize) -> Result<CovarianceModel> {
        match self {
            Self::Scalar { variance } => CovarianceModel::scalar(dim, *variance),
            Self::Diagonal { variances } => {
                check_len(variances.len(), dim, "covariance variances")?;
                CovarianceModel::diagonal(variances.clone())
            }
            Self::Full { matrix } => {
                check_len(matrix.len(), dim, "covariance matrix rows")?;
                for row in matrix {
                    check_len(row.len(), dim, "covariance matrix columns")?;
                }
                CovarianceModel::full(dim, matrix.concat())
            }
            Self::DiagonalFunction { expressions } => {
                check_len(expressions.len(), dim, "covariance expressions")?;
                let fields = expressions
                    .iter()
                    .map(|s| {
                        let e = parse_expression(s, dim)?;
                        Ok(Arc::new(move |x: &[f64]| e.eval(x)) as ScalarField)
                    })
                    .collect::<Result<Vec<_>>>()?;
                CovarianceModel::diagonal_fn(fields)
            }
            Self::FullFunction { expressions } => {
                check_len(expressions.len(), dim, "covariance expression rows")?;
                let mut cells = Vec::with_capacity(dim * dim);
                for row in expressions {
                    check_len(row.len(), dim, "covariance expression columns")?;
                    for s in row {
                        cells.push(parse_expression(s, dim)?);
                    }
                }
                let field: MatrixField = Arc::new(move |x: &[f64], out: &mut [f64]| {
                    for (o, e) in out.iter_mut().zip(&cells) {
                        *o = e.eval(x);
                    }
                });
                CovarianceModel::full_fn(dim, field)
            }
        }
    }
}

fn check_len(found: usize, dim: usize, what: &str) -> Result<()> {
    if found != dim {
        return Err(Error::Config(format!(
            "{what}: expected {dim}, found {found}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Closed-form normal equations; diagonal covariance only.
    Basis,
    /// Gradient descent or Adam on the basis coefficients; any covariance.
    General,
    /// Neural network trained by backpropagation.
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    #[serde(default = "default_family")]
    pub family: BasisFamily,
    /// Total number of tensor-product functions; must be a perfect `d`-th power.
    pub size: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    /// Fraction of the data range added on each side of the domain.
    #[serde(default)]
    pub padding: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

fn default_family() -> BasisFamily {
    BasisFamily::ClampedBspline
}

fn default_degree() -> usize {
    2
}

impl BasisSpec {
    pub fn new(size: usize) -> Self {
        Self {
            family: default_family(),
            size,
            degree: default_degree(),
            padding: 0.0,
            boundary: Boundary::Clamp,
        }
    }

    pub fn build(&self, domain: &Domain) -> Result<TensorBasis> {
        TensorBasis::on_domain(domain, self.family, self.size, self.degree, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub method: FitMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<MlpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
}

impl FitSpec {
    pub fn basis(spec: BasisSpec) -> Self {
        Self {
            method: FitMethod::Basis,
            basis: Some(spec),
            network: None,
            optimizer: None,
        }
    }

    pub fn general(spec: BasisSpec, opt: OptimizerConfig) -> Self {
        Self {
            method: FitMethod::General,
            basis: Some(spec),
            network: None,
            optimizer: Some(opt),
        }
    }

    pub fn mlp(spec: MlpSpec, opt: OptimizerConfig) -> Self {
        Self {
            method: FitMethod::Mlp,
            basis: None,
            network: Some(spec),
            optimizer: Some(opt),
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        self.optimizer.clone().unwrap_or_default()
    }

    pub fn network(&self) -> MlpSpec {
        self.network.clone().unwrap_or_default()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self.method {
            FitMethod::Basis | FitMethod::General => {
                let b = self.basis.as_ref().ok_or_else(|| {
                    Error::Config("fit.basis is required for basis and general fits".into())
                })?;
                if self.network.is_some() {
                    return Err(Error::Config("fit.network only applies to mlp fits".into()));
                }
                if self.method == FitMethod::Basis && self.optimizer.is_some() {
                    return Err(Error::Config(
                        "fit.optimizer does not apply to the closed-form basis fit".into(),
                    ));
                }
                if !(b.padding >= 0.0 && b.padding.is_finite()) {
                    return Err(Error::Config(
                        "fit.basis.padding must be nonnegative".into(),
                    ));
                }
                let unit = Domain::new(vec![0.0; dim], vec![1.0; dim])?;
                b.build(&unit)?;
            }
            FitMethod::Mlp => {
                if self.basis.is_some() {
                    return Err(Error::Config("fit.basis does not apply to mlp fits".into()));
                }
                self.network().validate()?;
            }
        }
        self.optimizer().validate()
    }
}

/// Where and what to write. Nothing is written without `dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Trajectories included in the overlay plot data.
    #[serde(default = "default_overlay")]
    pub overlay_trajectories: usize,
    /// Points in the drift-curve plot data (1D only).
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn default_bins() -> usize {
    50
}

fn default_overlay() -> usize {
    5
}

fn default_curve_points() -> usize {
    200
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            histogram_bins: default_bins(),
            overlay_trajectories: default_overlay(),
            curve_points: default_curve_points(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.dim == 0 {
            return cfg("dim must be at least 1".into());
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return cfg("t_end must be positive".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return cfg("dt must be positive".into());
        }
        self.grid().map_err(|e| Error::Config(e.to_string()))?;
        if self.trajectories == 0 {
            return cfg("trajectories must be at least 1".into());
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_end))
        {
            return cfg(format!(
                "snapshot time {t} lies outside [0, {}]",
                self.t_end
            ));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return cfg("ridge must be nonnegative".into());
        }
        if self.output.histogram_bins == 0 {
            return cfg("output.histogram_bins must be at least 1".into());
        }
        self.initial
            .validate(self.dim)
            .map_err(|e| Error::Config(e.to_string()))?;
        self.drift.build(self.dim)?;
        self.covariance.build(self.dim)?;
        self.fit.validate(self.dim)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::uniform(self.t_end, self.dt)
    }

    pub fn drift_function(&self) -> Result<DriftExpression> {
        self.drift.build(self.dim)
    }

    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        self.covariance.build(self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3
dim = 2
t_end = 1.0
dt = 0.01
trajectories = 50
snapshot_times = [0.5, 1.0]

[initial]
kind = "uniform"
lo = [0.0, 0.0]
hi = [10.0, 10.0]

[drift]
expressions = ["0.4*x1 - 0.1*x1*x2", "-0.8*x2 + 0.2*x1^2"]

[covariance]
kind = "diagonal"
variances = [0.6, 0.8]

[fit]
method = "basis"

[fit.basis]
family = "piecewise-polynomial"
size = 36
degree = 2
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(
            cfg.fit.basis.as_ref().unwrap().family,
            BasisFamily::PiecewisePolynomial
        );
        assert_eq!(cfg.ridge, 0.0);
        assert_eq!(cfg.output, OutputSpec::default());
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("seed = 3", "seed = 3\nsteps = 9");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        let bad = SAMPLE.replace("degree = 2", "degree = 2\nknots = 4");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = SAMPLE.replace(
            "variances = [0.6, 0.8]",
            "variances = [0.6, 0.8]\nvariance = 1",
        );
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn invariants_enforced() {
        for (from, to) in [
            ("dt = 0.01", "dt = 0.03"),
            ("dt = 0.01", "dt = -0.01"),
            ("t_end = 1.0", "t_end = 0.0"),
            ("trajectories = 50", "trajectories = 0"),
            ("[0.5, 1.0]", "[0.5, 1.5]"),
            ("size = 36", "size = 30"),
            ("variances = [0.6, 0.8]", "variances = [0.6]"),
            ("\"-0.8*x2 + 0.2*x1^2\"", "\"-0.8*x3\""),
            ("method = \"basis\"", "method = \"mlp\""),
        ] {
            let bad = SAMPLE.replace(from, to);
            assert!(ExperimentConfig::from_toml_str(&bad).is_err(), "{to}");
        }
    }

    #[test]
    fn covariance_kinds() {
        let full = CovarianceSpec::Full {
            matrix: vec![vec![0.6, 0.2], vec![0.2, 0.8]],
        };
        assert!(!full.build(2).unwrap().is_diagonal());
        let f = CovarianceSpec::DiagonalFunction {
            expressions: vec!["1 + 0.1*x1^2".into()],
        }
        .build(1)
        .unwrap();
        assert_eq!(f.matrix_at(&[2.0]), vec![1.4]);
        let g = CovarianceSpec::FullFunction {
            expressions: vec![
                vec!["2".into(), "0.1*x1".into()],
                vec!["0.1*x1".into(), "3".into()],
            ],
        }
        .build(2)
        .unwrap();
        assert_eq!(g.matrix_at(&[1.0, 0.0]), vec![2.0, 0.1, 0.1, 3.0]);
        assert!(CovarianceSpec::Scalar { variance: 0.0 }.build(1).is_err());
    }

    #[test]
    fn drift_spec_exclusive() {
        assert!(DriftSpec::default().build(1).is_err());
        let both = DriftSpec {
            preset: Some("poly-1d".into()),
            expressions: Some(vec!["x1".into()]),
        };
        assert!(both.build(1).is_err());
        assert!(DriftSpec::preset("poly-2d").build(1).is_err());
        assert!(DriftSpec::preset("nope").build(1).is_err());
        assert_eq!(
            DriftSpec::preset("poly-1d")
                .build(1)
                .unwrap()
                .components()
                .len(),
            1
        );
    }
}
