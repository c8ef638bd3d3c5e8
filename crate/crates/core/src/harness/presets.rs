//! Named experiments with their published reference numbers.

use serde::Serialize;

use super::config::{BasisSpec, CovarianceSpec, DriftSpec, ExperimentConfig, FitSpec, OutputSpec};
use crate::dynamics::InitialDistribution;
use crate::estimator::{Activation, Method, MlpSpec, OptimizerConfig, WeightInit};

/// Seed shared by every preset unless overridden.
pub const PRESET_SEED: u64 = 20_240_601;

/// Published values and the acceptance bands applied at reduced scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reference {
    /// Which published summary the numbers come from.
    pub source: &'static str,
    pub basis_size: Option<usize>,
    pub relative_l2_rho: Option<f64>,
    /// Mean and standard deviation.
    pub trajectory_error: Option<(f64, f64)>,
    /// `(t, W₁)` pairs.
    pub wasserstein: &'static [(f64, f64)],
    pub bands: Bands,
}

/// Upper bounds a run must meet to count as reproducing the reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bands {
    pub relative_l2_rho: Option<f64>,
    /// Relative error restricted to the central 90% quantile range of the data.
    pub central_relative_l2_rho: Option<f64>,
    pub trajectory_error_mean: Option<f64>,
    /// Applied at every snapshot time.
    pub wasserstein: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub drift: &'static [&'static str],
    pub reference: Reference,
    fit: PresetFit,
}

#[derive(Debug, Clone, PartialEq)]
enum PresetFit {
    Basis(usize),
    Mlp,
}

impl Preset {
    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    /// Full-scale configuration: `M = 10000`, or [`MLP_TRAJECTORIES`] for the network preset.
    pub fn config(&self) -> ExperimentConfig {
        let d = self.dim();
        let covariance = if d == 1 {
            CovarianceSpec::Scalar { variance: 0.6 }
        } else {
            CovarianceSpec::Diagonal {
                variances: vec![0.6, 0.8],
            }
        };
        let (trajectories, fit) = match self.fit {
            PresetFit::Basis(n) => (10_000, FitSpec::basis(BasisSpec::new(n))),
            PresetFit::Mlp => {
                let (spec, opt) = mlp_training();
                (MLP_TRAJECTORIES, FitSpec::mlp(spec, opt))
            }
        };
        ExperimentConfig {
            seed: PRESET_SEED,
            dim: d,
            t_end: 1.0,
            dt: 0.001,
            trajectories,
            snapshot_times: vec![0.25, 0.5, 1.0],
            ridge: 0.0,
            initial: InitialDistribution::uniform(d, 0.0, 10.0),
            drift: DriftSpec::preset(self.name),
            covariance,
            fit,
            output: OutputSpec::default(),
        }
    }
}

/// Ensemble size for the network preset; training cost grows with `M`.
pub const MLP_TRAJECTORIES: usize = 2000;

/// Training schedule for the network preset: narrower and shorter than the
/// `MlpSpec` default, with large batches to tame the gradient noise of the
/// stochastic-integral term.
pub fn mlp_training() -> (MlpSpec, OptimizerConfig) {
    let spec = MlpSpec {
        hidden: vec![32, 32],
        activation: Activation::Tanh,
        output_bias: true,
        init: WeightInit::ScaledUniform,
        epochs: 10,
        batch_size: 8192,
    };
    let opt = OptimizerConfig {
        method: Method::Adam,
        step_size: 1e-3,
        max_iterations: 0,
        tolerance: 0.0,
        seed: PRESET_SEED,
    };
    (spec, opt)
}

const ONE_D_BANDS: Bands = Bands {
    relative_l2_rho: Some(0.05),
    central_relative_l2_rho: None,
    trajectory_error_mean: Some(0.01),
    wasserstein: Some(0.10),
};

const TWO_D_BANDS: Bands = Bands {
    relative_l2_rho: Some(0.08),
    central_relative_l2_rho: None,
    trajectory_error_mean: Some(0.02),
    wasserstein: Some(0.3),
};

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "sine-cos-1d",
            summary: "1D drift mixing a linear trend with sine and cosine terms",
            drift: &["2 + 0.08*x1 - 0.05*sin(x1) + 0.02*cos(x1)^2"],
            reference: Reference {
                source: "published one-dimensional sine/cosine summary",
                basis_size: Some(8),
                relative_l2_rho: Some(0.007935),
                trajectory_error: Some((0.0020239, 0.002046)),
                wasserstein: &[(0.25, 0.0291), (0.5, 0.0319), (1.0, 0.0403)],
                bands: ONE_D_BANDS,
            },
            fit: PresetFit::Basis(8),
        },
        Preset {
            name: "linear-1d-mlp",
            summary: "1D linear drift learned by a tanh network",
            drift: &["0.08*x1"],
            reference: Reference {
                source: "published deep-network example (figure only, no numbers)",
                basis_size: None,
                relative_l2_rho: None,
                trajectory_error: None,
                wasserstein: &[],
                bands: Bands {
                    relative_l2_rho: None,
                    central_relative_l2_rho: Some(0.2),
                    trajectory_error_mean: None,
                    wasserstein: None,
                },
            },
            fit: PresetFit::Mlp,
        },
        Preset {
            name: "poly-1d",
            summary: "1D quadratic drift",
            drift: &["2 + 0.08*x1 - 0.01*x1^2"],
            reference: Reference {
                source: "published one-dimensional polynomial summary",
                basis_size: Some(10),
                relative_l2_rho: Some(0.0087649),
                trajectory_error: Some((0.00199719, 0.00682781)),
                wasserstein: &[(0.25, 0.0153), (0.5, 0.0154), (1.0, 0.0278)],
                bands: Bands {
                    relative_l2_rho: Some(0.05),
                    central_relative_l2_rho: None,
                    trajectory_error_mean: None,
                    wasserstein: Some(0.08),
                },
            },
            fit: PresetFit::Basis(10),
        },
        Preset {
            name: "poly-2d",
            summary: "2D polynomial drift with a quadratic coupling",
            drift: &["0.4*x1 - 0.1*x1*x2", "-0.8*x2 + 0.2*x1^2"],
            reference: Reference {
                source: "published two-dimensional polynomial summary",
                basis_size: Some(36),
                relative_l2_rho: Some(0.02118531),
                trajectory_error: Some((0.00306613, 0.00375144)),
                wasserstein: &[(0.25, 0.0891), (0.5, 0.0872), (1.0, 0.0853)],
                bands: TWO_D_BANDS,
            },
            fit: PresetFit::Basis(36),
        },
        Preset {
            name: "trig-2d",
            summary: "2D trigonometric drift",
            drift: &[
                "2*sin(0.2*x1) + 1.5*cos(0.1*x2)",
                "3*sin(0.3*x1)*cos(0.1*x2)",
            ],
            reference: Reference {
                source: "published two-dimensional trigonometric summary",
                basis_size: Some(36),
                relative_l2_rho: Some(0.02734505),
                trajectory_error: Some((0.0041613, 0.0079917)),
                wasserstein: &[(0.25, 0.1011), (0.5, 0.1119), (1.0, 0.1293)],
                bands: TWO_D_BANDS,
            },
            fit: PresetFit::Basis(36),
        },
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}
