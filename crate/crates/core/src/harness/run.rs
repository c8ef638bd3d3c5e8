//! Simulate → fit → replay → score, and the files that record it.

use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, FitMethod};
use super::io::{save_ensemble, write_drift_curve, write_histogram_pair, write_overlay};
use super::model::{save_model, FittedModel};
use super::presets::{preset, Reference};
use crate::basis::build_domain;
use crate::dynamics::{quadratic_variation_sigma, simulate_ensemble, Drift, Ensemble};
use crate::error::{Error, Result, StageExt};
use crate::estimator::{fit_basis_drift, fit_general, fit_mlp, ConvergenceReport, TrainingReport};
use crate::metrics::{evaluate as score, l2_rho_error, MetricReport, OccupationSample};

/// Probability mass of the central region used for the interior error.
pub const CENTRAL_MASS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub method: FitMethod,
    pub parameters: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tensor_sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<ConvergenceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingReport>,
}

impl FitSummary {
    fn describe(
        method: FitMethod,
        model: &FittedModel,
        optimizer: Option<ConvergenceReport>,
    ) -> Self {
        let (tensor_sizes, training) = match model {
            FittedModel::Basis(c) => (Some(c.basis().sizes()), None),
            FittedModel::Mlp(n) => (None, n.report().cloned()),
        };
        Self {
            method,
            parameters: model.parameter_count(),
            tensor_sizes,
            optimizer,
            training,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub metric: String,
    pub computed: f64,
    /// Published value at full scale, when there is one.
    pub reported: Option<f64>,
    pub band: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub reference: Reference,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub preset: Option<String>,
    pub config: ExperimentConfig,
    /// Quadratic-variation noise estimate `σ̂` from the observed ensemble.
    pub sigma_hat: f64,
    pub fit: FitSummary,
    pub metrics: MetricReport,
    /// Relative `L²(ρ)` error over the central 90% quantile box.
    pub central_relative_l2_rho: Option<f64>,
    pub reference: Option<ReferenceCheck>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Draws the ensemble described by `cfg`, recording noise.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Ensemble> {
    let run = || {
        let f = cfg.drift_function()?;
        let cov = cfg.covariance_model()?;
        simulate_ensemble(
            &f,
            &cov,
            &cfg.grid()?,
            cfg.trajectories,
            &cfg.initial,
            cfg.seed,
            true,
        )
    };
    run().stage("simulate")
}

/// Fits the model selected by `cfg.fit` to `ens`.
pub fn fit(cfg: &ExperimentConfig, ens: &Ensemble) -> Result<(FittedModel, FitSummary)> {
    let run = || {
        let cov = cfg.covariance_model()?;
        if ens.dim() != cfg.dim {
            return Err(Error::invalid(format!(
                "data has dimension {}, config says {}",
                ens.dim(),
                cfg.dim
            )));
        }
        let (model, report) = match cfg.fit.method {
            FitMethod::Basis | FitMethod::General => {
                let spec = cfg.fit.basis.as_ref().expect("validated");
                let domain = build_domain(ens, spec.padding)?;
                let tb = spec.build(&domain)?;
                if cfg.fit.method == FitMethod::Basis {
                    (
                        FittedModel::Basis(fit_basis_drift(ens, &tb, &cov, cfg.ridge)?),
                        None,
                    )
                } else {
                    let g = fit_general(ens, &tb, &cov, &cfg.fit.optimizer())?;
                    (FittedModel::Basis(g.coefficients), Some(g.report))
                }
            }
            FitMethod::Mlp => {
                let net = fit_mlp(ens, &cov, &cfg.fit.network(), &cfg.fit.optimizer())?;
                (FittedModel::Mlp(net), None)
            }
        };
        let summary = FitSummary::describe(cfg.fit.method, &model, report);
        Ok((model, summary))
    };
    run().stage("fit")
}

fn reference_checks(
    reference: Reference,
    metrics: &MetricReport,
    central: Option<f64>,
) -> ReferenceCheck {
    let mut checks = Vec::new();
    let bands = &reference.bands;
    let mut push =
        |metric: String, computed: Option<f64>, reported: Option<f64>, band: Option<f64>| {
            if let Some(band) = band {
                let computed = computed.unwrap_or(f64::NAN);
                checks.push(Check {
                    metric,
                    computed,
                    reported,
                    band,
                    pass: computed <= band,
                });
            }
        };
    push(
        "relative_l2_rho".into(),
        metrics.relative_l2_rho,
        reference.relative_l2_rho,
        bands.relative_l2_rho,
    );
    push(
        "central_relative_l2_rho".into(),
        central,
        None,
        bands.central_relative_l2_rho,
    );
    push(
        "trajectory_error_mean".into(),
        Some(metrics.trajectory_error_mean),
        reference.trajectory_error.map(|r| r.0),
        bands.trajectory_error_mean,
    );
    for w in &metrics.wasserstein {
        let reported = reference
            .wasserstein
            .iter()
            .find(|(t, _)| (t - w.t).abs() < 1e-12)
            .map(|r| r.1);
        push(
            format!("wasserstein@{}", w.t),
            Some(w.distance),
            reported,
            bands.wasserstein,
        );
    }
    let all_pass = checks.iter().all(|c| c.pass);
    ReferenceCheck {
        reference,
        checks,
        all_pass,
    }
}

/// Scores `model` on `ens` and returns the report with the replayed ensemble.
pub fn evaluate(
    cfg: &ExperimentConfig,
    ens: &Ensemble,
    model: &FittedModel,
    summary: Option<FitSummary>,
) -> Result<(ExperimentReport, Ensemble)> {
    let run = || {
        let f = cfg.drift_function()?;
        if model.dim() != cfg.dim || ens.dim() != cfg.dim {
            return Err(Error::invalid("model, data and config dimensions differ"));
        }
        let (metrics, replay) = score(&f, model, ens, &cfg.snapshot_times)?;
        let central = OccupationSample::from_ensemble(ens).central(CENTRAL_MASS)?;
        let central = match l2_rho_error(&f, model, &central) {
            Ok(v) => Some(v),
            Err(Error::ZeroTruthNorm { .. }) => None,
            Err(e) => return Err(e),
        };
        let reference = cfg
            .drift
            .preset
            .as_deref()
            .and_then(preset)
            .map(|p| reference_checks(p.reference, &metrics, central));
        // the output location is not part of the result
        let mut config = cfg.clone();
        config.output.dir = None;
        let report = ExperimentReport {
            preset: cfg.drift.preset.clone(),
            config,
            sigma_hat: quadratic_variation_sigma(ens),
            fit: summary.unwrap_or_else(|| FitSummary::describe(cfg.fit.method, model, None)),
            metrics,
            central_relative_l2_rho: central,
            reference,
        };
        Ok((report, replay))
    };
    run().stage("evaluate")
}

/// Writes the trajectory file, model file, report and plot data into `dir`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    dir: &Path,
    ens: &Ensemble,
    replay: &Ensemble,
    model: &FittedModel,
    report: &ExperimentReport,
) -> Result<()> {
    let run = || {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_ensemble(ens, dir.join("trajectories.csv"))?;
        save_model(model, dir.join("model.toml"))?;
        let path = dir.join("report.json");
        std::fs::write(&path, report.to_json()).map_err(|e| Error::io(&path, e))?;
        write_histogram_pair(
            ens,
            replay,
            cfg.output.histogram_bins,
            &dir.join("histogram.csv"),
        )?;
        write_overlay(
            ens,
            replay,
            cfg.output.overlay_trajectories,
            &dir.join("overlay.csv"),
        )?;
        if cfg.dim == 1 {
            let domain = build_domain(ens, 0.0)?;
            let (lo, hi) = domain.interval(0);
            let f = cfg.drift_function()?;
            write_drift_curve(
                &f,
                model,
                lo,
                hi,
                cfg.output.curve_points,
                &dir.join("drift_curve.csv"),
            )?;
        }
        Ok(())
    };
    run().stage("write")
}

/// The full pipeline. Writes outputs when `cfg.output.dir` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate().stage("config")?;
    let ens = simulate(cfg)?;
    let (model, summary) = fit(cfg, &ens)?;
    let (report, replay) = evaluate(cfg, &ens, &model, Some(summary))?;
    if let Some(dir) = &cfg.output.dir {
        write_outputs(cfg, dir, &ens, &replay, &model, &report)?;
    }
    Ok(report)
}
