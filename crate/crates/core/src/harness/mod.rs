//! Configuration, drift expressions, presets, persistence and the experiment pipeline.

mod config;
mod expr;
mod io;
mod model;
mod presets;
mod run;

pub use config::{
    BasisSpec, CovarianceSpec, DriftSpec, ExperimentConfig, FitMethod, FitSpec, OutputSpec,
};
pub use expr::{parse_expression, BinOp, DriftExpression, Expr, Func};
pub use io::{
    density_histogram, load_ensemble, read_ensemble, save_ensemble, write_drift_curve,
    write_ensemble, write_histogram_pair, write_overlay, Histogram,
};
pub use model::{
    load_model, model_from_str, model_to_string, save_model, FittedModel, MODEL_FORMAT_VERSION,
};
pub use presets::{
    mlp_training, preset, presets, Bands, Preset, Reference, MLP_TRAJECTORIES, PRESET_SEED,
};
pub use run::{
    evaluate, fit, run_experiment, simulate, write_outputs, Check, ExperimentReport, FitSummary,
    ReferenceCheck, CENTRAL_MASS,
};
