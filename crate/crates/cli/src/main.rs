use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sdedrift::harness::{
    evaluate, fit, load_ensemble, load_model, preset, presets, run_experiment, save_ensemble,
    save_model, simulate, ExperimentConfig, ExperimentReport,
};
use sdedrift::Error;

#[derive(Parser)]
#[command(
    name = "sdedrift",
    version,
    about = "Drift identification for SDE trajectory ensembles"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured ensemble and write the trajectory file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a drift model to a trajectory file.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Score a model against the configured true drift.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run a named experiment end to end.
    Reproduce {
        preset: String,
        /// Number of trajectories M.
        #[arg(long)]
        scale: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write trajectories, model, report and plot data here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// List the named experiments.
    ListPresets,
    /// Print a preset's configuration as TOML, a starting point for custom configs.
    ShowConfig { preset: String },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn find_preset(name: &str) -> Result<sdedrift::harness::Preset, Failure> {
    preset(name).ok_or_else(|| {
        let names: Vec<_> = presets().iter().map(|p| p.name).collect();
        Failure::Usage(format!(
            "unknown preset `{name}` (available: {})",
            names.join(", ")
        ))
    })
}

fn print_summary(report: &ExperimentReport) {
    let m = &report.metrics;
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!("trajectories           {}", report.config.trajectories);
    println!("seed                   {}", report.config.seed);
    println!("parameters             {}", report.fit.parameters);
    println!("sigma_hat              {:.6}", report.sigma_hat);
    println!("relative L2(rho)       {}", opt(m.relative_l2_rho));
    println!(
        "central L2(rho)        {}",
        opt(report.central_relative_l2_rho)
    );
    println!(
        "trajectory error       {:.6e} +- {:.6e}",
        m.trajectory_error_mean, m.trajectory_error_std
    );
    for w in &m.wasserstein {
        println!("W1 at t={:<5}          {:.6}", w.t, w.distance);
    }
    if let Some(r) = &report.reference {
        println!("reference: {}", r.reference.source);
        for c in &r.checks {
            let reported = c
                .reported
                .map_or(String::new(), |v| format!(", reported {v}"));
            println!(
                "  {:<5} {:<26} {:.6} <= {}{}",
                if c.pass { "PASS" } else { "FAIL" },
                c.metric,
                c.computed,
                c.band,
                reported
            );
        }
    }
}

fn write_report(report: &ExperimentReport, path: &PathBuf) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| {
            Failure::Run(Error::Io {
                path: parent.into(),
                source: e,
            })
        })?;
    }
    std::fs::write(path, report.to_json()).map_err(|e| {
        Failure::Run(Error::Io {
            path: path.clone(),
            source: e,
        })
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ens = simulate(&cfg)?;
            save_ensemble(&ens, &out)?;
        }
        Command::Fit {
            config,
            data,
            model_out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ens = load_ensemble(&data, Some(cfg.dim))?;
            let (model, _) = fit(&cfg, &ens)?;
            save_model(&model, &model_out)?;
        }
        Command::Evaluate {
            config,
            data,
            model,
            report,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let ens = load_ensemble(&data, Some(cfg.dim))?;
            let model = load_model(&model)?;
            let (r, _) = evaluate(&cfg, &ens, &model, None)?;
            write_report(&r, &report)?;
            print_summary(&r);
        }
        Command::Reproduce {
            preset,
            scale,
            seed,
            out_dir,
        } => {
            let p = find_preset(&preset)?;
            let mut cfg = p.config();
            if let Some(m) = scale {
                cfg.trajectories = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.output.dir = out_dir;
            println!("preset                 {} ({})", p.name, p.summary);
            let report = run_experiment(&cfg)?;
            print_summary(&report);
        }
        Command::ListPresets => {
            for p in presets() {
                println!("{:<14} d={}  {}", p.name, p.dim(), p.summary);
            }
        }
        Command::ShowConfig { preset } => {
            let p = find_preset(&preset)?;
            print!("{}", p.config().to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
