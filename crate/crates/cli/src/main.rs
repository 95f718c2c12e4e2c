//! Command-line front end: train, evaluate and cross-check oracles.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;
mod error;
mod eval;
mod oracle_check;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use enot::datagen::ToyDistribution;
use enot::training::TrainConfig;

use config::{gaussian_train_defaults, ExperimentConfig, Overrides, Task};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "enot", version, about = "Entropic optimal transport with learned SDE drifts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the training commands; they override config values.
#[derive(clap::Args, Clone, Default)]
struct RunFlags {
    /// run seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// outer iterations (overrides the config)
    #[arg(long)]
    iters: Option<usize>,
    /// output directory; defaults to $ENOT_OUTPUT_ROOT/<name> or runs/<name>
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Hyperparameter flags of the preset commands.
#[derive(clap::Args, Clone)]
struct PresetFlags {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// learning rate of both networks
    #[arg(long)]
    lr: Option<f64>,
    /// hidden widths of both networks, comma separated
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// evaluation sample count
    #[arg(long)]
    eval_samples: Option<usize>,
}

impl PresetFlags {
    fn apply(&self, t: &mut TrainConfig) {
        if let Some(v) = self.epsilon {
            t.epsilon = v;
        }
        if let Some(v) = self.n_steps {
            t.n_steps = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr {
            t.lr_f = v;
            t.lr_beta = v;
        }
        if let Some(v) = &self.hidden {
            t.hidden_f = v.clone();
            t.hidden_beta = v.clone();
        }
        if let Some(v) = self.eval_every {
            t.eval_every = v;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ToyTarget {
    SwissRoll,
    EightGaussians,
}

#[derive(Subcommand)]
enum Command {
    /// Train from an experiment config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Gaussian metrics of a checkpoint against an instance.
    Eval {
        #[arg(long, required_unless_present = "self_test")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        instance: PathBuf,
        /// comma-separated times of the intermediate-marginal metrics
        #[arg(long, default_value = "0,0.2,0.4,0.6,0.8,1", value_delimiter = ',')]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "eval")]
        output: PathBuf,
        /// trajectories exported to trajectories.csv
        #[arg(long, default_value_t = 0)]
        trajectories: usize,
        /// evaluate exact oracle samples instead of a checkpoint
        #[arg(long)]
        self_test: bool,
    },
    /// Generate a Gaussian benchmark instance, train on it and evaluate.
    GaussBench {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        instance_seed: u64,
        #[command(flatten)]
        preset: PresetFlags,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Train from a standard Gaussian to a 2-D toy target.
    Toy {
        #[arg(long, value_enum)]
        target: ToyTarget,
        #[command(flatten)]
        preset: PresetFlags,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Cross-check the closed-form Gaussian oracle against Sinkhorn.
    OracleCheck {
        /// 1-D cases only
        #[arg(long)]
        quick: bool,
        /// multiply epsilon in the closed form only (sensitivity check)
        #[arg(long, default_value_t = 1.0)]
        inject_eps_factor: f64,
        /// write oracle_check.json here
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn overrides(r: &RunFlags) -> Overrides {
    Overrides {
        seed: r.seed,
        iters: r.iters,
        output: r.output.clone(),
    }
}

fn preset_experiment(task: Task, mut train: TrainConfig, p: &PresetFlags, r: &RunFlags, name: &str) -> CliResult<()> {
    p.apply(&mut train);
    let mut cfg = ExperimentConfig {
        task,
        train,
        eval: Default::default(),
        output_dir: None,
        seed: None,
    }
    .resolve(&overrides(r));
    if let Some(n) = p.eval_samples {
        cfg.eval.n_samples = Some(n);
    }
    let echo = serde_json::to_string_pretty(&cfg)? + "\n";
    let dir = cfg.output_dir(&format!("{name}_seed{}", cfg.seed()));
    run::run_experiment(&cfg, &echo, &dir)?;
    println!("output: {}", dir.display());
    Ok(())
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Train { config, run } => {
            let (cfg, echo) = ExperimentConfig::load(&config)?;
            let cfg = cfg.resolve(&overrides(&run));
            let name = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            let dir = cfg.output_dir(&name);
            run::run_experiment(&cfg, &echo, &dir)?;
            println!("output: {}", dir.display());
            Ok(())
        }
        Command::Eval {
            checkpoint,
            instance,
            t_grid,
            n_samples,
            seed,
            output,
            trajectories,
            self_test,
        } => {
            eval::cmd_eval(&eval::EvalArgs {
                checkpoint,
                instance,
                t_grid,
                n_samples,
                seed,
                output,
                trajectories,
                self_test,
            })?;
            Ok(())
        }
        Command::GaussBench {
            dim,
            instance_seed,
            preset,
            run,
        } => {
            let train = gaussian_train_defaults();
            let eps = preset.epsilon.unwrap_or(train.epsilon);
            let task = Task::GaussBench { dim, instance_seed };
            preset_experiment(task, train, &preset, &run, &format!("gauss_d{dim}_eps{eps}"))
        }
        Command::Toy { target, preset, run } => {
            let (target, label) = match target {
                ToyTarget::SwissRoll => (ToyDistribution::swiss_roll(), "swiss_roll"),
                ToyTarget::EightGaussians => (ToyDistribution::eight_gaussians(), "eight_gaussians"),
            };
            let train = TrainConfig::default();
            let eps = preset.epsilon.unwrap_or(train.epsilon);
            let task = Task::Toy {
                source: ToyDistribution::gaussian(),
                target,
            };
            preset_experiment(task, train, &preset, &run, &format!("toy_{label}_eps{eps}"))
        }
        Command::OracleCheck {
            quick,
            inject_eps_factor,
            output,
        } => {
            if !(inject_eps_factor > 0.0 && inject_eps_factor.is_finite()) {
                return Err(CliError::usage("--inject-eps-factor must be positive"));
            }
            let reports = oracle_check::run(quick, inject_eps_factor)?;
            for r in &reports {
                println!("{}", r.line());
            }
            if let Some(dir) = output {
                std::fs::create_dir_all(&dir)?;
                run::write_json(&dir.join("oracle_check.json"), &reports)?;
            }
            let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
            if failed.is_empty() {
                println!("PASS oracle-check: {} cases", reports.len());
                Ok(())
            } else {
                let cases: Vec<String> = failed.iter().map(|r| format!("{} dim={} eps={} {}", r.check, r.dim, r.epsilon, r.params)).collect();
                Err(CliError::runtime(format!("{} oracle case(s) failed:\n  {}", failed.len(), cases.join("\n  "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
