use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rvo_nav::harness::{
    self, format_table, load_config, metrics_csv, timing_csv, AblationConfig, CompareConfig,
    EvalConfig, HarnessError, PolicyChoice,
};
use rvo_nav::ppo::{self, TrainConfig};
use rvo_nav::world::{EpisodeRecord, ScenarioKind};

#[derive(Parser)]
#[command(
    name = "rvo-nav",
    about = "Multi-robot collision avoidance: train, evaluate, and plot reciprocal-velocity-obstacle policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Rlrvo,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Circle,
    Random,
    Corridor,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> ScenarioKind {
        match s {
            ScenarioArg::Circle => ScenarioKind::Circle,
            ScenarioArg::Random => ScenarioKind::Random,
            ScenarioArg::Corridor => ScenarioKind::Corridor,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy with the two-stage PPO schedule.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out/train")]
        out: PathBuf,
        /// Override the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a policy over seeded episodes and report the metrics.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out/eval")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured policy kind (rlrvo needs a checkpoint in
        /// the config).
        #[arg(long)]
        policy: Option<PolicyArg>,
        #[arg(long)]
        robots: Option<usize>,
        #[arg(long)]
        scenario: Option<ScenarioArg>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Render an episode-record CSV as an SVG trajectory plot.
    Plot {
        /// Episode record CSV (as written by eval --save-records).
        record: PathBuf,
        #[arg(long, default_value = "trajectories.svg")]
        out: PathBuf,
        /// Robot radius for the final-position discs (m).
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
    },
    /// Evaluate trained ablation variants across scenarios.
    Ablation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out/ablation")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate several policies side by side across robot counts.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out/compare")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg: TrainConfig = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = ppo::train(&cfg, &out)?;
            println!(
                "trained {} epochs; final eval success {:.3}, best {:.3}",
                report.epochs_run, report.final_success, report.best_success
            );
            println!("final checkpoint: {}", report.final_checkpoint.display());
            println!("best checkpoint:  {}", report.best_checkpoint.display());
            println!("curves:           {}", report.curve_path.display());
            Ok(())
        }
        Command::Eval { config, out, seed, policy, robots, scenario, episodes } => {
            let mut cfg: EvalConfig = load_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(n) = robots {
                cfg.robot_counts = vec![n];
            }
            if let Some(sc) = scenario {
                cfg.scenario.kind = sc.into();
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(p) = policy {
                cfg.policy = match (p, cfg.policy) {
                    (PolicyArg::Baseline, _) => PolicyChoice::Baseline {
                        sampler: Default::default(),
                    },
                    (PolicyArg::Rlrvo, keep @ PolicyChoice::Rlrvo { .. }) => keep,
                    (PolicyArg::Rlrvo, _) => {
                        return Err(HarnessError::BadConfig {
                            path: config,
                            message: "--policy rlrvo needs a checkpoint in the config".into(),
                        })
                    }
                };
            }
            std::fs::create_dir_all(&out)?;
            let result = harness::run_eval(&cfg, Some(&out))?;
            std::fs::write(out.join("metrics.csv"), metrics_csv(&result.rows))?;
            std::fs::write(out.join("timing.csv"), timing_csv(&result.timing))?;
            print!("{}", format_table(&result.rows));
            Ok(())
        }
        Command::Plot { record, out, radius } => {
            let text =
                std::fs::read_to_string(&record).map_err(|source| HarnessError::Unreadable {
                    path: record.clone(),
                    source,
                })?;
            let parsed = EpisodeRecord::from_csv(&text, 0.1)
                .map_err(HarnessError::Record)?;
            std::fs::write(&out, harness::plot::render_svg(&parsed, radius))?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Ablation { config, out, seed, episodes } => {
            let mut cfg: AblationConfig = load_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            std::fs::create_dir_all(&out)?;
            let result = harness::run_ablation(&cfg)?;
            std::fs::write(out.join("ablation.csv"), metrics_csv(&result.rows))?;
            std::fs::write(out.join("timing.csv"), timing_csv(&result.timing))?;
            print!("{}", format_table(&result.rows));
            Ok(())
        }
        Command::Compare { config, out, seed, episodes } => {
            let mut cfg: CompareConfig = load_config(&config)?;
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            std::fs::create_dir_all(&out)?;
            let result = harness::run_compare(&cfg)?;
            std::fs::write(out.join("compare.csv"), metrics_csv(&result.rows))?;
            std::fs::write(out.join("timing.csv"), timing_csv(&result.timing))?;
            print!("{}", format_table(&result.rows));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
