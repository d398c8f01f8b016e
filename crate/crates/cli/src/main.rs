use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use epicast_core::data::write_series;
use epicast_core::ensemble::{combine, compute_weights_with, ensemble_id, EnsembleReport};
use epicast_core::experiment::{
    forecast_file_name, forecast_origins, grid_search, lookback_sweep, multi_seed_stability, run_full_experiment,
    score_members, select_lookback, train_sources, write_experiment_outputs, write_grid_csv, write_stability_csv,
    write_sweep_csv, Grid,
};
use epicast_core::forecast::{read_forecasts, write_forecasts};
use epicast_core::synth::{demo_study, generate_synthetic, SynthParams, STUDY_DAYS};
use epicast_core::{
    evaluate_forecast_scaled, finetune, pretrain, recursive_forecast, Error, ExperimentConfig, GruModel, Result, Study,
    SynthKind,
};

#[derive(Parser)]
#[command(
    name = "epicast",
    version,
    about = "GRU transfer-learning forecasts of daily epidemic counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Study configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, env = "EPICAST_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train one country's model on the pre-training range.
    Train {
        #[command(flatten)]
        common: Common,
        /// Country to train on; defaults to the first source.
        #[arg(long)]
        country: Option<String>,
    },
    /// Fine-tune a saved model on the target's fine-tune range.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Recursive forecast for the target from a saved model.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// First forecast day; defaults to the start of the test range.
        #[arg(long)]
        origin: Option<NaiveDate>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Relative errors of forecast CSVs against the target series.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true, num_args = 1..)]
        forecast: Vec<PathBuf>,
    },
    /// Validation-weighted ensemble of all sources over the test origins.
    Ensemble {
        #[command(flatten)]
        common: Common,
    },
    /// Full study: every source combination plus the target-only model.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Skip fine-tuning regardless of the configuration.
        #[arg(long)]
        no_finetune: bool,
    },
    /// Full study repeated for each look-back.
    SweepLookback {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "7,8,9,10,11,12,13,14,15,16,17,18,19")]
        lookbacks: Vec<usize>,
        /// Defaults to the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Mean and standard deviation of every table cell across seeds.
    Stability {
        #[command(flatten)]
        common: Common,
        /// Defaults to the configured seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Exhaustive hyper-parameter search scored on validation RMSE.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        learning_rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        epochs: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        hidden_sizes: Vec<usize>,
    },
    /// Synthetic series, or with `--study` a complete demo study.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "two-wave")]
        kind: SynthKind,
        #[arg(long, default_value_t = STUDY_DAYS)]
        days: usize,
        #[arg(long, default_value = "Synthland")]
        name: String,
        #[arg(long, default_value_t = 100.0)]
        density: f64,
        /// Write this many source countries, a target and `study.toml`.
        #[arg(long)]
        study: Option<usize>,
    },
}

struct Ctx {
    config: ExperimentConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let path = common
            .config
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("--config is required for this command".into()))?;
        let mut config = ExperimentConfig::load(path)?;
        let seed = common.seed.unwrap_or(config.seed);
        config.seed = seed;
        std::fs::create_dir_all(&common.out).map_err(|e| io_err(&common.out, e))?;
        Ok(Self {
            config,
            seed,
            out: common.out.clone(),
        })
    }

    fn study(&self) -> Result<Study> {
        Study::load(&self.config)
    }

    fn seeds(&self, given: &[u64]) -> Vec<u64> {
        if given.is_empty() {
            self.config.seeds.clone()
        } else {
            given.to_vec()
        }
    }

    fn create(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>> {
        let path = self.out.join(name);
        std::fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| io_err(&path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn model_file(name: &str) -> String {
    format!("model_{}.json", epicast_core::experiment::member_slug(name))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { common, country } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let name = country.unwrap_or_else(|| ctx.config.source_names()[0].clone());
            let series = study
                .sources
                .iter()
                .chain([&study.target])
                .find(|s| s.country_name() == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown country `{name}`")))?;
            let cfg = epicast_core::TrainConfig {
                seed: ctx.seed,
                ..ctx.config.train
            };
            let (model, history) = pretrain(series, ctx.config.dates.pretrain(), ctx.config.lookback, &cfg)?;
            model.save(ctx.out.join(model_file(&name)))?;
            write_history(
                &ctx,
                &format!("history_{}.csv", epicast_core::experiment::member_slug(&name)),
                &history.epoch_loss,
            )
        }
        Command::Finetune { common, model } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let base = GruModel::load(&model)?;
            let cfg = epicast_core::TrainConfig {
                seed: ctx.seed,
                ..ctx.config.train
            };
            let (tuned, history) = finetune(&base, &study.target, ctx.config.dates.finetune(), &cfg)?;
            let stem = format!("{}_finetuned", base.provenance);
            tuned.save(ctx.out.join(model_file(&stem)))?;
            write_history(
                &ctx,
                &format!("history_{}.csv", epicast_core::experiment::member_slug(&stem)),
                &history.epoch_loss,
            )
        }
        Command::Forecast {
            common,
            model,
            origin,
            horizon,
        } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let model = GruModel::load(&model)?;
            let origin = origin.unwrap_or(ctx.config.dates.test_from);
            let context = study.target.context_before(origin, model.lookback)?;
            let f = recursive_forecast(&model, &context, horizon.unwrap_or(ctx.config.horizon))?;
            write_forecasts([&f], ctx.create(&forecast_file_name(&f))?)
        }
        Command::Evaluate { common, forecast } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let mut reports = Vec::new();
            for path in &forecast {
                let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
                for f in read_forecasts(file)? {
                    reports.push(evaluate_forecast_scaled(&study.target, &f, ctx.config.metric_scale)?);
                }
            }
            let json = serde_json::to_string_pretty(&reports)?;
            let path = ctx.out.join("evaluation.json");
            std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
        }
        Command::Ensemble { common } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let members = score_members(&ctx.config, &study, train_sources(&ctx.config, &study, ctx.seed)?)?;
            let scores: Vec<_> = members.iter().map(|m| m.validation.clone()).collect();
            let spec = compute_weights_with(&scores, ctx.config.ensemble_mode, ctx.config.rmse_aggregation)?;
            let origins = forecast_origins(ctx.config.dates.test(), ctx.config.horizon);
            for k in 0..origins.len() {
                let at: Vec<_> = members.iter().map(|m| m.test_forecasts[k].clone()).collect();
                let f = combine(&at, &spec)?;
                debug_assert_eq!(f.member_id, ensemble_id(&spec.member_ids));
                write_forecasts([&f], ctx.create(&forecast_file_name(&f))?)?;
            }
            let json = serde_json::to_string_pretty(&EnsembleReport::new(&spec, &scores))?;
            let path = ctx.out.join("ensemble_report.json");
            std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))
        }
        Command::Experiment { common, no_finetune } => {
            let mut ctx = Ctx::new(&common)?;
            if no_finetune {
                ctx.config.finetune_enabled = false;
            }
            let study = ctx.study()?;
            let output = run_full_experiment(&ctx.config, &study, ctx.seed)?;
            write_experiment_outputs(&ctx.out, &output)
        }
        Command::SweepLookback {
            common,
            lookbacks,
            seeds,
        } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let points = lookback_sweep(&ctx.config, &study, &lookbacks, &ctx.seeds(&seeds))?;
            write_sweep_csv(&points, ctx.create("lookback_sweep.csv")?)?;
            if let Some(l) = select_lookback(&points) {
                log::info!("lowest mean RMSE at look-back {l}");
            }
            Ok(())
        }
        Command::Stability { common, seeds } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let rows = multi_seed_stability(&ctx.config, &study, &ctx.seeds(&seeds))?;
            write_stability_csv(&rows, ctx.create("stability.csv")?)
        }
        Command::GridSearch {
            common,
            learning_rates,
            epochs,
            hidden_sizes,
        } => {
            let ctx = Ctx::new(&common)?;
            let study = ctx.study()?;
            let grid = Grid {
                learning_rates,
                epochs,
                hidden_sizes,
            };
            let result = grid_search(&ctx.config, &study, &grid, ctx.seed)?;
            write_grid_csv(&result, ctx.create("grid.csv")?)?;
            let best = ExperimentConfig {
                train: result.best,
                ..ctx.config.clone()
            };
            let path = ctx.out.join("best_config.toml");
            std::fs::write(&path, best.to_toml()?).map_err(|e| io_err(&path, e))
        }
        Command::Synth {
            common,
            kind,
            days,
            name,
            density,
            study,
        } => {
            let out = &common.out;
            std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
            let seed = common.seed.unwrap_or(0);
            let write = |series: &epicast_core::CountrySeries| -> Result<()> {
                let path = out.join(format!("{}.csv", series.country_name()));
                let file = std::fs::File::create(&path).map_err(|e| io_err(&path, e))?;
                write_series(series, std::io::BufWriter::new(file))
            };
            match study {
                Some(n) => {
                    let (config, series) = demo_study(kind, n, seed)?;
                    series.iter().try_for_each(write)?;
                    let path = out.join("study.toml");
                    std::fs::write(&path, config.to_toml()?).map_err(|e| io_err(&path, e))
                }
                None => {
                    let params = SynthParams {
                        name,
                        population_density: density,
                        ..SynthParams::default()
                    };
                    write(&generate_synthetic(kind, days, seed, &params)?)
                }
            }
        }
    }
}

fn write_history(ctx: &Ctx, name: &str, losses: &[f64]) -> Result<()> {
    use std::io::Write;
    let mut w = ctx.create(name)?;
    let path = ctx.out.join(name);
    writeln!(w, "epoch,loss").map_err(|e| io_err(&path, e))?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(w, "{},{l}", i + 1).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{body}");
            ExitCode::FAILURE
        }
    }
}
