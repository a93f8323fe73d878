use clap::{Parser, Subcommand};
use parallax::cli;
use parallax::config::RunConfig;
use parallax::net::ScaleProfile;
use std::path::PathBuf;
use std::process::ExitCode;

/// Unsupervised single-view depth estimation from rectified stereo pairs.
#[derive(Parser)]
#[command(name = "parallax", version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic stereo dataset from a scene spec file.
    Synth {
        /// Scene spec (TOML: explicit scenes and/or a random family).
        #[arg(long)]
        spec: PathBuf,
        /// Dataset directory to create.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the disparity network (unsupervised or proxy-supervised).
    Train {
        /// Run configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scale profile (desk, paper).
        #[arg(long)]
        profile: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads for batch evaluation.
        #[arg(long)]
        threads: Option<usize>,
        /// Resume from a checkpoint produced by the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset (seven-metric rows + heat maps).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory (with manifest.toml).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Run configuration for clamp bounds and hash checking.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Crop rectangle top,left,bottom,right (defaults to full image).
        #[arg(long)]
        crop: Option<String>,
        /// Evaluate even when the checkpoint's config hash differs.
        #[arg(long)]
        allow_hash_mismatch: bool,
    },
    /// Finite-difference check of every differentiable primitive and the
    /// end-to-end composite.
    Gradcheck {
        #[arg(long, default_value_t = 11)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Horn-Schunck stereo over a dataset, with metrics when ground truth
    /// is available.
    Baseline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the layer-by-layer architecture for a profile or config.
    DumpArch {
        #[arg(long)]
        config: Option<PathBuf>,
        /// desk or paper (used when no config is given).
        #[arg(long, default_value = "desk")]
        profile: String,
    },
}

fn parse_profile(s: &str) -> Result<ScaleProfile, parallax::Error> {
    match s {
        "desk" => Ok(ScaleProfile::Desk),
        "paper" => Ok(ScaleProfile::Paper),
        other => Err(parallax::Error::Config(format!(
            "unknown profile {other} (expected desk or paper)"
        ))),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, parallax::Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run() -> Result<(), parallax::Error> {
    match Args::parse().command {
        Command::Synth { spec, output } => {
            let (count, range) = cli::cmd_synth(&spec, &output)?;
            println!(
                "wrote {count} pairs to {} (disparity range [{:.2}, {:.2}] px)",
                output.display(),
                range[0],
                range[1]
            );
            Ok(())
        }
        Command::Train {
            config,
            seed,
            profile,
            output,
            threads,
            resume,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = &profile {
                cfg.profile = parse_profile(p)?;
                cfg.network = None;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let out = cli::cmd_train(cfg, resume.as_deref())?;
            println!("final checkpoint: {}", out.checkpoint.display());
            if let Some(m) = &out.train_metrics {
                println!("train:   {}", m.kv_text().replace('\n', " "));
            }
            if let Some(m) = &out.holdout_metrics {
                println!("holdout: {}", m.kv_text().replace('\n', " "));
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data,
            output,
            config,
            crop,
            allow_hash_mismatch,
        } => {
            let cfg = load_config(&config)?.resolved()?;
            let crop = match crop {
                Some(s) => {
                    let parts: Vec<usize> = s
                        .split(',')
                        .map(|v| v.trim().parse())
                        .collect::<Result<_, _>>()
                        .map_err(|e| {
                            parallax::Error::Config(format!("bad crop rectangle: {e}"))
                        })?;
                    if parts.len() != 4 {
                        return Err(parallax::Error::Config(
                            "crop needs four values: top,left,bottom,right".into(),
                        ));
                    }
                    Some([parts[0], parts[1], parts[2], parts[3]])
                }
                None => None,
            };
            let expected = config.as_ref().map(|_| cfg.hash()).transpose()?;
            let (mean, csv) = cli::cmd_eval(
                &checkpoint,
                &data,
                &output,
                (cfg.geometry.clamp[0], cfg.geometry.clamp[1]),
                crop,
                expected.as_deref(),
                allow_hash_mismatch,
            )?;
            print!("{}", mean.kv_text());
            println!("rows: {}", csv.display());
            Ok(())
        }
        Command::Gradcheck { seed, output } => {
            let (outcomes, passed) = cli::cmd_gradcheck(seed, output.as_deref())?;
            for o in &outcomes {
                println!("{}", o.summary_line());
            }
            if passed {
                println!("ALL PASS");
                Ok(())
            } else {
                Err(parallax::Error::Numeric(
                    "gradient check failures (see report above)".into(),
                ))
            }
        }
        Command::Baseline {
            data,
            output,
            config,
        } => {
            let cfg = load_config(&config)?;
            match cli::cmd_baseline(&data, &output, &cfg)? {
                Some(mean) => print!("{}", mean.kv_text()),
                None => println!("no ground truth in dataset; wrote disparities only"),
            }
            Ok(())
        }
        Command::DumpArch { config, profile } => {
            let cfg = match &config {
                Some(_) => load_config(&config)?,
                None => RunConfig {
                    profile: parse_profile(&profile)?,
                    ..RunConfig::default()
                },
            };
            print!("{}", cli::cmd_dump_arch(&cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
