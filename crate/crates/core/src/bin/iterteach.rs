use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use iterteach::harness::{self, CompareConfig, Experiment, ExperimentConfig};
use iterteach::theory::{certify_distances, pool_volume, PoolVolumeOptions};
use iterteach::{Error, Result};

#[derive(Parser)]
#[command(name = "iterteach", version, about = "Iterative machine teaching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `output` or `.`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one teaching loop and write `trace.csv` and `run.json`.
    Run(Common),
    /// Run several configs on shared data and write `comparison.csv/json`.
    Compare(Common),
    /// SGD on the set of pool examples a run selected.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Trace of the original run; the run is repeated when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Contraction certificate for a synthesis or combination run, or for a
    /// trace file given `--nu`.
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long, requires = "nu")]
        trace: Option<PathBuf>,
        #[arg(long)]
        nu: Option<f64>,
    },
    /// Pool volume of the configured training pool.
    PoolVolume {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1 << 14)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        refine_iters: usize,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg_out: Option<&Path>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg_out.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load(&common)?;
            let exp = Experiment::prepare(&cfg)?;
            let out = exp.run()?;
            let files = harness::write_run(&out_dir(&common, cfg.output.as_deref()), &exp.report(&out), &out.trace)?;
            if !common.quiet {
                let last = out.trace.last().expect("initial row");
                println!(
                    "{}: t={} dist={:.6e} objective={:.6e} -> {}",
                    cfg.label(),
                    last.t,
                    last.dist_to_wstar,
                    last.train_objective,
                    files.trace.display()
                );
            }
        }
        Command::Compare(common) => {
            let mut cmp_cfg = CompareConfig::load(&common.config)?;
            if let Some(seed) = common.seed {
                cmp_cfg.runs.iter_mut().for_each(|r| r.seed = seed);
            }
            let cmp = harness::compare(&cmp_cfg.runs)?;
            let files = harness::write_comparison(&out_dir(&common, None), &cmp)?;
            if !common.quiet {
                for m in &cmp.summary {
                    println!(
                        "{:<24} final dist {:.6e}  objective {:.6e}  area {:.6e}",
                        m.label, m.final_dist_to_wstar, m.final_train_objective, m.area_under_dist
                    );
                }
                println!("-> {}", files.summary.display());
            }
        }
        Command::Replay { common, trace } => {
            let cfg = load(&common)?;
            let exp = Experiment::prepare(&cfg)?;
            let original = match trace {
                Some(path) => harness::read_trace(&path)?,
                None => exp.run()?.trace,
            };
            let replayed = exp.replay(&original)?;
            let files = harness::write_replay(
                &out_dir(&common, cfg.output.as_deref()),
                &cfg.label(),
                &original.selected_indices(),
                &replayed,
            )?;
            if !common.quiet {
                let last = replayed.last().expect("initial row");
                println!("replay: t={} dist={:.6e} -> {}", last.t, last.dist_to_wstar, files.trace.display());
            }
        }
        Command::Certify { common, trace, nu } => {
            let cfg = load(&common)?;
            let cert = match (trace, nu) {
                (Some(path), Some(nu)) => {
                    let t = harness::read_trace(&path)?;
                    let gamma = t.rows.get(1).and_then(|r| r.selected_gamma).unwrap_or(0.0);
                    certify_distances(&t.distances(), cfg.eta(), nu, gamma, cfg.epsilon)?
                }
                _ => harness::run(&cfg)?.certificate.ok_or_else(|| {
                    Error::Config("certificates need a synthesis or combination teacher".into())
                })?,
            };
            let dir = out_dir(&common, cfg.output.as_deref());
            std::fs::create_dir_all(&dir)?;
            let mut bytes = serde_json::to_vec_pretty(&cert)?;
            bytes.push(b'\n');
            harness::write_atomic(&dir.join("certificate.json"), &bytes)?;
            if !common.quiet {
                print_json(&cert)?;
            }
        }
        Command::PoolVolume {
            common,
            samples,
            refine_iters,
        } => {
            let cfg = load(&common)?;
            let exp = Experiment::prepare(&cfg)?;
            let opts = PoolVolumeOptions {
                samples,
                refine_iters,
                seed: cfg.seed,
            };
            let report = pool_volume(&exp.student_pool, &opts)?;
            if !common.quiet {
                print_json(&report)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
