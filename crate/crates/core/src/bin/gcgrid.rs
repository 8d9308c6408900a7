//! Experiment driver for the tabular offline goal-conditioned RL lab.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gcgrid::config::{parse_config_with_overrides, Algo, ExperimentConfig};
use gcgrid::dataset::{generate_dataset, write_jsonl};
use gcgrid::error::Error;
use gcgrid::eval::{builtin_tasks, evaluate, flat_selector, hier_selector};
use gcgrid::experiment::{run_experiment, run_sweep};
use gcgrid::oracle;
use gcgrid::policy::read_policy_table;
use gcgrid::value::fmt_f64;

#[derive(Parser)]
#[command(name = "gcgrid", about = "Tabular offline goal-conditioned RL on gridworld mazes")]
struct Cli {
    /// Path to a flat key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed; defaults to the config's `seeds` list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Config override, repeatable: --override key=value
    #[arg(long = "override", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect an offline dataset and write it as JSON lines.
    GenerateData,
    /// Run the sequential training phases and write run artifacts.
    Train,
    /// Evaluate previously trained policy tables from a run directory.
    Eval {
        /// Run directory holding the serialized tables.
        #[arg(long)]
        run: PathBuf,
    },
    /// Run the brute-force verification oracles; one JSON line per report.
    Oracle,
    /// Run one experiment per (value, seed) with a hyperparameter override.
    Sweep {
        /// Config key to sweep, e.g. hp.beta
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config {path:?}: {e}")))?,
        None => String::new(),
    };
    parse_config_with_overrides(&text, &cli.overrides)
}

fn seeds_for(cli: &Cli, cfg: &ExperimentConfig) -> Vec<u64> {
    match cli.seed {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::GenerateData => {
            let cfg = load_config(cli)?;
            let env = cfg.load_maze()?;
            let seed = cli.seed.unwrap_or(cfg.dataset.seed);
            let max_len = match cfg.dataset.mode {
                gcgrid::dataset::DatasetMode::Stitch => {
                    gcgrid::dataset::stitch_cap(cfg.dataset.max_len, cfg.hp.k)
                }
                gcgrid::dataset::DatasetMode::Navigate => cfg.dataset.max_len,
            };
            let d = generate_dataset(
                &env,
                cfg.dataset.mode,
                cfg.dataset.n_traj,
                max_len,
                cfg.dataset.epsilon,
                seed,
            )?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&out)?;
            let path = out.join("dataset.jsonl");
            let mut buf = Vec::new();
            write_jsonl(&d, &mut buf)?;
            fs::write(&path, buf)?;
            println!("wrote {} trajectories ({} steps) to {}", d.meta.n_traj, d.num_steps(), path.display());
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
            for seed in seeds_for(cli, &cfg) {
                let dir = out.join(format!("{}-{}-seed{}", cfg.algo.name(), cfg.maze, seed));
                let summary = run_experiment(&cfg, seed, Some(&dir))?;
                println!(
                    "{} seed {} success {} ({})",
                    cfg.algo.name(),
                    seed,
                    fmt_f64(summary.eval.success_rate),
                    dir.display()
                );
            }
        }
        Command::Eval { run } => {
            let cfg = load_config(cli)?;
            let env = cfg.load_maze()?;
            let mut tasks = builtin_tasks(&env, cfg.eval.episodes_per_pair)?;
            if let Some(ms) = cfg.eval.max_steps {
                tasks.max_steps = ms;
                tasks.validate(&env)?;
            }
            let seed = cli.seed.unwrap_or(cfg.seeds[0]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003));
            let load = |name: &str| -> Result<gcgrid::policy::PolicyTable, Error> {
                let file = fs::File::open(run.join(name))
                    .map_err(|e| Error::Config(format!("{}: {e}", run.join(name).display())))?;
                let (p, hash) = read_policy_table(BufReader::new(file))?;
                if hash != gcgrid::dataset::maze_hash(&env) {
                    return Err(Error::Config(format!("{name} was trained on a different maze")));
                }
                Ok(p)
            };
            let result = if cfg.algo == Algo::Hiql {
                let p_high = load("policy_high.tbl")?;
                let p_low = load("policy_low.tbl")?;
                evaluate(&env, hier_selector(&p_high, &p_low, cfg.eval.mode), &tasks, seed, &mut rng)?
            } else {
                let p = load("policy_flat.tbl")?;
                evaluate(&env, flat_selector(&p, cfg.eval.mode), &tasks, seed, &mut rng)?
            };
            println!("{}", serde_json::to_string(&result)?);
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("eval.jsonl"), format!("{}\n", serde_json::to_string(&result)?))?;
            }
        }
        Command::Oracle => {
            let cfg = load_config(cli)?;
            let env = cfg.load_maze()?;
            let seed = cli.seed.unwrap_or(0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reports = Vec::new();
            reports.push(oracle::optimal_value_report(&env, cfg.hp.gamma)?);
            // posterior certificate on a handful of random instances
            for i in 0..5 {
                let n = 8;
                let mut prior: Vec<f64> =
                    (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng) + 0.05).collect();
                let s: f64 = prior.iter().sum();
                prior.iter_mut().for_each(|p| *p /= s);
                let scores: Vec<f64> =
                    (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng) * 4.0 - 2.0).collect();
                let eps = [0.01, 0.1, 1.0][i % 3];
                reports.push(oracle::verify_optimal_posterior(&prior, &scores, eps, 10_000, &mut rng)?);
            }
            for _ in 0..5 {
                let n = 16;
                let mut p: Vec<f64> =
                    (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng) + 0.01).collect();
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|x| *x /= s);
                let a: Vec<f64> =
                    (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng) * 6.0 - 3.0).collect();
                let f: Vec<f64> =
                    (0..n).map(|_| rand::Rng::gen::<f64>(&mut rng) * 10.0 - 5.0).collect();
                reports.push(oracle::verify_tilted_identity(&p, &a, cfg.hp.beta, &f)?);
            }
            let mut all_pass = true;
            let mut lines = String::new();
            for r in &reports {
                let line = serde_json::to_string(r)?;
                println!("{line}");
                lines.push_str(&line);
                lines.push('\n');
                all_pass &= r.pass;
            }
            if let Some(out) = &cli.out {
                fs::create_dir_all(out)?;
                fs::write(out.join("oracle.jsonl"), lines)?;
            }
            if !all_pass {
                return Err(Error::NumericalAbort("an oracle check failed".into()));
            }
        }
        Command::Sweep { param, values } => {
            let cfg = load_config(cli)?;
            let values: Vec<String> =
                values.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            let rows = run_sweep(&cfg, param, &values, Some(Path::new(&out)))?;
            println!("wrote {} sweep rows to {}", rows.len(), out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::NumericalAbort(msg)) => {
            eprintln!("numerical abort: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
