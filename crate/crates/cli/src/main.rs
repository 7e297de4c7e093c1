//! `rqn`: train, evaluate and inspect value-factorization runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rqn_core::harness::{self, io};
use rqn_core::mixers::theorem;
use rqn_core::training::{self, Learner};
use rqn_core::{Error, MixerKind, Overrides, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "rqn", version, about = "Cooperative multi-agent value factorization runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its artifacts.
    Train(TrainArgs),
    /// Greedy evaluation of a trained run.
    Evaluate {
        run_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Joint-value table of a trained matrix-game run.
    Reconstruct { run_dir: PathBuf },
    /// Check "factorization condition implies IGM" on random tabular instances.
    VerifyTheorem {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to one shape; default sweeps N=2 with |A| in {2,3,4} and N=3 with |A| in {2,3,4}.
        #[arg(long, requires = "actions")]
        agents: Option<usize>,
        #[arg(long, requires = "agents")]
        actions: Option<usize>,
    },
    /// Mean and 95% interval of evaluation curves across runs.
    Aggregate {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value = "aggregate.csv")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// JSON run config; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["table1", "table2"], default_value = "table1")]
    preset: String,
    #[arg(long, value_parser = ["vdn", "qmix", "qtran", "rqn"])]
    algo: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    buffer: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long)]
    eps_anneal: Option<u64>,
    /// Constant exploration rate instead of the annealed schedule.
    #[arg(long)]
    epsilon_fixed: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    capture_penalty: Option<f64>,
    #[arg(long)]
    n_predators: Option<usize>,
    /// Run directory (default: runs/<algo>_<env>_s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Json(_) => 2,
                Error::NonFinite(_) => 3,
                _ => 1,
            })
        }
    }
}

fn run(cmd: Command) -> rqn_core::Result<ExitCode> {
    match cmd {
        Command::Train(args) => cmd_train(args),
        Command::Evaluate { run_dir, episodes, seed } => {
            let (cfg, learner) = load_run(&run_dir)?;
            let mean = harness::evaluate(&learner, &cfg.env, episodes, seed)?;
            println!("{mean}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Reconstruct { run_dir } => {
            let (cfg, learner) = load_run(&run_dir)?;
            let table = harness::reconstruct_qtot(&learner, &cfg.env)?;
            print_table(&table);
            io::write_reconstruction(&run_dir.join(io::RECONSTRUCTION_FILE), &table)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyTheorem {
            instances,
            seed,
            agents,
            actions,
        } => cmd_verify(instances, seed, agents.zip(actions)),
        Command::Aggregate { run_dirs, out } => cmd_aggregate(&run_dirs, &out),
    }
}

fn cmd_train(args: TrainArgs) -> rqn_core::Result<ExitCode> {
    let file = match &args.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let flags = Overrides {
        algo: args.algo.as_deref().map(str::parse::<MixerKind>).transpose()?,
        env: args.env,
        episodes: args.episodes,
        seed: args.seed,
        buffer: args.buffer,
        batch: args.batch,
        eps_min: args.eps_min,
        eps_anneal: args.eps_anneal,
        epsilon_fixed: args.epsilon_fixed,
        capture_penalty: args.capture_penalty,
        n_predators: args.n_predators,
        out: args.out.map(|p| p.display().to_string()),
    };
    let preset: Preset = args.preset.parse()?;
    let mut cfg = RunConfig::resolve(preset, file.as_deref(), &flags)?;
    if cfg.out.is_none() {
        cfg.out = Some(format!("runs/{}_{}_s{}", cfg.algo, cfg.env.name(), cfg.seed));
    }
    let out = PathBuf::from(cfg.out.clone().unwrap_or_default());
    fs::create_dir_all(&out)?;
    io::write_manifest(&out.join(io::MANIFEST_FILE), &cfg)?;

    let start = Instant::now();
    let quiet = args.quiet;
    let outcome = training::train(&cfg, &mut |r| {
        if !quiet {
            eprintln!(
                "episode {:>7}  eval_reward {:>9.4}  [{:.0}s]",
                r.episode,
                r.eval_reward,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    io::write_metrics(&out.join(io::METRICS_FILE), &outcome.evals)?;
    if cfg.algo == MixerKind::Rqn {
        io::write_phi(&out.join(io::PHI_FILE), &outcome.phi_trace)?;
    }
    io::write_params(&out.join(io::PARAMS_FILE), &outcome.learner.params)?;
    fs::write(out.join("stats.json"), serde_json::to_string_pretty(&outcome.stats)? + "\n")?;
    if cfg.env == rqn_core::envs::EnvConfig::Matrix {
        let table = harness::reconstruct_qtot(&outcome.learner, &cfg.env)?;
        io::write_reconstruction(&out.join(io::RECONSTRUCTION_FILE), &table)?;
        if !quiet {
            print_table(&table);
        }
    }
    eprintln!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_run(dir: &Path) -> rqn_core::Result<(RunConfig, Learner)> {
    let cfg = io::read_manifest(&dir.join(io::MANIFEST_FILE))?;
    let mut learner = training::new_learner(&cfg)?;
    io::read_params_into(&dir.join(io::PARAMS_FILE), &mut learner.params)?;
    Ok((cfg, learner))
}

fn print_table(table: &harness::ReconstructionTable) {
    const NAMES: [&str; 3] = ["A", "B", "C"];
    println!("{:>4} {:>9} {:>9} {:>9}", "", NAMES[0], NAMES[1], NAMES[2]);
    for (i, row) in table.0.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>9.2}")).collect();
        println!("{:>4} {}", NAMES.get(i).unwrap_or(&"?"), cells.join(" "));
    }
}

fn cmd_verify(instances: usize, seed: u64, shape: Option<(usize, usize)>) -> rqn_core::Result<ExitCode> {
    let shapes = match shape {
        Some((n, a)) => {
            if n == 0 || a == 0 || n > 3 || a > 4 {
                return Err(Error::Config("tabular instances need 1 <= N <= 3 and 1 <= |A| <= 4".into()));
            }
            vec![(n, a)]
        }
        None => vec![(2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (3, 4)],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for (n, a) in shapes {
        let start = Instant::now();
        let r = theorem::implication_suite(n, a, instances, &mut rng);
        println!(
            "N={n} |A|={a}: {} instances, {} satisfy the condition, {} IGM failures  [{:.2}s]",
            r.instances,
            r.verified,
            r.failures,
            start.elapsed().as_secs_f64()
        );
        failures += r.failures;
    }
    println!("{}", if failures == 0 { "PASS" } else { "FAIL" });
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_aggregate(dirs: &[PathBuf], out: &Path) -> rqn_core::Result<ExitCode> {
    if dirs.len() < 2 {
        return Err(Error::Config("aggregate needs at least 2 run directories".into()));
    }
    let mut episodes: Option<Vec<u64>> = None;
    let mut series = Vec::new();
    for d in dirs {
        let recs = io::read_metrics(&d.join(io::METRICS_FILE))?;
        let eps: Vec<u64> = recs.iter().map(|r| r.episode).collect();
        match &episodes {
            Some(e) if *e != eps => {
                return Err(Error::Config(format!("{}: evaluation grid differs", d.display())));
            }
            Some(_) => {}
            None => episodes = Some(eps),
        }
        series.push(recs.iter().map(|r| r.eval_reward).collect());
    }
    let agg = harness::aggregate_seeds(&series)?;
    io::write_aggregate(out, episodes.as_deref().unwrap_or(&[]), &agg)?;
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}
