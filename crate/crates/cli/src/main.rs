use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedweigh::experiment::{
    ablation, git_blob_sha256, parse_config, run_fl, sweep, train_dearfsac, ExperimentConfig,
    Strategy, SweepAxis,
};
use fedweigh::nn::read_checkpoint;
use fedweigh::{Error, Result};

/// Federated aggregation experiments with learned client weights.
#[derive(Parser)]
#[command(name = "fedweigh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config.
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `repeats`.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run FL rounds with the configured strategy and report Acc_avg and T_Δ.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides `strategy`.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        qeen: Option<PathBuf>,
        #[arg(long)]
        sac: Option<PathBuf>,
    },
    /// Train the embedding network and the agent.
    Train {
        #[command(flatten)]
        common: Common,
        /// Overrides `episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train the full agent and the two ablated variants on the same seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Repeat `run` over values of M or d_N.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `m` or `d_n`.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `0.1,0.5,0.9`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Comma-separated strategies.
        #[arg(long, value_delimiter = ',', default_value = "fedavg,rule_based")]
        strategies: Vec<String>,
    },
    /// Print the sections of a checkpoint file.
    InspectCheckpoint { path: PathBuf },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.output.dir = o.clone();
    }
    if let Some(r) = common.repeats {
        cfg.repeats = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn inspect(path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    let sections = read_checkpoint(BufReader::new(File::open(path)?))?;
    println!("file    {}", path.display());
    println!("bytes   {}", bytes.len());
    println!("blob    {}", git_blob_sha256(&bytes));
    for (i, s) in sections.iter().enumerate() {
        let h = &s.header;
        println!(
            "[{i}] {} d={} seed={}",
            h.name.as_deref().unwrap_or("-"),
            h.d,
            h.seed
        );
        for l in &h.manifest {
            println!("    {} -> {} {:?}", l.in_dim, l.out_dim, l.activation);
        }
        if let Some(meta) = &h.meta {
            println!("    meta {meta}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            common,
            strategy,
            qeen,
            sac,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = strategy {
                cfg.strategy = s.parse()?;
            }
            if qeen.is_some() {
                cfg.checkpoints.qeen = qeen;
            }
            if sac.is_some() {
                cfg.checkpoints.sac = sac;
            }
            let s = run_fl(&cfg)?;
            println!("metrics {}", s.metrics.display());
            println!("Acc_avg {:.4}", s.acc_avg);
            println!("T_delta {}", s.t_delta_display());
        }
        Command::Train { common, episodes } => {
            let mut cfg = load(&common)?;
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            let o = train_dearfsac(&cfg)?;
            if let Some(q) = &o.qeen_checkpoint {
                println!("qeen {}", q.display());
            }
            println!("sac {}", o.sac_checkpoint.display());
            println!("reward_curve {}", o.reward_curve.display());
        }
        Command::Ablate { common, episodes } => {
            let mut cfg = load(&common)?;
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            for o in ablation(&cfg)? {
                let tail = &o.episodes[o.episodes.len().saturating_sub(10)..];
                let g = tail.iter().map(|e| e.ret).sum::<f64>() / tail.len().max(1) as f64;
                println!(
                    "{} state_dim={} last10_G={g:.4} {}",
                    o.variant.as_str(),
                    o.state_dim,
                    o.reward_curve.display()
                );
            }
        }
        Command::Sweep {
            common,
            axis,
            values,
            strategies,
        } => {
            let cfg = load(&common)?;
            let strategies = strategies
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Strategy>>>()?;
            let (path, rows) = sweep(&cfg, axis, &values, &strategies)?;
            for r in rows {
                println!(
                    "{}={} {} Acc_avg {:.4} T_delta {}",
                    axis.as_str(),
                    r.value,
                    r.strategy.as_str(),
                    r.summary.acc_avg,
                    r.summary.t_delta_display()
                );
            }
            println!("summary {}", path.display());
        }
        Command::InspectCheckpoint { path } => inspect(&path)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({:?}): {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
