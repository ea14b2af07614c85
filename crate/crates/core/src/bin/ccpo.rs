use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ccpo::harness::{self, RunConfig, RunPaths};
use ccpo::io::write_json;
use ccpo::{Error, Result};

#[derive(Parser)]
#[command(name = "ccpo", version, about = "Chance-constrained policy optimization for a fed-batch bioreactor")]
struct Cli {
    /// JSON run config; without it the chosen preset is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Ode)]
    preset: Preset,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reduced budget: S = 200, K = 50, M = 20.
    #[arg(long, global = true)]
    desk: bool,
    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Continue the run stored in this directory.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
    /// Worker threads for rollouts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Ode,
    OdeLowPenalty,
    Surrogate,
}

#[derive(Subcommand)]
enum Command {
    /// Supervised hot start from the teacher profile.
    Pretrain,
    /// Policy gradient at the original constraints.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Full pipeline including the backoff search.
    Tune,
    /// Monte-Carlo evaluation of a saved policy.
    Eval {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        rollouts: Option<usize>,
    },
    /// Log open-loop episodes on the mechanistic plant.
    Gendata,
    /// Fit the GP plant on the logged episodes.
    FitSurrogate,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let vars = std::env::vars();
    let resumed = cli.resume.as_ref().map(|d| d.join("config.json"));
    let mut cfg = match (&cli.config, &resumed) {
        (Some(path), _) => RunConfig::load(path, vars)?,
        (None, Some(path)) if path.exists() => RunConfig::load(path, vars)?,
        _ => {
            let preset = match cli.preset {
                Preset::Ode => RunConfig::ode(),
                Preset::OdeLowPenalty => RunConfig::ode_low_penalty(),
                Preset::Surrogate => RunConfig::surrogate(),
            };
            let text = serde_json::to_string(&preset).expect("preset serializes");
            RunConfig::from_json(&text, vars, "preset")?
        }
    };
    if cli.desk {
        cfg = cfg.desk();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = cli.resume.as_ref().or(cli.out.as_ref()) {
        cfg.out_dir = dir.clone();
    }
    if let Command::Train { epochs: Some(k) } = cli.command {
        cfg.train.max_epochs = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(cli)?;
    let paths = RunPaths::new(&cfg.out_dir);
    if cli.resume.is_none() {
        write_json(paths.file("config.json"), &cfg)?;
    }
    match &cli.command {
        Command::Pretrain => {
            harness::cmd_pretrain(&cfg)?;
            println!("wrote {}", paths.pretrained().display());
        }
        Command::Train { .. } => {
            let (_, report) = harness::cmd_train(&cfg)?;
            let last = report.epochs.last().expect("at least one epoch");
            println!("{} epochs, final mean J_hat {:.6}", report.epochs_run(), last.mean_penalized);
        }
        Command::Tune => {
            let out = harness::cmd_tune(&cfg, cli.resume.is_some())?;
            let m = &out.manifest;
            let (n, t) = (m.nominal.as_ref().unwrap(), m.tuned.as_ref().unwrap());
            println!("target F_lb    {:.3}", cfg.tuner.target());
            println!("nominal F_S    {:.3}  mean c_q(T) {:.4}", n.f_s, m.nominal_mean_product.unwrap());
            println!("tuned   F_S    {:.3}  mean c_q(T) {:.4}  gamma {:?}", t.f_s, m.tuned_mean_product.unwrap(), m.tuned_gamma.as_ref().unwrap());
        }
        Command::Eval { policy, rollouts } => {
            let out = harness::cmd_eval(&cfg, policy, *rollouts)?;
            println!(
                "S = {}  F_S = {:.4}  F_lb = {:.4}  mean c_q(T) = {:.4}",
                out.summary.samples, out.summary.f_s, out.summary.f_lb, out.mean_product
            );
        }
        Command::Gendata => {
            let data = harness::cmd_gendata(&cfg)?;
            println!("{} transitions -> {}", data.transitions.len(), paths.dataset().display());
        }
        Command::FitSurrogate => {
            harness::cmd_fit_surrogate(&cfg)?;
            println!("wrote {}", paths.surrogate().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
