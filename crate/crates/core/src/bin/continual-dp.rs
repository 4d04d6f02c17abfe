//! `continual-dp run|sweep|game|reduce`
//!
//! Exit codes: 0 ok, 1 usage error, 2 runtime error, 3 coupling failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use continual_dp::experiment::{
    cmd_game, cmd_reduce, cmd_run, cmd_sweep, GameCommand, ReduceCommand, RunConfig, Settings,
};
use continual_dp::Error;

#[derive(Parser)]
#[command(
    name = "continual-dp",
    version,
    about = "Private continual release of MaxSum and SumSelect"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism and write per-timestep rows `trial,t,truth,answer,err`.
    Run(Flags),
    /// Sweep a grid (`--T 2^8..2^14`, `--d 2,8`, `--rho 0.5,1`) and write error quantiles.
    Sweep(Flags),
    /// Coupling checks against the simulators, or a distinguishing attack.
    Game {
        #[arg(value_enum)]
        kind: GameKind,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run a reduction stream built from a dataset file through a mechanism.
    Reduce {
        #[arg(value_enum)]
        kind: ReduceKind,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GameKind {
    CoupleTree,
    CoupleRecompute,
    Attack,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceKind {
    Marginals,
    Kindsel,
}

#[derive(Args, Default)]
struct Flags {
    /// tree, recompute or trivial
    #[arg(long)]
    mechanism: Option<String>,
    /// maxsum or select
    #[arg(long)]
    variant: Option<String>,
    #[arg(long = "T")]
    horizon: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Recompute period, or `auto`
    #[arg(long)]
    period: Option<String>,
    /// calibrated, none, gaussian:<sigma> or laplace:<scale>
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// uniform[:p], reduction or file:<path>
    #[arg(long)]
    stream: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Dataset file for `reduce`
    #[arg(long)]
    data: Option<String>,
    /// Block count for the selection reduction
    #[arg(long)]
    k: Option<String>,
    /// `key = value` config file; flags win on conflict
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Flags {
    fn settings(&self) -> continual_dp::Result<Settings> {
        let base = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::new(),
        };
        let mut flags = Settings::new();
        let pairs = [
            ("mechanism", &self.mechanism),
            ("variant", &self.variant),
            ("T", &self.horizon),
            ("d", &self.d),
            ("rho", &self.rho),
            ("eps", &self.eps),
            ("delta", &self.delta),
            ("period", &self.period),
            ("noise", &self.noise),
            ("trials", &self.trials),
            ("seed", &self.seed),
            ("stream", &self.stream),
            ("out", &self.out),
            ("data", &self.data),
            ("k", &self.k),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v.clone())?;
            }
        }
        Ok(base.overlay(&flags))
    }
}

fn usage(e: Error) -> ExitCode {
    eprintln!("continual-dp: {e}");
    ExitCode::from(1)
}

fn runtime(e: Error) -> ExitCode {
    eprintln!("continual-dp: {e}");
    ExitCode::from(if matches!(e, Error::Config(_)) { 1 } else { 2 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let flags = match &cli.command {
        Command::Run(f) | Command::Sweep(f) => f,
        Command::Game { flags, .. } | Command::Reduce { flags, .. } => flags,
    };
    let settings = match flags.settings() {
        Ok(s) => s,
        Err(e) => return usage(e),
    };
    if let Command::Sweep(_) = cli.command {
        return match cmd_sweep(&settings) {
            Ok(report) => {
                eprintln!("{report}");
                ExitCode::SUCCESS
            }
            Err(e) => runtime(e),
        };
    }
    let config = match RunConfig::from_settings(&settings) {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    match cli.command {
        Command::Run(_) => match cmd_run(&config) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => runtime(e),
        },
        Command::Game { kind, .. } => {
            let cmd = match kind {
                GameKind::CoupleTree => GameCommand::CoupleTree,
                GameKind::CoupleRecompute => GameCommand::CoupleRecompute,
                GameKind::Attack => GameCommand::Attack,
            };
            match cmd_game(cmd, &config) {
                Ok(report) => {
                    println!("{report}");
                    if report.mismatches() > 0 {
                        ExitCode::from(3)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => runtime(e),
            }
        }
        Command::Reduce { kind, .. } => {
            let cmd = match kind {
                ReduceKind::Marginals => ReduceCommand::Marginals,
                ReduceKind::Kindsel => ReduceCommand::Kindsel,
            };
            match cmd_reduce(cmd, &config) {
                Ok(report) => {
                    eprintln!("{report}");
                    ExitCode::SUCCESS
                }
                Err(e) => runtime(e),
            }
        }
        Command::Sweep(_) => unreachable!("handled above"),
    }
}
