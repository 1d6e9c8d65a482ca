mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use signalbench::config::{RunConfig, ScenarioRef};
use signalbench::harness::ControllerKind;
use signalbench::scenarios::Injection;

/// Traffic-signal control experiments on a simulated four-leg intersection.
#[derive(Parser, Debug)]
#[command(name = "signalbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train or evaluate one controller on one scenario.
    Run(RunArgs),
    /// Pretrain an agent on one scenario and keep training it on another.
    Transfer(TransferArgs),
    /// Merge the aggregate tables of finished runs.
    Compare(CompareArgs),
    /// Inspect the scenario library.
    Scenarios {
        #[command(subcommand)]
        command: ScenariosCommand,
    },
    /// Optimize the fixed-time plan on the base scenario.
    Plan(RunArgs),
}

#[derive(Subcommand, Debug)]
enum ScenariosCommand {
    /// Print the built-in scenarios.
    List,
    /// Write every built-in scenario as an editable config document.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Config document; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    /// fixed, actuated, rl_phase_selection or rl_time_extension.
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Post-warm-up episode length in seconds.
    #[arg(long)]
    episode_length: Option<f64>,
    /// Warm-up length in seconds.
    #[arg(long)]
    warmup: Option<f64>,
    /// before_max or after_max.
    #[arg(long, value_parser = parse_injection)]
    failure_injection: Option<Injection>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    /// Four comma-separated greens, skipping the plan search.
    #[arg(long, value_parser = parse_greens)]
    fixed_greens: Option<[f64; 4]>,
    /// Output directory; defaults to a subdirectory of $SIGNALBENCH_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    /// File name for the final agent checkpoint, inside the output directory.
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Run replications one after another.
    #[arg(long)]
    sequential: bool,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Args, Debug)]
struct TransferArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    pretrain_scenario: Option<String>,
    #[arg(long)]
    pretrain_episodes: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Report directories.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_injection(s: &str) -> Result<Injection, String> {
    match s {
        "before_max" => Ok(Injection::BeforeMax),
        "after_max" => Ok(Injection::AfterMax),
        _ => Err(format!("expected before_max or after_max, got `{s}`")),
    }
}

fn parse_greens(s: &str) -> Result<[f64; 4], String> {
    let values: Vec<f64> =
        s.split(',').map(|v| v.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    <[f64; 4]>::try_from(values).map_err(|_| "expected four comma-separated values".to_string())
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &self.scenario {
            cfg.scenario = ScenarioRef::Named(s.clone());
        }
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field.clone() { cfg.$field = v; } )* };
        }
        set!(controller, episodes, replications, seed);
        macro_rules! set_opt {
            ($($field:ident),*) => { $( if self.$field.is_some() { cfg.$field = self.$field.clone(); } )* };
        }
        set_opt!(episode_length, warmup, failure_injection, fixed_greens, checkpoint_in, checkpoint_out);
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        if self.learning_rate.is_some() {
            cfg.agent.learning_rate = self.learning_rate;
        }
        if let Some(d) = self.dropout {
            cfg.agent.dropout = d;
        }
        if self.sequential {
            cfg.parallel = false;
        }
        Ok(cfg)
    }
}

/// Failure class of a command, mapped to the process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad input: arguments, config, unknown names, unwritable output.
    Validation(anyhow::Error),
    /// The experiment itself went wrong.
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => args.config().map_err(Failure::Validation).and_then(|cfg| {
            if args.dump_config {
                commands::dump(&cfg)
            } else {
                commands::run(cfg)
            }
        }),
        Command::Transfer(args) => args.run.config().map_err(Failure::Validation).and_then(|mut cfg| {
            if let Some(s) = &args.pretrain_scenario {
                cfg.transfer.pretrain_scenario = ScenarioRef::Named(s.clone());
            }
            if let Some(n) = args.pretrain_episodes {
                cfg.transfer.pretrain_episodes = n;
            }
            if args.run.dump_config {
                commands::dump(&cfg)
            } else {
                commands::transfer(cfg)
            }
        }),
        Command::Compare(args) => commands::compare(&args.dirs, args.out),
        Command::Scenarios { command: ScenariosCommand::List } => commands::list_scenarios(),
        Command::Scenarios { command: ScenariosCommand::Export { out } } => commands::export_scenarios(out),
        Command::Plan(args) => args.config().map_err(Failure::Validation).and_then(commands::plan),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Validation(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
