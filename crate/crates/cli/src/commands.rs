use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use signalbench::config::{is_plain_relative, RunConfig};
use signalbench::harness::{
    compare_reports, format_table, read_aggregate, replication_seed, resolve_fixed_plan, run_experiment, run_transfer,
    write_aggregate, write_bands, write_comparison, write_loss, write_raw, AggregateRow, AnyController,
    ExperimentConfig, ExperimentReport, ReportError, TransferConfig, DEFAULT_WINDOWS,
};
use signalbench::scenarios::{library, FailureModel};
use signalbench::Agent;

use crate::Failure;

const OUT_ENV: &str = "SIGNALBENCH_OUT";
const DEFAULT_ROOT: &str = "signalbench-out";

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

fn output_dir(cfg: &RunConfig, command: &str) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| {
        output_root().join(format!("{command}-{}-{}-seed{}", cfg.scenario.name(), cfg.controller, cfg.seed))
    })
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(validation)?;
    let probe = dir.join(".write-test");
    std::fs::write(&probe, b"")
        .with_context(|| format!("output directory {} is not writable", dir.display()))
        .map_err(validation)?;
    let _ = std::fs::remove_file(probe);
    Ok(())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).with_context(|| format!("cannot write {}", path.display())).map_err(runtime)
}

fn write_report(dir: &Path, prefix: &str, report: &ExperimentReport, losses: bool) -> Result<(), Failure> {
    let io = |e: ReportError| runtime(e);
    write_raw(report, create(dir, &format!("{prefix}raw.csv"))?).map_err(io)?;
    write_aggregate(report, &DEFAULT_WINDOWS, create(dir, &format!("{prefix}aggregate.csv"))?).map_err(io)?;
    write_bands(report, create(dir, &format!("{prefix}bands.csv"))?).map_err(io)?;
    if losses {
        write_loss(report, create(dir, &format!("{prefix}loss.csv"))?).map_err(io)?;
    }
    Ok(())
}

fn aggregate_of(report: &ExperimentReport) -> Result<Vec<AggregateRow>, Failure> {
    let mut buf = Vec::new();
    write_aggregate(report, &DEFAULT_WINDOWS, &mut buf).map_err(runtime)?;
    Ok(read_aggregate(buf.as_slice()).map_err(runtime)?.1)
}

fn save_config(dir: &Path, cfg: &RunConfig) -> Result<(), Failure> {
    let text = cfg.to_toml().map_err(runtime)?;
    std::fs::write(dir.join("config.toml"), text).context("cannot write config.toml").map_err(runtime)
}

/// Episodes that aborted, reported after all files are written.
fn check_failures(reports: &[&ExperimentReport]) -> Result<(), Failure> {
    let failures: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failures().map(|(rep, f)| format!("replication {rep}, episode {}: {}", f.episode, f.message)))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow!("{} episode(s) aborted:\n  {}", failures.len(), failures.join("\n  "))))
    }
}

fn fixed_greens(cfg: &RunConfig, dir: &Path) -> Result<[f64; 4], Failure> {
    if let Some(g) = cfg.fixed_greens {
        return Ok(g);
    }
    let scenario = cfg.plan_scenario().map_err(validation)?;
    let plan = resolve_fixed_plan(&cfg.harness, &scenario, &cfg.plan_search, Some(&dir.join("fixed_plan.txt")))
        .map_err(runtime)?;
    Ok(plan.greens)
}

fn needs_plan(cfg: &RunConfig) -> bool {
    use signalbench::harness::ControllerKind::*;
    matches!(cfg.controller, Fixed | RlTimeExtension)
}

fn checkpoint_name(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint_out.clone().unwrap_or_else(|| PathBuf::from("agent.ckpt"))
}

fn load_agent(cfg: &RunConfig, path: &Path, seed: u64, greens: [f64; 4]) -> Result<Agent, Failure> {
    let mut agent = Agent::load_checkpoint(path, seed)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))
        .map_err(validation)?;
    let expected = cfg.agent_config().action_space;
    if agent.config().action_space != expected {
        return Err(validation(anyhow!(
            "checkpoint {} holds a {:?} agent, but the controller is {}",
            path.display(),
            agent.config().action_space,
            cfg.controller
        )));
    }
    agent.set_initial_greens(greens);
    Ok(agent)
}

pub fn dump(cfg: &RunConfig) -> Result<(), Failure> {
    print!("{}", cfg.to_toml().map_err(validation)?);
    Ok(())
}

pub fn run(cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate().map_err(validation)?;
    let scenario = cfg.resolve_scenario().map_err(validation)?;
    let dir = output_dir(&cfg, "run");
    prepare_dir(&dir)?;
    let greens = if needs_plan(&cfg) { fixed_greens(&cfg, &dir)? } else { [20.0; 4] };
    let agent_cfg = cfg.agent_config();
    let controllers = (0..cfg.replications)
        .map(|r| {
            let seed = replication_seed(cfg.seed, r);
            match (&cfg.checkpoint_in, cfg.controller.is_learning()) {
                (Some(path), true) => load_agent(&cfg, path, seed, greens).map(|a| AnyController::Rl(Box::new(a))),
                _ => AnyController::build(cfg.controller, &cfg.harness, &agent_cfg, greens, seed).map_err(validation),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    save_config(&dir, &cfg)?;
    let exp = ExperimentConfig {
        harness: cfg.harness.clone(),
        scenario: scenario.clone(),
        episodes: cfg.episodes,
        master_seed: cfg.seed,
        parallel: cfg.parallel,
    };
    let (report, controllers) = run_experiment(&exp, controllers).map_err(runtime)?;
    write_report(&dir, "", &report, cfg.controller.is_learning())?;
    if let Some(agent) = controllers.first().and_then(|c| c.agent()) {
        agent.save_checkpoint(&dir.join(checkpoint_name(&cfg))).map_err(runtime)?;
    }
    println!("{}", format_table(&aggregate_of(&report)?));
    if let Some(failure) = &scenario.failure {
        print_failure_summary(&report, &failure.model);
    }
    println!("reports written to {}", dir.display());
    check_failures(&[&report])
}

fn print_failure_summary(report: &ExperimentReport, model: &FailureModel) {
    let fractions: Vec<f64> = report
        .replications
        .iter()
        .flatten()
        .filter_map(|o| o.as_ref().ok())
        .filter_map(|e| e.failures.as_ref().map(|f| f.failed_fraction()))
        .collect();
    let mean = fractions.iter().sum::<f64>() / fractions.len().max(1) as f64;
    match model {
        FailureModel::Markov { p_fail, p_recover } => println!(
            "sensor failures: mean failed fraction {:.3} (stationary {:.3})",
            mean,
            p_fail / (p_fail + p_recover)
        ),
        FailureModel::FixedWindow { .. } => println!("sensor failures: mean failed fraction {mean:.3}"),
    }
}

pub fn transfer(cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate().map_err(validation)?;
    if !cfg.controller.is_learning() {
        return Err(validation(anyhow!("transfer needs an rl_* controller, got {}", cfg.controller)));
    }
    let target = cfg.resolve_scenario().map_err(validation)?;
    let pretrain = cfg.resolve_pretrain_scenario().map_err(validation)?;
    let dir = output_dir(&cfg, "transfer");
    prepare_dir(&dir)?;
    let greens = if needs_plan(&cfg) { fixed_greens(&cfg, &dir)? } else { [20.0; 4] };
    if let Some(path) = &cfg.checkpoint_in {
        load_agent(&cfg, path, 0, greens)?;
    }
    save_config(&dir, &cfg)?;
    let tc = TransferConfig {
        harness: cfg.harness.clone(),
        agent: cfg.agent_config(),
        pretrain,
        pretrain_episodes: cfg.transfer.pretrain_episodes,
        target,
        target_episodes: cfg.episodes,
        replications: cfg.replications,
        master_seed: cfg.seed,
        parallel: cfg.parallel,
        fixed_greens: greens,
        checkpoint_in: cfg.checkpoint_in.clone(),
    };
    let mut result = run_transfer(&tc).map_err(runtime)?;
    if let Some(pre) = &result.pretrain {
        write_report(&dir, "pretrain_", pre, true)?;
    }
    let base_name = result.transfer.meta.controller.clone();
    result.transfer.meta.controller = format!("{base_name}_transfer");
    result.scratch.meta.controller = format!("{base_name}_scratch");
    write_report(&dir, "transfer_", &result.transfer, true)?;
    write_report(&dir, "scratch_", &result.scratch, true)?;
    if let Some(agent) = result.agents.first() {
        agent.save_checkpoint(&dir.join(checkpoint_name(&cfg))).map_err(runtime)?;
    }
    let mut rows = aggregate_of(&result.transfer)?;
    rows.extend(aggregate_of(&result.scratch)?);
    println!("{}", format_table(&rows));
    println!("reports written to {}", dir.display());
    let mut all = vec![&result.transfer, &result.scratch];
    if let Some(pre) = &result.pretrain {
        all.push(pre);
    }
    check_failures(&all)
}

pub fn compare(dirs: &[PathBuf], out: Option<PathBuf>) -> Result<(), Failure> {
    let mut reports = Vec::new();
    for dir in dirs {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_context(|| format!("cannot read report directory {}", dir.display()))
            .map_err(validation)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("aggregate.csv")))
            .filter(|p| !p.file_name().is_some_and(|n| n == "pretrain_aggregate.csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(validation(anyhow!("{} contains no aggregate report", dir.display())));
        }
        for path in files {
            let file =
                File::open(&path).with_context(|| format!("cannot open {}", path.display())).map_err(validation)?;
            let report =
                read_aggregate(file).with_context(|| format!("cannot read {}", path.display())).map_err(validation)?;
            reports.push(report);
        }
    }
    let rows = compare_reports(&reports).map_err(validation)?;
    let out = out.unwrap_or_else(|| output_root().join("compare"));
    prepare_dir(&out)?;
    write_comparison(&rows, create(&out, "comparison.csv")?).map_err(runtime)?;
    let table = format_table(&rows);
    std::fs::write(out.join("comparison.txt"), &table).context("cannot write comparison.txt").map_err(runtime)?;
    print!("{table}");
    Ok(())
}

pub fn list_scenarios() -> Result<(), Failure> {
    let lib = library();
    let width = lib.iter().map(|s| s.name.len()).max().unwrap_or(0);
    for s in lib {
        println!("{:<width$}  {}", s.name, s.description);
    }
    Ok(())
}

pub fn export_scenarios(out: Option<PathBuf>) -> Result<(), Failure> {
    let dir = out.unwrap_or_else(|| output_root().join("scenarios"));
    prepare_dir(&dir)?;
    for s in library() {
        let name = PathBuf::from(format!("{}.toml", s.name));
        debug_assert!(is_plain_relative(&name));
        let text = s.to_toml().map_err(runtime)?;
        std::fs::write(dir.join(&name), text)
            .with_context(|| format!("cannot write {}", name.display()))
            .map_err(runtime)?;
    }
    println!("scenarios written to {}", dir.display());
    Ok(())
}

pub fn plan(cfg: RunConfig) -> Result<(), Failure> {
    cfg.validate().map_err(validation)?;
    let scenario = cfg.plan_scenario().map_err(validation)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| output_root().join("plans"));
    prepare_dir(&dir)?;
    let path = dir.join(format!("base_{}.plan", scenario.episode_length));
    let plan = resolve_fixed_plan(&cfg.harness, &scenario, &cfg.plan_search, Some(&path)).map_err(runtime)?;
    if !path.exists() {
        plan.save(&path).map_err(runtime)?;
    }
    println!(
        "greens {:?}  cycle {} s  objective {:.3} s/km",
        plan.greens,
        plan.cycle_length(&cfg.harness.phases),
        plan.objective
    );
    println!("plan written to {}", path.display());
    Ok(())
}
