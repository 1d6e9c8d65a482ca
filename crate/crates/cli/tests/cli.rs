use std::path::Path;
use std::process::{Command, Output};

const SHORT: [&str; 10] =
    ["--episode-length", "600", "--warmup", "60", "--episodes", "1", "--replications", "1", "--seed", "7"];

fn bin(out_root: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_signalbench"));
    c.env("SIGNALBENCH_OUT", out_root);
    c
}

fn run(out_root: &Path, args: &[&str]) -> Output {
    bin(out_root).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "status {:?}\nstdout:\n{}\nstderr:\n{}", o.status, text(&o.stdout), text(&o.stderr));
}

fn fixed_run(root: &Path, out: &Path) -> Output {
    let mut args = vec!["run", "--scenario", "base", "--controller", "fixed", "--fixed-greens", "20,25,20,25"];
    args.extend(SHORT);
    args.extend(["--out", out.to_str().unwrap()]);
    run(root, &args)
}

#[test]
fn fixed_run_is_reproducible() {
    let root = tempfile::tempdir().unwrap();
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let oa = fixed_run(root.path(), &a);
    ok(&oa);
    ok(&fixed_run(root.path(), &b));
    for f in ["raw.csv", "aggregate.csv", "bands.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(!a.join("loss.csv").exists());
    let cfg = std::fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(cfg.contains("seed = 7") && cfg.contains("fixed_greens = [20.0, 25.0, 20.0, 25.0]"), "{cfg}");
    let stdout = text(&oa.stdout);
    assert!(stdout.contains("travel time") && stdout.contains("fixed"), "{stdout}");
    let raw = std::fs::read_to_string(a.join("raw.csv")).unwrap();
    assert!(raw.starts_with("# signalbench-raw v1\n"), "{raw}");
}

#[test]
fn unknown_scenario_is_a_validation_error() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["run", "--scenario", "rush_hour", "--controller", "actuated"]);
    assert_eq!(o.status.code(), Some(1));
    let err = text(&o.stderr);
    assert!(err.contains("rush_hour") && err.contains("base") && err.contains("failure_c"), "{err}");
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn argument_errors_and_help() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(run(root.path(), &["run", "--controller", "smart"]).status.code(), Some(1));
    assert_eq!(run(root.path(), &["run", "--fixed-greens", "10,20"]).status.code(), Some(1));
    assert_eq!(run(root.path(), &["run", "--episodes", "0", "--controller", "actuated"]).status.code(), Some(1));
    assert_eq!(run(root.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn dumped_config_reloads_unchanged() {
    let root = tempfile::tempdir().unwrap();
    let first = run(
        root.path(),
        &["run", "--scenario", "incident_b", "--controller", "rl_time_extension", "--dropout", "0", "--dump-config"],
    );
    ok(&first);
    let path = root.path().join("cfg.toml");
    std::fs::write(&path, &first.stdout).unwrap();
    let second = run(root.path(), &["run", "--config", path.to_str().unwrap(), "--dump-config"]);
    ok(&second);
    assert_eq!(first.stdout, second.stdout);
    let cfg = text(&first.stdout);
    assert!(cfg.contains("controller = \"rl_time_extension\"") && cfg.contains("dropout = 0.0"), "{cfg}");

    std::fs::write(&path, "episodes = 3\nepisodez = 4\n").unwrap();
    let bad = run(root.path(), &["run", "--config", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(text(&bad.stderr).contains("episodez"));
}

#[test]
fn compare_merges_matching_reports_and_refuses_others() {
    let root = tempfile::tempdir().unwrap();
    let fixed = root.path().join("fixed");
    ok(&fixed_run(root.path(), &fixed));
    let actuated = root.path().join("actuated");
    let mut args = vec!["run", "--scenario", "base", "--controller", "actuated", "--out", actuated.to_str().unwrap()];
    args.extend(SHORT);
    ok(&run(root.path(), &args));

    let merged = root.path().join("merged");
    let o = run(
        root.path(),
        &["compare", fixed.to_str().unwrap(), actuated.to_str().unwrap(), "--out", merged.to_str().unwrap()],
    );
    ok(&o);
    let table = std::fs::read_to_string(merged.join("comparison.txt")).unwrap();
    assert!(table.contains("fixed") && table.contains("actuated"), "{table}");
    assert!(std::fs::read_to_string(merged.join("comparison.csv")).unwrap().starts_with("# signalbench-comparison v1"));

    let longer = root.path().join("longer");
    let mut args = vec!["run", "--controller", "actuated", "--out", longer.to_str().unwrap()];
    args.extend(SHORT);
    let at = args.iter().position(|a| *a == "600").unwrap();
    args[at] = "900";
    ok(&run(root.path(), &args));
    let o = run(root.path(), &["compare", fixed.to_str().unwrap(), longer.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).contains("episode_length"), "{}", text(&o.stderr));
}

#[test]
fn transfer_without_pretraining_matches_scratch() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("t");
    let mut args = vec![
        "transfer",
        "--scenario",
        "after_event",
        "--controller",
        "rl_phase_selection",
        "--pretrain-episodes",
        "0",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SHORT);
    ok(&run(root.path(), &args));
    let strip = |f: &str| -> Vec<String> {
        std::fs::read_to_string(out.join(f)).unwrap().lines().skip(2).map(str::to_string).collect()
    };
    assert_eq!(strip("transfer_raw.csv"), strip("scratch_raw.csv"));
    assert!(!out.join("pretrain_raw.csv").exists());
    assert!(out.join("agent.ckpt").exists());

    let o = run(root.path(), &["transfer", "--controller", "actuated", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn checkpoint_feeds_a_later_run() {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    let mut args = vec!["run", "--controller", "rl_phase_selection", "--checkpoint-out", "trained.ckpt"];
    args.extend(["--out", first.to_str().unwrap()]);
    args.extend(SHORT);
    ok(&run(root.path(), &args));
    let ckpt = first.join("trained.ckpt");
    assert!(ckpt.exists());
    let second = root.path().join("second");
    let mut args = vec!["run", "--controller", "rl_phase_selection", "--checkpoint-in", ckpt.to_str().unwrap()];
    args.extend(["--out", second.to_str().unwrap()]);
    args.extend(SHORT);
    ok(&run(root.path(), &args));
    assert!(second.join("loss.csv").exists());

    let mut args = vec!["run", "--controller", "rl_time_extension", "--checkpoint-in", ckpt.to_str().unwrap()];
    args.extend(["--fixed-greens", "20,20,20,20"]);
    args.extend(SHORT);
    let o = run(root.path(), &args);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o.stderr));
}

#[test]
fn failure_scenarios_report_failed_fraction() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("f");
    let mut args =
        vec!["run", "--scenario", "failure_a", "--failure-injection", "after_max", "--controller", "actuated"];
    args.extend(["--out", out.to_str().unwrap()]);
    args.extend(SHORT);
    let o = run(root.path(), &args);
    ok(&o);
    let stdout = text(&o.stdout);
    assert!(stdout.contains("sensor failures") && stdout.contains("stationary 0.167"), "{stdout}");
    assert!(std::fs::read_to_string(out.join("raw.csv")).unwrap().contains("failed_fraction"));
}

#[test]
fn default_output_lands_under_the_env_root() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["run", "--controller", "actuated", "--scenario", "low_demand"];
    args.extend(SHORT);
    ok(&run(root.path(), &args));
    let dir = root.path().join("run-low_demand-actuated-seed7");
    assert!(dir.join("raw.csv").exists(), "{:?}", std::fs::read_dir(root.path()).unwrap().collect::<Vec<_>>());
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 1);

    let exported = run(root.path(), &["scenarios", "export"]);
    ok(&exported);
    let scen = root.path().join("scenarios");
    assert_eq!(std::fs::read_dir(&scen).unwrap().count(), 9);
    let spec = std::fs::read_to_string(scen.join("incident_b.toml")).unwrap();
    assert!(spec.contains("incident_b"), "{spec}");
}

#[test]
fn scenario_list_names_the_library() {
    let root = tempfile::tempdir().unwrap();
    let o = run(root.path(), &["scenarios", "list"]);
    ok(&o);
    let s = text(&o.stdout);
    for name in [
        "base",
        "low_demand",
        "before_event",
        "after_event",
        "incident_a",
        "incident_b",
        "failure_a",
        "failure_b",
        "failure_c",
    ] {
        assert!(s.contains(name), "{name} missing from {s}");
    }
}

#[test]
fn unwritable_output_is_a_validation_error() {
    let root = tempfile::tempdir().unwrap();
    let blocker = root.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let mut args = vec!["run", "--controller", "actuated", "--out", target.to_str().unwrap()];
    args.extend(SHORT);
    assert_eq!(run(root.path(), &args).status.code(), Some(1));
}
