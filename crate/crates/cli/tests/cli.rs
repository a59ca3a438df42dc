use std::path::PathBuf;
use std::process::{Command, Output};

fn vpnsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpnsim")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scenario(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
        .display()
        .to_string()
}

#[test]
fn help_and_version_exit_cleanly() {
    let o = vpnsim(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("dump-profile"));
    assert_eq!(vpnsim(&["--version"]).status.code(), Some(0));
}

#[test]
fn bad_usage_exits_1() {
    assert_eq!(vpnsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vpnsim(&["attack", "dos", "--drop", "1.5"]).status.code(), Some(1));
    let o = vpnsim(&["attack", "dos", "--profile", "hyperwall"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown profile"));
    assert_eq!(vpnsim(&["run", "/nonexistent/x.ini"]).status.code(), Some(1));
}

#[test]
fn dump_profile_prints_config_text() {
    let o = vpnsim(&["dump-profile", "ipfw_pre"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("[profile.ipfw_pre]"), "{text}");
    assert!(text.contains("rst_policy = strict"));
    assert!(text.contains("table_limit = 16384"));
}

#[test]
fn attack_prints_report_and_summary() {
    let o = vpnsim(&["--seed", "3", "attack", "dos", "--profile", "netfilter_pre"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("seed=3 report attack=dos success=true"), "{text}");
    assert!(text.contains("summary runs=1 successes=1"), "{text}");
}

#[test]
fn run_writes_one_trace_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.log");
    let o = vpnsim(&[
        "--trace",
        trace.to_str().unwrap(),
        "run",
        &scenario("dos_netfilter.ini"),
        "--seeds",
        "1,2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("summary runs=2 successes=2"));
    for seed in [1, 2] {
        let body = std::fs::read_to_string(dir.path().join(format!("t.seed{seed}.log"))).unwrap();
        let first = body.lines().next().unwrap();
        assert!(
            first.starts_with("t=") && first.contains(" host=") && first.contains(" verb="),
            "{first}"
        );
    }
}

#[test]
fn traces_repeat_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        let o = vpnsim(&[
            "--trace",
            p.to_str().unwrap(),
            "--seed",
            seed,
            "attack",
            "infer",
            "--proto",
            "dns",
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read(p).unwrap()
    };
    let a = read("a", "5");
    assert_eq!(a, read("b", "5"));
    assert_ne!(a, read("c", "6"));
}
