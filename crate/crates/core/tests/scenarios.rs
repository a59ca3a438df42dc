use std::path::PathBuf;

use vpnsim::harness::{dump_profile, run_batch, run_scenario};
use vpnsim::Scenario;

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

#[test]
fn every_example_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for f in std::fs::read_dir(dir).unwrap() {
        let p = f.unwrap().path();
        Scenario::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn lossy_dns_race_lands_most_of_the_time() {
    let batch = run_scenario(&path("dns_hijack_15s.ini"), None).unwrap();
    let s = &batch.summary;
    assert_eq!(s.runs, 10);
    assert!((0.4..=0.95).contains(&s.success_rate), "{}", batch.to_text());
    for (_, r) in batch.reports.iter().filter(|(_, r)| !r.success) {
        assert_eq!(r.failure_reason.unwrap().label(), "timeout_expired");
    }
}

#[test]
fn batches_repeat_and_do_not_depend_on_seed_order() {
    let p = path("infer_tcp.ini");
    let a = run_scenario(&p, Some(&[4, 5, 6])).unwrap();
    let b = run_scenario(&p, Some(&[4, 5, 6])).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = run_scenario(&p, Some(&[6, 4, 5])).unwrap();
    for (seed, report) in &a.reports {
        let other = &c.reports.iter().find(|(s, _)| s == seed).unwrap().1;
        assert_eq!(report, other);
    }
    assert_eq!(a.summary, c.summary);
}

#[test]
fn unknown_profile_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.ini");
    std::fs::write(&f, "[scenario]\nname = x\nattack = dos\nprofile = hyperwall\n").unwrap();
    let err = run_scenario(&f, None).unwrap_err().to_string();
    assert!(err.contains("profile"), "{err}");
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn dumped_profiles_carry_their_parameters() {
    let nf = dump_profile("netfilter_pre").unwrap();
    for line in [
        "rst_window = 65536",
        "rst_reduced_timeout_s = 10",
        "rst_restore_timeout_s = 300",
    ] {
        assert!(nf.contains(line), "{nf}");
    }
    let pf = dump_profile("pf_rand").unwrap();
    assert!(pf.contains("random_range = 50001-65535"), "{pf}");
    assert!(pf.contains("close_s = 90"), "{pf}");
    let ipf = dump_profile("ipfilter").unwrap();
    assert!(ipf.contains("table_limit = 30000"), "{ipf}");
    assert!(ipf.contains("table_limit = 256"), "{ipf}");
    assert!(dump_profile("hyperwall").is_err());
}

#[test]
fn proxied_ports_hide_the_victim_from_inference() {
    let mut scn = Scenario::load(&path("infer_tcp.ini")).unwrap();
    scn.sessions = 1;
    scn.settings.target_port = 21;
    let open = run_batch(&scn, &[1, 2]).unwrap();
    assert_eq!(open.summary.successes, 2, "{}", open.to_text());
    scn.gateway.proxy_ports.insert(21);
    let proxied = run_batch(&scn, &[1, 2]).unwrap();
    assert_eq!(proxied.summary.successes, 0, "{}", proxied.to_text());
}

#[test]
fn resolver_redirect_defeats_the_dns_attack() {
    let batch = run_scenario(&path("defense_dns_redirect.ini"), None).unwrap();
    assert_eq!(batch.summary.successes, 0);
    for (_, r) in &batch.reports {
        assert_eq!(r.failure_reason.unwrap().label(), "redirected");
    }
}

#[test]
fn strict_rst_checking_stops_the_hijack() {
    let batch = run_scenario(&path("defense_strict_rst.ini"), None).unwrap();
    assert_eq!(batch.summary.successes, 0);
    for (_, r) in &batch.reports {
        assert_eq!(r.failure_reason.unwrap().label(), "rst_rejected");
    }
}

#[test]
fn a_sweep_wider_than_the_window_lands_only_sometimes() {
    let batch = run_scenario(&path("stride_mismatch.ini"), None).unwrap();
    let n = batch.summary.successes;
    assert!(0 < n && n < 12, "{}", batch.to_text());
}
