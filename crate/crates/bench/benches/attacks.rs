use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use vpnsim::attacks::{rst_sweep_seqs, SWEEP_STRIDE};
use vpnsim::harness::run_seed;
use vpnsim::netsim::Trace;
use vpnsim::{AttackKind, FrameworkProfile, PortRange, Scenario};

fn scenario(kind: AttackKind, profile: &str) -> Scenario {
    let mut s = Scenario::new(profile, kind, FrameworkProfile::builtin(profile).unwrap());
    s.settings.scan_range = PortRange::EPHEMERAL;
    s
}

fn sweep(c: &mut Criterion) {
    c.bench_function("rst_sweep_seqs", |b| {
        b.iter(|| rst_sweep_seqs(black_box(SWEEP_STRIDE)).collect::<Vec<u32>>())
    });
}

fn runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run_seed");
    g.sample_size(10);
    for (label, kind, profile) in [
        ("dos_netfilter_pre", AttackKind::Dos, "netfilter_pre"),
        ("infer_tcp_netfilter_pre", AttackKind::InferTcp, "netfilter_pre"),
        ("infer_dns_pf_pre", AttackKind::InferDns, "pf_pre"),
    ] {
        let scn = scenario(kind, profile);
        g.bench_function(label, |b| {
            b.iter(|| run_seed(&scn, 1, Trace::off()).unwrap().report.success)
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, runs);
criterion_main!(benches);
