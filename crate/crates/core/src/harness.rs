//! Seed batches, the framework matrix and profile dumps.

use std::fmt;

use rayon::prelude::*;

use crate::attacks::AttackReport;
use crate::config::ConfigError;
use crate::conntrack::{FrameworkProfile, PortAllocation};
use crate::netsim::{SimError, Trace};
use crate::scenario::{AttackKind, Scenario, World};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation setup failed: {0}")]
    Sim(#[from] SimError),
    #[error("invariant violated (seed {seed}): {msg}")]
    Invariant { seed: u64, msg: String },
    #[error("trace output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub report: AttackReport,
    pub trace: Trace,
}

/// Run one seed of a scenario from a fresh world.
pub fn run_seed(scn: &Scenario, seed: u64, trace: Trace) -> Result<SeedRun, HarnessError> {
    let mut world = World::build(scn, seed, trace)?;
    world.start_victim(scn);
    let report = world.run_attack(scn);
    world
        .check_invariants()
        .map_err(|msg| HarnessError::Invariant { seed, msg })?;
    let mut trace = std::mem::replace(world.sim.trace_mut(), Trace::off());
    trace.finish()?;
    Ok(SeedRun { seed, report, trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_virtual_s: f64,
    pub mean_packets: f64,
}

impl Summary {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a AttackReport>) -> Summary {
        let (mut runs, mut successes, mut vt, mut pk) = (0usize, 0usize, 0.0, 0.0);
        for r in reports {
            runs += 1;
            successes += r.success as usize;
            vt += r.virtual_s();
            pk += r.packets_sent() as f64;
        }
        let n = runs.max(1) as f64;
        Summary {
            runs,
            successes,
            success_rate: successes as f64 / n,
            mean_virtual_s: vt / n,
            mean_packets: pk / n,
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "summary runs={} successes={} success_rate={:.4} mean_virtual_s={:.6} mean_packets={:.1}",
            self.runs, self.successes, self.success_rate, self.mean_virtual_s, self.mean_packets
        )
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub reports: Vec<(u64, AttackReport)>,
    pub summary: Summary,
}

impl Batch {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (seed, r) in &self.reports {
            s.push_str(&format!("seed={seed} "));
            s.push_str(&r.to_text());
        }
        s.push_str(&self.summary.to_string());
        s.push('\n');
        s
    }
}

/// One independent simulation per seed; results come back in seed order.
pub fn run_batch(scn: &Scenario, seeds: &[u64]) -> Result<Batch, HarnessError> {
    let runs: Vec<Result<(u64, AttackReport), HarnessError>> = seeds
        .par_iter()
        .map(|&seed| run_seed(scn, seed, Trace::off()).map(|r| (seed, r.report)))
        .collect();
    let reports = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = Summary::of(reports.iter().map(|(_, r)| r));
    Ok(Batch { reports, summary })
}

/// Load a scenario file and run it, over `seeds` if given or else the
/// file's own seed list.
pub fn run_scenario(path: &std::path::Path, seeds: Option<&[u64]>) -> Result<Batch, HarnessError> {
    let scn = Scenario::load(path)?;
    let seeds = seeds.map_or_else(|| scn.seeds.clone(), <[u64]>::to_vec);
    run_batch(&scn, &seeds)
}

pub const MATRIX_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixRow {
    pub profile: String,
    pub framework: String,
    pub allocation: &'static str,
    pub dos_vulnerable: bool,
    pub tcp_hijack_vulnerable: bool,
    pub dns_hijack_vulnerable: bool,
}

impl MatrixRow {
    pub fn cells(&self) -> (bool, bool, bool) {
        (
            self.dos_vulnerable,
            self.tcp_hijack_vulnerable,
            self.dns_hijack_vulnerable,
        )
    }
}

fn mark(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl fmt::Display for MatrixRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<10} {:<12} {:<5} {:<10} {:<10}",
            self.framework,
            self.allocation,
            mark(self.dos_vulnerable),
            mark(self.tcp_hijack_vulnerable),
            mark(self.dns_hijack_vulnerable)
        )
    }
}

pub fn matrix_header() -> String {
    format!(
        "{:<10} {:<12} {:<5} {:<10} {:<10}",
        "framework", "allocation", "dos", "tcp_hijack", "dns_hijack"
    )
}

/// The three matrix probes for one gateway configuration.
pub fn matrix_scenarios(base: &Scenario) -> [Scenario; 3] {
    let profile = base.gateway.profile.clone();
    let with = |kind: AttackKind| {
        let mut s = Scenario::new(&profile.name, kind, profile.clone());
        s.gateway = base.gateway.clone();
        s
    };
    let dos = with(AttackKind::Dos);
    // Idle long-lived session, taken over and used to talk to the server.
    let tcp = with(AttackKind::FtpHijack);
    // A lookup that stays open long enough for a rate-limited inference.
    let mut dns = with(AttackKind::DnsHijack);
    dns.client.dns_query_timeout_s = 300.0;
    dns.client.dns_retransmit_s = Some(5.0);
    dns.resolver.muted = true;
    [dos, tcp, dns]
}

/// Majority vote over `seeds` for each of the three attacks.
pub fn matrix_row(base: &Scenario, seeds: &[u64]) -> Result<MatrixRow, HarnessError> {
    let scns = matrix_scenarios(base);
    let jobs: Vec<(usize, u64)> = (0..3).flat_map(|k| seeds.iter().map(move |&s| (k, s))).collect();
    let results: Vec<Result<(usize, bool), HarnessError>> = jobs
        .par_iter()
        .map(|&(k, seed)| run_seed(&scns[k], seed, Trace::off()).map(|r| (k, r.report.success)))
        .collect();
    let mut wins = [0usize; 3];
    for r in results {
        let (k, ok) = r?;
        wins[k] += ok as usize;
    }
    let vote = |k: usize| 2 * wins[k] > seeds.len();
    let p = &base.gateway.profile;
    Ok(MatrixRow {
        profile: p.name.clone(),
        framework: p.framework.to_string(),
        allocation: match p.allocation {
            PortAllocation::Preservation => "preservation",
            PortAllocation::Random { .. } => "random",
        },
        dos_vulnerable: vote(0),
        tcp_hijack_vulnerable: vote(1),
        dns_hijack_vulnerable: vote(2),
    })
}

/// All ten built-in profiles.
pub fn matrix(seeds: &[u64]) -> Result<Vec<MatrixRow>, HarnessError> {
    FrameworkProfile::builtins()
        .into_iter()
        .map(|p| matrix_row(&Scenario::new(&p.name.clone(), AttackKind::Dos, p), seeds))
        .collect()
}

/// Canonical text for a built-in profile, or every profile of a framework.
pub fn dump_profile(name: &str) -> Result<String, ConfigError> {
    let found = FrameworkProfile::lookup(name);
    if found.is_empty() {
        return Err(ConfigError::new(0, format!("unknown profile {name:?}")));
    }
    Ok(found
        .iter()
        .map(FrameworkProfile::to_config)
        .collect::<Vec<_>>()
        .join("\n"))
}
