use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use vpnsim::config::ConfigError;
use vpnsim::harness::{self, HarnessError, MATRIX_SEEDS};
use vpnsim::netsim::{Trace, TraceSink};
use vpnsim::scenario::RateSpec;
use vpnsim::{AttackKind, FrameworkProfile, PortRange, Scenario};

/// Simulate VPN gateway connection tracking and the attacks that abuse it.
#[derive(Debug, Parser)]
#[command(name = "vpnsim", version)]
struct Cli {
    /// Write trace records to this file ("-" for standard output).
    #[arg(long, global = true, value_name = "FILE")]
    trace: Option<PathBuf>,

    /// RNG seed for single runs; overrides a scenario's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run all three attacks against every built-in profile.
    Matrix {
        #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
        seeds: Option<Vec<u64>>,
    },
    /// Run a scenario file over a list of seeds.
    Run {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', value_name = "SEEDS")]
        seeds: Option<Vec<u64>>,
    },
    /// Print a built-in profile as config text.
    DumpProfile { name: String },
    /// Run one attack against one profile.
    Attack {
        #[arg(value_enum)]
        kind: AttackCmd,
        #[command(flatten)]
        opts: AttackArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AttackCmd {
    Dos,
    Infer,
    Hijack,
    Dns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Proto {
    Tcp,
    Dns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HijackStyle {
    /// Plant data in the victim's stream.
    Inject,
    /// Talk to the server as the victim.
    Impersonate,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long, default_value = "netfilter_pre")]
    profile: String,
    /// Target server port (defaults to 80, or 21 for impersonation).
    #[arg(long)]
    port: Option<u16>,
    /// What `infer` looks for.
    #[arg(long, value_enum, default_value_t = Proto::Tcp)]
    proto: Proto,
    #[arg(long, value_enum, default_value_t = HijackStyle::Impersonate)]
    mode: HijackStyle,
    /// Victim sessions, or parallel lookups for DNS.
    #[arg(long, default_value_t = 1)]
    sessions: usize,
    /// Seconds between the victim's requests; idle if unset.
    #[arg(long)]
    interval: Option<f64>,
    #[arg(long)]
    dns_timeout: Option<f64>,
    /// Forged DNS answers per second, fixed or "lo-hi".
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    scan_range: Option<String>,
    #[arg(long)]
    max_attempts: Option<u32>,
    #[arg(long)]
    drop: Option<f64>,
    /// Keep the resolver from ever answering.
    #[arg(long)]
    mute_resolver: bool,
    /// Push flooded entries to ESTABLISHED.
    #[arg(long)]
    escalate: bool,
    /// Re-send the flood this often (seconds).
    #[arg(long)]
    refresh: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    hold: f64,
}

/// Errors that map to the non-zero exit codes.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    Invariant(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Invariant(_) => 2,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Invariant { .. } => Failure::Invariant(e.into()),
            _ => Failure::Config(e.into()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn open_trace(path: &Path) -> anyhow::Result<Trace> {
    let sink: Box<dyn Write + Send> = if path == Path::new("-") {
        Box::new(io::stdout())
    } else {
        let f = File::create(path).with_context(|| format!("cannot create trace file {}", path.display()))?;
        Box::new(BufWriter::new(f))
    };
    Ok(Trace::new(TraceSink::Writer(sink)))
}

/// Trace path for one seed of a multi-seed run.
fn seed_trace_path(path: &Path, seed: u64, many: bool) -> PathBuf {
    if !many || path == Path::new("-") {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.seed{seed}.{ext}"),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

fn run_seeds(scn: &Scenario, seeds: &[u64], trace: Option<&Path>) -> Result<String, Failure> {
    let Some(trace) = trace else {
        return Ok(harness::run_batch(scn, seeds)?.to_text());
    };
    let mut reports = Vec::new();
    for &seed in seeds {
        let t = open_trace(&seed_trace_path(trace, seed, seeds.len() > 1))?;
        let run = harness::run_seed(scn, seed, t)?;
        reports.push((seed, run.report));
    }
    let summary = vpnsim::Summary::of(reports.iter().map(|(_, r)| r));
    Ok(harness::Batch { reports, summary }.to_text())
}

fn attack_scenario(kind: AttackCmd, a: &AttackArgs) -> Result<Scenario, Failure> {
    let profile = FrameworkProfile::builtin(&a.profile).ok_or_else(|| {
        anyhow::anyhow!(
            "unknown profile {:?} (known: {})",
            a.profile,
            FrameworkProfile::BUILTIN_NAMES.join(", ")
        )
    })?;
    let attack = match (kind, a.proto, a.mode) {
        (AttackCmd::Dos, ..) => AttackKind::Dos,
        (AttackCmd::Infer, Proto::Tcp, _) => AttackKind::InferTcp,
        (AttackCmd::Infer, Proto::Dns, _) => AttackKind::InferDns,
        (AttackCmd::Hijack, _, HijackStyle::Inject) => AttackKind::TcpHijack,
        (AttackCmd::Hijack, _, HijackStyle::Impersonate) => AttackKind::FtpHijack,
        (AttackCmd::Dns, ..) => AttackKind::DnsHijack,
    };
    let mut scn = Scenario::new(&a.profile, attack, profile);
    scn.sessions = a.sessions;
    if let Some(p) = a.port {
        scn.settings.target_port = p;
    }
    scn.client.request_interval_s = a.interval;
    if let Some(t) = a.dns_timeout {
        scn.client.dns_query_timeout_s = t;
    }
    if let Some(r) = &a.rate {
        scn.settings.dns_rate_pps = r.parse::<RateSpec>().map_err(|e| anyhow::anyhow!("--rate: {e}"))?;
    }
    if let Some(r) = &a.scan_range {
        scn.settings.scan_range = r
            .parse::<PortRange>()
            .map_err(|e| anyhow::anyhow!("--scan-range: {e}"))?;
    }
    if let Some(n) = a.max_attempts {
        scn.settings.max_attempts = n;
    }
    if let Some(p) = a.drop {
        if !(0.0..1.0).contains(&p) {
            return Err(anyhow::anyhow!("--drop must lie in [0, 1)").into());
        }
        scn.drop_probability = p;
    }
    scn.resolver.muted = a.mute_resolver;
    scn.settings.escalate = a.escalate;
    scn.settings.refresh_period_s = a.refresh;
    scn.settings.hold_s = a.hold;
    Ok(scn)
}

fn run(cli: Cli) -> Result<String, Failure> {
    let trace = cli.trace.as_deref();
    match cli.command {
        Command::Matrix { seeds } => {
            let seeds = seeds.unwrap_or_else(|| MATRIX_SEEDS.to_vec());
            let mut out = harness::matrix_header();
            out.push('\n');
            for row in harness::matrix(&seeds)? {
                out.push_str(&row.to_string());
                out.push('\n');
            }
            Ok(out)
        }
        Command::Run { scenario, seeds } => {
            let scn = Scenario::load(&scenario)?;
            let seeds = match (seeds, cli.seed) {
                (Some(s), _) => s,
                (None, Some(s)) => vec![s],
                (None, None) => scn.seeds.clone(),
            };
            if seeds.is_empty() {
                return Err(anyhow::anyhow!("seed list is empty").into());
            }
            run_seeds(&scn, &seeds, trace)
        }
        Command::DumpProfile { name } => Ok(harness::dump_profile(&name)?),
        Command::Attack { kind, opts } => {
            let scn = attack_scenario(kind, &opts)?;
            run_seeds(&scn, &[cli.seed.unwrap_or(1)], trace)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            let (Failure::Config(e) | Failure::Invariant(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariant_violations_exit_2() {
        let f = Failure::from(HarnessError::Invariant {
            seed: 3,
            msg: "dangling index".into(),
        });
        assert_eq!(f.code(), 2);
        assert_eq!(Failure::from(ConfigError::new(4, "bad")).code(), 1);
    }

    #[test]
    fn per_seed_trace_names() {
        let p = Path::new("/tmp/run.trace");
        assert_eq!(seed_trace_path(p, 7, false), p);
        assert_eq!(seed_trace_path(p, 7, true), Path::new("/tmp/run.seed7.trace"));
        assert_eq!(seed_trace_path(Path::new("-"), 7, true), Path::new("-"));
    }

    #[test]
    fn attack_options_map_to_kinds() {
        let cli = Cli::try_parse_from(["vpnsim", "attack", "infer", "--proto", "dns"]).unwrap();
        let Command::Attack { kind, opts } = cli.command else {
            panic!("not an attack");
        };
        assert_eq!(attack_scenario(kind, &opts).unwrap().attack, AttackKind::InferDns);
        let cli = Cli::try_parse_from(["vpnsim", "attack", "hijack", "--mode", "inject", "--profile", "nope"]).unwrap();
        let Command::Attack { kind, opts } = cli.command else {
            panic!("not an attack");
        };
        assert!(attack_scenario(kind, &opts).is_err());
    }
}
