//! Scenario configs and the standard world they run in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;

use rand::Rng;

use crate::attacks::{
    full_chain, infer_dns_port, infer_tcp_port, AcquireOptions, AttackReport, ChainTarget, DnsInjectOptions,
    ExhaustOptions, HijackMode, InferOptions, InjectOptions, TxidOrder, SWEEP_STRIDE,
};
use crate::config::{parse_bool, parse_list, parse_value, ConfigError, Entry, Ini, Section};
use crate::conntrack::FrameworkProfile;
use crate::endpoints::{ClientBehavior, ResolverBehavior, ServerBehavior, DEFAULT_RESOLVER};
use crate::gateway::GatewayConfig;
use crate::netsim::{HostId, Sim, SimConfig, SimError, Trace};
use crate::types::{Addr, Endpoint, PortRange};

pub const SERVER_ADDR: Addr = Addr::new(203, 0, 113, 10);
pub const ATTACKER_ADDR: Addr = Addr::new(192, 0, 2, 66);
pub const REAL_ANSWER: Addr = Addr::new(93, 184, 216, 34);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackKind {
    Dos,
    InferTcp,
    InferDns,
    /// Inference, SEQ/ACK acquisition and data injection toward the victim.
    TcpHijack,
    /// Inference, SEQ/ACK acquisition and impersonation toward the server.
    FtpHijack,
    DnsHijack,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Dos,
        AttackKind::InferTcp,
        AttackKind::InferDns,
        AttackKind::TcpHijack,
        AttackKind::FtpHijack,
        AttackKind::DnsHijack,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AttackKind::Dos => "dos",
            AttackKind::InferTcp => "infer_tcp",
            AttackKind::InferDns => "infer_dns",
            AttackKind::TcpHijack => "tcp_hijack",
            AttackKind::FtpHijack => "ftp_hijack",
            AttackKind::DnsHijack => "dns_hijack",
        }
    }

    fn default_port(&self) -> u16 {
        match self {
            AttackKind::FtpHijack => 21,
            _ => 80,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| format!("unknown attack {s:?}"))
    }
}

/// A fixed rate or a per-run uniform draw, written `6000` or `4000-8000`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Fixed(f64),
    Uniform(f64, f64),
}

impl RateSpec {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            RateSpec::Fixed(r) => r,
            RateSpec::Uniform(lo, hi) => rng.gen_range(lo..hi),
        }
    }
}

impl FromStr for RateSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| -> Result<f64, String> {
            let v: f64 = t.trim().parse().map_err(|e| format!("{e}"))?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(format!("rate must be positive, got {t}"))
            }
        };
        match s.split_once('-') {
            Some((a, b)) => {
                let (lo, hi) = (num(a)?, num(b)?);
                if lo >= hi {
                    return Err(format!("empty rate range {s}"));
                }
                Ok(RateSpec::Uniform(lo, hi))
            }
            None => num(s).map(RateSpec::Fixed),
        }
    }
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateSpec::Fixed(r) => write!(f, "{r}"),
            RateSpec::Uniform(a, b) => write!(f, "{a}-{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    pub target_port: u16,
    pub flood_rate_pps: f64,
    pub probe_ttl: u8,
    pub escalate: bool,
    pub refresh_period_s: Option<f64>,
    pub hold_s: f64,
    pub check_window_s: f64,
    pub scan_range: PortRange,
    pub infer_rate_pps: f64,
    pub rescreen: u32,
    pub stride: u32,
    pub sweep_rate_pps: f64,
    pub max_attempts: u32,
    pub retry_jitter_s: (f64, f64),
    pub inject_repeat_s: f64,
    pub inject_duration_s: f64,
    pub payload: String,
    pub dns_rate_pps: RateSpec,
    pub txid_order: TxidOrder,
    pub qname: String,
    pub forged_answer: Addr,
    /// Delay between the victim's activity starting and the attack.
    pub start_delay_s: f64,
}

impl AttackSettings {
    fn new(kind: AttackKind) -> Self {
        AttackSettings {
            target_port: kind.default_port(),
            flood_rate_pps: 100_000.0,
            probe_ttl: 2,
            escalate: false,
            refresh_period_s: None,
            hold_s: 0.0,
            check_window_s: 64.0,
            scan_range: PortRange::UNPRIVILEGED,
            infer_rate_pps: 35_000.0,
            rescreen: 2,
            stride: SWEEP_STRIDE,
            sweep_rate_pps: 120_000.0,
            max_attempts: 5,
            retry_jitter_s: (0.0, 2.0),
            inject_repeat_s: 0.01,
            inject_duration_s: 120.0,
            payload: "FORGED".into(),
            dns_rate_pps: RateSpec::Fixed(6000.0),
            txid_order: TxidOrder::Ascending,
            qname: "bank.example".into(),
            forged_answer: Addr::new(6, 6, 6, 6),
            start_delay_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub attack: AttackKind,
    pub seeds: Vec<u64>,
    pub drop_probability: f64,
    pub gateway: GatewayConfig,
    pub client: ClientBehavior,
    /// Victim TCP sessions, or outstanding DNS queries for DNS attacks.
    pub sessions: usize,
    pub resolver: ResolverBehavior,
    pub settings: AttackSettings,
}

fn err_at(e: &Entry, msg: impl fmt::Display) -> ConfigError {
    ConfigError::new(e.line, format!("bad value for \"{}\": {msg}", e.key))
}

fn unknown(e: &Entry, section: &str) -> ConfigError {
    ConfigError::new(e.line, format!("unknown key \"{}\" in [{section}]", e.key))
}

fn opt_f64(e: &Entry) -> Result<Option<f64>, ConfigError> {
    if e.value == "none" {
        Ok(None)
    } else {
        parse_value(e).map(Some)
    }
}

fn positive(e: &Entry) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(e)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(err_at(e, "must be positive"))
    }
}

impl Scenario {
    pub fn new(name: &str, attack: AttackKind, profile: FrameworkProfile) -> Self {
        let mut resolver = ResolverBehavior::default();
        resolver.zone.insert(AttackSettings::new(attack).qname, REAL_ANSWER);
        Scenario {
            name: name.to_string(),
            attack,
            seeds: vec![1],
            drop_probability: 0.0,
            gateway: GatewayConfig::new(profile),
            client: ClientBehavior::default(),
            sessions: 1,
            resolver,
            settings: AttackSettings::new(attack),
        }
    }

    pub fn load(path: &FsPath) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(0, format!("cannot read {}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ConfigError> {
        Scenario::from_ini(&Ini::parse(text)?)
    }

    pub fn from_ini(ini: &Ini) -> Result<Scenario, ConfigError> {
        for s in &ini.sections {
            if !["scenario", "profile", "gateway", "client", "resolver", "attack"].contains(&s.name.as_str()) {
                return Err(ConfigError::new(s.line, format!("unknown section [{}]", s.name)));
            }
        }
        let head = ini
            .section("scenario")
            .ok_or_else(|| ConfigError::new(0, "missing [scenario] section"))?;
        let need = |key: &str| {
            head.get(key)
                .ok_or_else(|| ConfigError::new(head.line, format!("[scenario] needs \"{key}\"")))
        };
        let attack_e = need("attack")?;
        let attack: AttackKind = parse_value(attack_e)?;
        let profile_e = need("profile")?;
        let profile = FrameworkProfile::builtin(&profile_e.value).ok_or_else(|| {
            ConfigError::new(
                profile_e.line,
                format!("unknown profile {:?} for key \"profile\"", profile_e.value),
            )
        })?;
        let mut scn = Scenario::new(&profile_e.value, attack, profile);
        for e in &head.entries {
            match e.key.as_str() {
                "attack" | "profile" => {}
                "name" => scn.name = e.value.clone(),
                "seeds" => scn.seeds = parse_list(e)?,
                "drop_probability" => {
                    let p: f64 = parse_value(e)?;
                    if !(0.0..1.0).contains(&p) {
                        return Err(err_at(e, "must lie in [0, 1)"));
                    }
                    scn.drop_probability = p;
                }
                _ => return Err(unknown(e, "scenario")),
            }
        }
        if scn.seeds.is_empty() {
            return Err(ConfigError::new(head.line, "seed list is empty"));
        }
        if let Some(s) = ini.section("profile") {
            for e in &s.entries {
                scn.gateway
                    .profile
                    .set(&e.key, &e.value)
                    .map_err(|err| ConfigError::new(e.line, err.to_string()))?;
            }
            scn.gateway
                .profile
                .validate()
                .map_err(|err| ConfigError::new(s.line, err.to_string()))?;
        }
        if let Some(s) = ini.section("gateway") {
            scn.apply_gateway(s)?;
        }
        if let Some(s) = ini.section("client") {
            scn.apply_client(s)?;
        }
        if let Some(s) = ini.section("resolver") {
            scn.apply_resolver(s)?;
        }
        if let Some(s) = ini.section("attack") {
            scn.apply_attack(s)?;
        }
        scn.gateway
            .validate()
            .map_err(|err| ConfigError::new(0, err.to_string()))?;
        Ok(scn)
    }

    fn apply_gateway(&mut self, s: &Section) -> Result<(), ConfigError> {
        let g = &mut self.gateway;
        for e in &s.entries {
            match e.key.as_str() {
                "public_addr" => g.public_addr = parse_value(e)?,
                "client_isolation" => g.client_isolation = parse_bool(e)?,
                "dns_redirect" => g.dns_redirect = if e.value == "none" { None } else { Some(parse_value(e)?) },
                "proxy_ports" => g.proxy_ports = parse_list::<u16>(e)?.into_iter().collect(),
                "proxy_conn_limit" => g.proxy_conn_limit = parse_value(e)?,
                _ => return Err(unknown(e, "gateway")),
            }
        }
        Ok(())
    }

    fn apply_client(&mut self, s: &Section) -> Result<(), ConfigError> {
        let c = &mut self.client;
        for e in &s.entries {
            match e.key.as_str() {
                "request_interval_s" => {
                    c.request_interval_s = opt_f64(e)?;
                    if c.request_interval_s.is_some_and(|v| v <= 0.0) {
                        return Err(err_at(e, "must be positive"));
                    }
                }
                "request_len" => c.request_len = parse_value(e)?,
                "dns_query_timeout_s" => c.dns_query_timeout_s = positive(e)?,
                "dns_retransmit_s" => c.dns_retransmit_s = opt_f64(e)?,
                "port_range" => c.port_range = parse_value(e)?,
                "connect_retries" => c.connect_retries = parse_value(e)?,
                "sessions" => {
                    self.sessions = parse_value(e)?;
                    if self.sessions == 0 {
                        return Err(err_at(e, "must be at least 1"));
                    }
                }
                _ => return Err(unknown(e, "client")),
            }
        }
        Ok(())
    }

    fn apply_resolver(&mut self, s: &Section) -> Result<(), ConfigError> {
        let r = &mut self.resolver;
        for e in &s.entries {
            match e.key.as_str() {
                "muted" => r.muted = parse_bool(e)?,
                "response_delay_s" => r.response_delay_s = parse_value(e)?,
                "answer_ttl_s" => r.answer_ttl_s = parse_value(e)?,
                _ => return Err(unknown(e, "resolver")),
            }
        }
        Ok(())
    }

    fn apply_attack(&mut self, s: &Section) -> Result<(), ConfigError> {
        let a = &mut self.settings;
        for e in &s.entries {
            match e.key.as_str() {
                "target_port" => a.target_port = parse_value(e)?,
                "flood_rate_pps" => a.flood_rate_pps = positive(e)?,
                "probe_ttl" => {
                    a.probe_ttl = parse_value(e)?;
                    if a.probe_ttl == 0 {
                        return Err(err_at(e, "must be at least 1"));
                    }
                }
                "escalate" => a.escalate = parse_bool(e)?,
                "refresh_period_s" => a.refresh_period_s = opt_f64(e)?,
                "hold_s" => a.hold_s = parse_value(e)?,
                "check_window_s" => a.check_window_s = positive(e)?,
                "scan_range" => a.scan_range = parse_value(e)?,
                "infer_rate_pps" => a.infer_rate_pps = positive(e)?,
                "rescreen" => a.rescreen = parse_value(e)?,
                "stride" => {
                    a.stride = parse_value(e)?;
                    if a.stride == 0 {
                        return Err(err_at(e, "must be at least 1"));
                    }
                }
                "sweep_rate_pps" => a.sweep_rate_pps = positive(e)?,
                "max_attempts" => a.max_attempts = parse_value(e)?,
                "retry_jitter_s" => {
                    let v: Vec<f64> = parse_list(e)?;
                    match v[..] {
                        [lo, hi] if 0.0 <= lo && lo <= hi => a.retry_jitter_s = (lo, hi),
                        _ => return Err(err_at(e, "expected lo, hi")),
                    }
                }
                "inject_repeat_s" => a.inject_repeat_s = positive(e)?,
                "inject_duration_s" => a.inject_duration_s = positive(e)?,
                "payload" => a.payload = e.value.clone(),
                "dns_rate_pps" => a.dns_rate_pps = parse_value(e)?,
                "txid_order" => {
                    a.txid_order = match e.value.as_str() {
                        "ascending" => TxidOrder::Ascending,
                        "shuffled" => TxidOrder::Shuffled,
                        _ => return Err(err_at(e, "expected ascending or shuffled")),
                    }
                }
                "qname" => a.qname = e.value.clone(),
                "forged_answer" => a.forged_answer = parse_value(e)?,
                "start_delay_s" => a.start_delay_s = parse_value(e)?,
                _ => return Err(unknown(e, "attack")),
            }
        }
        self.resolver.zone = BTreeMap::from([(a.qname.clone(), REAL_ANSWER)]);
        Ok(())
    }

    pub fn target(&self) -> Endpoint {
        Endpoint::new(SERVER_ADDR, self.settings.target_port)
    }

    pub fn exhaust_options(&self, victim: HostId) -> ExhaustOptions {
        let a = &self.settings;
        ExhaustOptions {
            target: self.target(),
            victim,
            ports: PortRange::ALL,
            rate_pps: a.flood_rate_pps,
            probe_ttl: a.probe_ttl,
            escalate: a.escalate,
            refresh_period_s: a.refresh_period_s,
            hold_s: a.hold_s,
            check_window_s: a.check_window_s,
        }
    }

    pub fn infer_options(&self) -> InferOptions {
        let a = &self.settings;
        InferOptions {
            ports: a.scan_range,
            rate_pps: a.infer_rate_pps,
            probe_ttl: a.probe_ttl,
            rescreen: a.rescreen,
            ..InferOptions::default()
        }
    }

    /// The attacker knows which framework it faces and waits out its
    /// post-RST timeout plus a margin.
    pub fn acquire_options(&self) -> AcquireOptions {
        let a = &self.settings;
        AcquireOptions {
            stride: a.stride,
            rate_pps: a.sweep_rate_pps,
            evict_wait_s: self.gateway.profile.rst_eviction_s() as f64 + 0.5,
            max_attempts: a.max_attempts,
            retry_jitter_s: a.retry_jitter_s,
            ..AcquireOptions::default()
        }
    }

    pub fn inject_options(&self, victim: HostId) -> InjectOptions {
        let a = &self.settings;
        InjectOptions {
            victim,
            self_evict_wait_s: self.gateway.profile.rst_eviction_s() as f64 + 0.5,
            repeat_every_s: a.inject_repeat_s,
            duration_s: a.inject_duration_s,
            rst_ttl: None,
        }
    }
}

/// One simulation populated with the standard cast.
pub struct World {
    pub sim: Sim,
    pub victim: HostId,
    pub attacker: HostId,
    pub server: HostId,
    pub resolver: HostId,
    pub redirect: Option<HostId>,
}

impl World {
    pub fn build(scn: &Scenario, seed: u64, trace: Trace) -> Result<World, SimError> {
        let mut cfg = SimConfig::new(seed, scn.gateway.clone());
        cfg.drop_probability = scn.drop_probability;
        cfg.trace = trace;
        let mut sim = Sim::new(cfg);
        let server = sim.add_server("server", SERVER_ADDR, ServerBehavior::default())?;
        let resolver = sim.add_resolver("resolver", DEFAULT_RESOLVER.addr, scn.resolver.clone())?;
        let redirect = match scn.gateway.dns_redirect {
            Some(ep) if ep.addr != DEFAULT_RESOLVER.addr => {
                let mut b = scn.resolver.clone();
                b.muted = false;
                Some(sim.add_resolver("redirect", ep.addr, b)?)
            }
            _ => None,
        };
        let victim = sim.add_client("victim", scn.client.clone())?;
        let attacker = sim.add_attacker("attacker", ATTACKER_ADDR)?;
        Ok(World {
            sim,
            victim,
            attacker,
            server,
            resolver,
            redirect,
        })
    }

    /// Start the victim's sessions or lookups and let them settle before the
    /// attack. Returns the victim's local ports.
    pub fn start_victim(&mut self, scn: &Scenario) -> Vec<u16> {
        let mut ports = Vec::new();
        match scn.attack {
            AttackKind::Dos => {}
            AttackKind::InferDns | AttackKind::DnsHijack => {
                for _ in 0..scn.sessions {
                    ports.push(self.sim.client_dns_query(self.victim, &scn.settings.qname));
                }
                self.sim.run_for(scn.settings.start_delay_s);
            }
            AttackKind::InferTcp | AttackKind::TcpHijack | AttackKind::FtpHijack => {
                for _ in 0..scn.sessions {
                    ports.push(self.sim.client_connect(self.victim, scn.target(), None));
                }
                self.sim.run_for(1.0 + scn.settings.start_delay_s);
            }
        }
        ports
    }

    pub fn run_attack(&mut self, scn: &Scenario) -> AttackReport {
        let a = &scn.settings;
        let sim = &mut self.sim;
        match scn.attack {
            AttackKind::Dos => full_chain(sim, self.attacker, &ChainTarget::Dos(scn.exhaust_options(self.victim))),
            AttackKind::InferTcp => infer_tcp_port(sim, self.attacker, scn.target(), &scn.infer_options()),
            AttackKind::InferDns => infer_dns_port(sim, self.attacker, scn.client.resolver, &scn.infer_options()),
            AttackKind::TcpHijack | AttackKind::FtpHijack => {
                let payload = a.payload.as_bytes().to_vec();
                let mode = if scn.attack == AttackKind::TcpHijack {
                    HijackMode::Inject {
                        payload,
                        opts: scn.inject_options(self.victim),
                    }
                } else {
                    HijackMode::Impersonate { payload }
                };
                let target = ChainTarget::TcpHijack {
                    server: scn.target(),
                    infer: scn.infer_options(),
                    acquire: scn.acquire_options(),
                    mode,
                };
                full_chain(sim, self.attacker, &target)
            }
            AttackKind::DnsHijack => {
                let rate = a.dns_rate_pps.draw(&mut sim.rng_mut().jitter);
                let mut inject = DnsInjectOptions::new(self.victim, &a.qname, a.forged_answer);
                inject.rate_pps = rate;
                inject.order = a.txid_order;
                let target = ChainTarget::DnsHijack {
                    resolver: scn.client.resolver,
                    infer: scn.infer_options(),
                    inject,
                };
                full_chain(sim, self.attacker, &target)
            }
        }
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        self.sim.gateway().table().check_invariants()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[scenario]\nattack = dns_hijack\nprofile = netfilter_pre\nseeds = 3, 4\n";

    #[test]
    fn minimal_config() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.attack, AttackKind::DnsHijack);
        assert_eq!(s.seeds, vec![3, 4]);
        assert_eq!(s.gateway.profile.name, "netfilter_pre");
    }

    #[test]
    fn unknown_profile_names_key() {
        let e = Scenario::parse("[scenario]\nattack = dos\nprofile = nope\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.msg.contains("\"profile\""), "{e}");
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let text = format!("{MINIMAL}[client]\nsessions = 2\nbogus = 1\n");
        let e = Scenario::parse(&text).unwrap_err();
        assert_eq!(e.line, 7);
        assert!(e.msg.contains("bogus"));
    }

    #[test]
    fn overrides_apply() {
        let text = format!(
            "{MINIMAL}[profile]\nrst_policy = strict\n[gateway]\nproxy_ports = 80, 443\n[attack]\ndns_rate_pps = 4000-8000\n"
        );
        let s = Scenario::parse(&text).unwrap();
        assert_eq!(s.gateway.profile.rst_policy.label(), "strict");
        assert!(s.gateway.proxy_ports.contains(&80));
        assert_eq!(s.settings.dns_rate_pps, RateSpec::Uniform(4000.0, 8000.0));
    }

    #[test]
    fn empty_seed_list_rejected() {
        let e = Scenario::parse("[scenario]\nattack = dos\nprofile = pf_pre\nseeds =\n").unwrap_err();
        assert!(e.msg.contains("seed"));
    }
}
